"""Null distribution of the post-model-selection test statistic.

Everything is expressed in the ``(rho, gamma)`` parametrisation, where
``rho`` is the correlation of the two unrestricted least-squares
estimators and ``gamma = sqrt(n) * beta / sigma_beta`` the scaled
nuisance parameter.  Under the null the statistic has the law of

    T' = (s W + rho Z) 1{|Z + gamma| > c} + (W - rho gamma / s) 1{|Z + gamma| <= c}

with ``s = sqrt(1 - rho**2)`` and ``W, Z`` independent standard normals.

Two cdf routes are provided.  ``method="exact"`` (the default) writes the
cdf through bivariate-normal orthant probabilities evaluated with Owen's T
function and is fully vectorised.  ``method="quadrature"`` integrates the
density numerically and is kept as an independent check.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import kernel
from .errors import DesignError, DomainError, PreconditionError, ConvergenceError

__all__ = [
    "ModelParams",
    "RegressionDesign",
    "TPrimeSample",
    "RHO_LIMIT",
    "density",
    "cdf",
    "quantile",
    "quantiles",
    "bvn_cdf",
    "make_stream",
    "sample_tprime",
    "gamma_from_beta",
    "simulate_regression_tstat",
]

RHO_LIMIT = 0.999
TAIL_HALFWIDTH = 12.0
_QUANTILE_RTOL = 1e-13


@dataclass(frozen=True)
class ModelParams:
    """Estimator correlation ``rho`` and model-selection cutoff ``c``."""

    rho: float
    cutoff: float

    def __post_init__(self):
        rho, cutoff = float(self.rho), float(self.cutoff)
        if not (math.isfinite(rho) and math.isfinite(cutoff)):
            raise DomainError("rho and cutoff must be finite")
        if abs(rho) > RHO_LIMIT:
            raise DomainError(f"|rho| must not exceed {RHO_LIMIT}, got {rho}")
        if cutoff <= 0:
            raise DomainError(f"cutoff must be positive, got {cutoff}")
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "cutoff", cutoff)

    @property
    def s(self) -> float:
        """``sqrt(1 - rho**2)``."""
        return math.sqrt((1.0 - self.rho) * (1.0 + self.rho))

    @property
    def shift_rate(self) -> float:
        """``rho / sqrt(1 - rho**2)``: location of the restricted component
        is ``-shift_rate * gamma``."""
        return self.rho / self.s

    def negated(self) -> "ModelParams":
        return ModelParams(-self.rho, self.cutoff)


@dataclass(frozen=True)
class TPrimeSample:
    """One draw (or an array of draws) of ``T'`` with its selection data."""

    t: np.ndarray | float
    gamma_hat: np.ndarray | float
    selected_unrestricted: np.ndarray | bool


def _finite(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def _check_level(v):
    v = float(v)
    if not 0.0 < v < 1.0:
        raise DomainError(f"level must lie strictly inside (0, 1), got {v}")
    return v


# ---------------------------------------------------------------- density

def density(params: ModelParams, gamma, u):
    """Density of the statistic at ``u`` (broadcasts over ``gamma`` and ``u``)."""
    gamma = _finite(gamma, "gamma")
    u = _finite(u, "u")
    if params.rho == 0.0:
        return _out(np.broadcast_to(_phi(u), np.broadcast_shapes(gamma.shape, u.shape)).copy())
    return _out(_density(params, gamma, u))


def _phi(u):
    return np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)


def _density(params, gamma, u):
    rho, c, s = params.rho, params.cutoff, params.s
    restricted = kernel._delta(gamma, c) * _phi(u + params.shift_rate * gamma)
    unrestricted = (1.0 - kernel._delta((gamma + rho * u) / s, c / s)) * _phi(u)
    return restricted + unrestricted


# -------------------------------------------------------- bivariate normal

def bvn_cdf(h, k, rho):
    """``P(X <= h, Y <= k)`` for standard bivariate normal with correlation ``rho``.

    Owen (1956): for ``h k != 0``

        L = (Phi(h) + Phi(k)) / 2 - T(h, a_h) - T(k, a_k) - 1{h k < 0} / 2,
        a_h = (k - rho h) / (h s),  a_k = (h - rho k) / (k s).

    The ``h = 0`` or ``k = 0`` cases use the limits
    ``Phi(k)/2 + T(k, rho/s)`` and ``1/4 + asin(rho) / (2 pi)``.
    """
    h, k = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    s = math.sqrt((1.0 - rho) * (1.0 + rho))
    out = np.empty(h.shape)
    hz, kz = h == 0.0, k == 0.0
    gen = ~hz & ~kz
    if gen.any():
        hg, kg = h[gen], k[gen]
        with np.errstate(over="ignore"):
            a_h = (kg - rho * hg) / (hg * s)
            a_k = (hg - rho * kg) / (kg * s)
        out[gen] = (
            0.5 * (special.ndtr(hg) + special.ndtr(kg))
            - special.owens_t(hg, a_h)
            - special.owens_t(kg, a_k)
            - np.where(hg * kg < 0.0, 0.5, 0.0)
        )
    only_h = hz & ~kz
    if only_h.any():
        kk = k[only_h]
        out[only_h] = 0.5 * special.ndtr(kk) + special.owens_t(kk, rho / s)
    only_k = kz & ~hz
    if only_k.any():
        hh = h[only_k]
        out[only_k] = 0.5 * special.ndtr(hh) + special.owens_t(hh, rho / s)
    both = hz & kz
    if both.any():
        out[both] = 0.25 + math.asin(rho) / (2.0 * math.pi)
    return out


# -------------------------------------------------------------------- cdf

def cdf(params: ModelParams, gamma, t, *, method: str = "exact"):
    """Cdf ``H_gamma(t)`` of the statistic.

    ``method="exact"`` (vectorised) uses

        H(t) = Delta(gamma, c) Phi(t + rho gamma / s) + Phi(t)
               - [L(t, c - gamma) - L(t, -c - gamma)],

    ``L`` being the bivariate normal cdf with correlation ``rho``.
    ``method="quadrature"`` integrates :func:`density` adaptively (scalar
    ``gamma`` and ``t`` only).
    """
    if method == "exact":
        gamma = _finite(gamma, "gamma")
        t = _finite(t, "t")
        if params.rho == 0.0:
            return _out(np.broadcast_to(special.ndtr(t), np.broadcast_shapes(gamma.shape, t.shape)).copy())
        return _out(_cdf_exact(params, gamma, t))
    if method == "quadrature":
        return cdf_quadrature(params, float(gamma), float(t))
    raise DomainError(f"unknown cdf method {method!r}")


def _cdf_exact(params, gamma, t):
    rho, c = params.rho, params.cutoff
    band = bvn_cdf(t, c - gamma, rho) - bvn_cdf(t, -c - gamma, rho)
    h = kernel._delta(gamma, c) * special.ndtr(t + params.shift_rate * gamma) + special.ndtr(t) - band
    return np.clip(h, 0.0, 1.0)


def truncation_halfwidth(params: ModelParams, gamma: float) -> float:
    """Half-width ``12 + |gamma| |rho| / s`` of the integration window."""
    return TAIL_HALFWIDTH + abs(gamma) * abs(params.shift_rate)


def _breakpoints(params, gamma):
    pts = [0.0, -params.shift_rate * gamma]
    if params.rho != 0.0:
        pts += [(-gamma - params.cutoff) / params.rho, (-gamma + params.cutoff) / params.rho]
    return pts


@functools.lru_cache(maxsize=4096)
def _anchor(params: ModelParams, gamma: float, abs_tol: float) -> float:
    # lru_cache is safe under concurrent readers: a value is computed at
    # most a few times and every copy is identical.
    lo = -truncation_halfwidth(params, gamma)
    return kernel.integrate(
        lambda u: _density(params, gamma, u), lo, 0.0,
        kernel.QuadratureSpec(abs_tol), breakpoints=_breakpoints(params, gamma),
    )


def cdf_quadrature(params: ModelParams, gamma: float, t: float, abs_tol: float = 1e-12) -> float:
    """Cdf by adaptive quadrature of the density.

    The mass on ``[-L, 0]`` is computed once per ``(params, gamma)`` and
    cached; each call adds the integral between 0 and ``t``.
    """
    kernel._require_finite([gamma, t], "gamma/t")
    if params.rho == 0.0:
        return float(special.ndtr(t))
    anchor = _anchor(params, float(gamma), abs_tol)
    spec = kernel.QuadratureSpec(abs_tol)
    f = lambda u: _density(params, gamma, u)  # noqa: E731
    bps = _breakpoints(params, gamma)
    if t >= 0.0:
        val = anchor + kernel.integrate(f, 0.0, t, spec, breakpoints=bps)
    else:
        val = anchor - kernel.integrate(f, t, 0.0, spec, breakpoints=bps)
    return float(min(max(val, 0.0), 1.0))


# --------------------------------------------------------------- quantile

def quantile_bracket(params: ModelParams, gamma, v: float):
    """Initial root bracket ``Phi^{-1}(1-v) -/+ (10 + |rho gamma| / s)``."""
    center = kernel.std_normal_quantile(1.0 - v)
    half = 10.0 + np.abs(params.shift_rate * np.asarray(gamma, dtype=float))
    return center - half, center + half


def quantiles(params: ModelParams, gammas, v: float, *, tol: float = _QUANTILE_RTOL):
    """Vectorised ``(1 - v)``-quantiles ``c_gamma(v)`` for an array of gammas.

    Safeguarded Newton iteration on the exact cdf: a Newton step is taken
    when it stays inside the current bracket, bisection otherwise.  Brackets
    that fail to enclose the target are widened by doubling their half-width.
    Iteration stops once ``|H(x) - (1 - v)| <= tol`` or the bracket has
    collapsed to floating-point resolution.
    """
    v = _check_level(v)
    gammas = _finite(gammas, "gamma")
    target = 1.0 - v
    z = kernel.std_normal_quantile(target)
    if params.rho == 0.0:
        return _out(np.full(gammas.shape, z))
    g = gammas.ravel().copy()
    lo, hi = quantile_bracket(params, g, v)
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    for _ in range(60):
        bad_lo = _cdf_exact(params, g, lo) > target
        bad_hi = _cdf_exact(params, g, hi) < target
        if not (bad_lo.any() or bad_hi.any()):
            break
        width = hi - lo
        lo = np.where(bad_lo, lo - width, lo)
        hi = np.where(bad_hi, hi + width, hi)
    else:  # pragma: no cover - density is positive, so this cannot happen
        raise ConvergenceError("could not bracket quantile")

    x = np.clip(np.full(g.shape, z), lo, hi)
    active = np.ones(g.shape, dtype=bool)
    for _ in range(200):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        gi, xi = g[idx], x[idx]
        r = _cdf_exact(params, gi, xi) - target
        converged = np.abs(r) <= tol
        lo[idx] = np.where(r < 0, xi, lo[idx])
        hi[idx] = np.where(r > 0, xi, hi[idx])
        d = _density(params, gi, xi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = xi - r / d
        inside = np.isfinite(step) & (step > lo[idx]) & (step < hi[idx])
        nxt = np.where(inside, step, 0.5 * (lo[idx] + hi[idx]))
        collapsed = (hi[idx] - lo[idx]) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(xi))
        done = converged | collapsed
        x[idx] = np.where(done, xi, nxt)
        active[idx[done]] = False
    else:  # pragma: no cover
        raise ConvergenceError("quantile iteration did not converge")
    return _out(x.reshape(gammas.shape))


def quantile(params: ModelParams, gamma, v: float) -> float:
    """``c_gamma(v) = H_gamma^{-1}(1 - v)``."""
    return float(quantiles(params, float(gamma), v))


# ---------------------------------------------------------------- sampling

def make_stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based (Philox) generator for the stream ``(seed, *key)``.

    Distinct keys give statistically independent streams, so replication
    blocks can be drawn in any order or in parallel.
    """
    entropy = [int(seed)] + [int(k) for k in key]
    if any(e < 0 for e in entropy):
        raise DomainError("seed and stream keys must be non-negative integers")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _tprime(params, gamma, w, z):
    gamma_hat = z + gamma
    unrestricted = np.abs(gamma_hat) > params.cutoff
    s = params.s
    t = np.where(unrestricted, s * w + params.rho * z, w - params.rho * gamma / s)
    return t, gamma_hat, unrestricted


def sample_tprime(params: ModelParams, gamma, rng: np.random.Generator, size=None) -> TPrimeSample:
    """Draw ``T'`` together with ``gamma_hat = Z + gamma``.

    ``W`` and ``Z`` are taken from a single ``standard_normal`` call of
    shape ``(2, *size)`` (``W`` first), which fixes the byte layout of the
    stream.
    """
    gamma = float(_finite(gamma, "gamma"))
    shape = () if size is None else (size,) if np.ndim(size) == 0 else tuple(size)
    draws = rng.standard_normal((2,) + shape)
    t, gamma_hat, unrestricted = _tprime(params, gamma, draws[0], draws[1])
    if size is None:
        return TPrimeSample(float(t), float(gamma_hat), bool(unrestricted))
    return TPrimeSample(t, gamma_hat, unrestricted)


# -------------------------------------------------------------- regression

@dataclass(frozen=True)
class RegressionDesign:
    """Fixed ``n x 2`` design of the two-regressor model.

    ``moment_matrix`` is ``X'X / n``; its inverse has entries
    ``sigma_alpha**2``, ``sigma_alphabeta`` and ``sigma_beta**2``.
    """

    n: int
    moment_matrix: np.ndarray
    X: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n <= 1:
            raise DesignError(f"n must be an integer > 1, got {self.n}")
        m = np.asarray(self.moment_matrix, dtype=float)
        if m.shape != (2, 2) or not np.allclose(m, m.T, rtol=0, atol=1e-12 * np.abs(m).max()):
            raise DesignError("moment matrix must be a symmetric 2x2 matrix")
        if m[0, 0] <= 0 or np.linalg.det(m) <= 1e-14 * m[0, 0] * m[1, 1]:
            raise DesignError("moment matrix must be positive definite")
        object.__setattr__(self, "moment_matrix", m)
        if self.X is not None:
            X = np.asarray(self.X, dtype=float)
            if X.shape != (self.n, 2):
                raise DesignError(f"X must have shape ({self.n}, 2), got {X.shape}")
            object.__setattr__(self, "X", X)

    @classmethod
    def from_matrix(cls, X) -> "RegressionDesign":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != 2:
            raise DesignError("X must be an n x 2 matrix")
        n = X.shape[0]
        if n < 2 or np.linalg.matrix_rank(X) < 2:
            raise DesignError("X must have full column rank (which needs n > 1)")
        return cls(n, X.T @ X / n, X)

    @classmethod
    def two_level(cls, n: int, rho: float) -> "RegressionDesign":
        """Intercept plus a two-level regressor giving estimator correlation ``rho``.

        ``x2 = m + e`` where ``e`` takes two values with sample mean 0 and
        sample variance 1 exactly, and ``m = -rho / sqrt(1 - rho**2)``;
        then ``X'X/n = [[1, m], [m, 1 + m**2]]`` and the estimator correlation
        ``-m / sqrt(1 + m**2)`` equals ``rho``.
        """
        if abs(rho) >= 1:
            raise DomainError("|rho| must be < 1")
        n = int(n)
        if n < 2:
            raise DesignError("n must be > 1")
        n1 = n // 2
        n2 = n - n1
        e = np.concatenate([np.full(n1, math.sqrt(n2 / n1)), np.full(n2, -math.sqrt(n1 / n2))])
        m = -rho / math.sqrt(1.0 - rho * rho)
        X = np.column_stack([np.ones(n), m + e])
        return cls.from_matrix(X)

    @functools.cached_property
    def _inverse(self) -> np.ndarray:
        return np.linalg.inv(self.moment_matrix)

    @property
    def sigma_alpha(self) -> float:
        return math.sqrt(self._inverse[0, 0])

    @property
    def sigma_beta(self) -> float:
        return math.sqrt(self._inverse[1, 1])

    @property
    def sigma_alphabeta(self) -> float:
        return float(self._inverse[0, 1])

    @property
    def rho_n(self) -> float:
        return self.sigma_alphabeta / (self.sigma_alpha * self.sigma_beta)


def gamma_from_beta(design: RegressionDesign, beta):
    """``sqrt(n) * beta / sigma_beta``."""
    return _out(math.sqrt(design.n) * np.asarray(beta, dtype=float) / design.sigma_beta)


def simulate_regression_tstat(
    design: RegressionDesign,
    alpha0: float,
    alpha: float,
    beta: float,
    rng: np.random.Generator,
    reps: int | None = None,
    cutoff: float = 1.96,
):
    """Simulate the post-model-selection statistic from raw regression data.

    Draws ``y = alpha x1 + beta x2 + eps`` with standard normal errors,
    fits the unrestricted and restricted models by least squares, selects
    the unrestricted model when ``|sqrt(n) beta_hat(U) / sigma_beta| > cutoff``
    and returns the corresponding standardised statistic for ``H0: alpha = alpha0``.

    Returns a float, or an array of length ``reps`` when ``reps`` is given.
    """
    if design.X is None:
        raise DesignError("simulation needs an explicit design matrix")
    if not cutoff > 0:
        raise DomainError("cutoff must be positive")
    X = design.X
    n = design.n
    if np.linalg.matrix_rank(X) < 2:
        raise DesignError("design matrix is rank deficient")
    count = 1 if reps is None else int(reps)
    if count < 1:
        raise PreconditionError("reps must be positive")

    eps = rng.standard_normal((count, n))
    y = eps + (alpha * X[:, 0] + beta * X[:, 1])[None, :]
    xty = y @ X                                      # (count, 2)
    coef_u = np.linalg.solve(X.T @ X, xty.T).T       # unrestricted fit
    alpha_r = xty[:, 0] / (X[:, 0] @ X[:, 0])        # restricted fit
    sa, sb, rho = design.sigma_alpha, design.sigma_beta, design.rho_n
    root_n = math.sqrt(n)
    gamma_hat = root_n * coef_u[:, 1] / sb
    stat_u = root_n * (coef_u[:, 0] - alpha0) / sa
    stat_r = root_n * (alpha_r - alpha0) / (sa * math.sqrt(1.0 - rho * rho))
    t = np.where(np.abs(gamma_hat) > cutoff, stat_u, stat_r)
    return float(t[0]) if reps is None else t

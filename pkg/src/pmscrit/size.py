"""Null rejection probabilities of the critical-value rules.

Two independent routes:

* semi-analytic -- condition on ``Z = z``.  Then ``gamma_hat = z + gamma``
  is fixed, the rule's critical value ``cv(z)`` is fixed, and ``T'`` is
  increasing in ``W``, so ``P(T' > cv | z) = 1 - Phi(w*(z))`` with
  ``w* = (cv - rho z) / s`` when the unrestricted model is selected and
  ``w* = cv + rho gamma / s`` otherwise.  One adaptive quadrature in ``z``
  gives the rejection probability.
* Monte Carlo -- draw ``(W, Z)``, evaluate the rule at every draw.
"""
from __future__ import annotations

import csv
import inspect
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import optimize, special, stats

from . import __version__, distribution, grid, kernel, rules
from .distribution import ModelParams
from .errors import DomainError, PreconditionError
from .rules import CriticalValueRule, RuleContext, RuleKind

__all__ = [
    "SizeCurve",
    "SizeReport",
    "MCEstimate",
    "Prop1Decomposition",
    "SEMI_ANALYTIC_TOL",
    "GRID_REFINE_TOL",
    "rejection_prob_semianalytic",
    "rejection_prob_mc",
    "size_curve",
    "max_size",
    "prop1_decomposition",
    "n_invariance_check",
    "regression_n_invariance",
    "write_size_csv",
    "read_size_csv",
    "parse_size_csv",
]

SEMI_ANALYTIC_TOL = 1e-6
GRID_REFINE_TOL = 1e-5
QUAD_ABS_TOL = 1e-9
Z_SPAN = 12.0
DEFAULT_SIZE_GRID = (-40.0, 40.0, 0.05)
MC_BLOCK = 1 << 18
CSV_COLUMNS = ("gamma", "rejection", "stderr", "method", "reps", "seed")


class MCEstimate(NamedTuple):
    p: float
    stderr: float


@dataclass
class SizeCurve:
    rule: CriticalValueRule
    params: ModelParams
    gammas: np.ndarray
    rejection: np.ndarray
    stderr: np.ndarray
    method: str = "semi-analytic"
    reps: int = 0
    seed: int = 0

    def __post_init__(self):
        self.gammas = np.asarray(self.gammas, dtype=float)
        self.rejection = np.asarray(self.rejection, dtype=float)
        self.stderr = np.asarray(self.stderr, dtype=float)
        if not (self.gammas.shape == self.rejection.shape == self.stderr.shape):
            raise DomainError("gammas, rejection and stderr must have equal length")
        if self.method not in ("semi-analytic", "monte-carlo"):
            raise DomainError(f"unknown method {self.method!r}")


@dataclass
class SizeReport:
    rule: CriticalValueRule
    delta: float
    max_size: float
    argmax_gamma: float
    level_verdict: str
    margin: float
    error_budget: float
    curve: SizeCurve = field(repr=False)
    details: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Prop1Decomposition:
    """``P(T' > cv) = P(T' > c_sup) + P(cv < T' <= c_sup)`` at ``gamma_max``."""

    overshoot_term: float
    total: float
    direct: float
    gamma_max: float

    @property
    def consistent(self) -> bool:
        return abs(self.total - self.direct) <= GRID_REFINE_TOL


def _reject_given_z(params: ModelParams, gamma: float, z, cv):
    gamma_hat = z + gamma
    s = params.s
    w = np.where(np.abs(gamma_hat) > params.cutoff, (cv - params.rho * z) / s, cv + params.rho * gamma / s)
    return special.ndtr(-w)


def _phi(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _integrate_z(params, gamma, integrand, abs_tol):
    c = params.cutoff
    return kernel.integrate(
        integrand, -Z_SPAN, Z_SPAN, kernel.QuadratureSpec(abs_tol),
        breakpoints=(-gamma - c, -gamma + c),
    )


def rejection_prob_semianalytic(
    rule: CriticalValueRule,
    params: ModelParams,
    gamma: float,
    ctx: RuleContext,
    abs_tol: float | None = None,
) -> float:
    """``P(T' > cv(gamma_hat))`` under nuisance value ``gamma``, by quadrature in ``z``.

    ``abs_tol`` defaults to ``ctx.quad_tol``.
    """
    gamma = float(gamma)
    abs_tol = ctx.quad_tol if abs_tol is None else abs_tol
    sup = ctx.sup(rule.delta)
    grids = ctx.grids_for(rule)

    def integrand(z):
        cv = rules.evaluate_rule(rule, params, z + gamma, sup, grids)
        return _phi(z) * _reject_given_z(params, gamma, z, cv)

    p = _integrate_z(params, gamma, integrand, abs_tol)
    return min(max(p, 0.0), 1.0)


def rejection_prob_mc(
    rule: CriticalValueRule,
    params: ModelParams,
    gamma: float,
    reps: int,
    seed: int,
    ctx: RuleContext,
    *,
    workers: int = 1,
    block: int = MC_BLOCK,
) -> MCEstimate:
    """Monte Carlo rejection frequency with binomial standard error.

    Replications are split into fixed blocks of ``block`` draws; block ``b``
    uses the stream ``(seed, b)``, so the estimate does not depend on
    ``workers``.
    """
    reps = int(reps)
    if reps < 1:
        raise DomainError("reps must be >= 1")
    gamma = float(gamma)
    sup = ctx.sup(rule.delta)
    grids = ctx.grids_for(rule)
    sizes = [min(block, reps - start) for start in range(0, reps, block)]

    def run(b):
        rng = distribution.make_stream(seed, b)
        draw = distribution.sample_tprime(params, gamma, rng, size=sizes[b])
        cv = rules.evaluate_rule(rule, params, draw.gamma_hat, sup, grids)
        return int(np.count_nonzero(draw.t > cv))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            hits = sum(pool.map(run, range(len(sizes))))
    else:
        hits = sum(run(b) for b in range(len(sizes)))
    p = hits / reps
    return MCEstimate(p, math.sqrt(p * (1.0 - p) / reps))


def size_curve(
    rule: CriticalValueRule,
    params: ModelParams,
    gammas,
    ctx: RuleContext,
    *,
    method: str = "semi-analytic",
    reps: int = 100_000,
    seed: int = 0,
    workers: int = 1,
) -> SizeCurve:
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    if method == "semi-analytic":
        rej = np.array([rejection_prob_semianalytic(rule, params, g, ctx) for g in gammas])
        return SizeCurve(rule, params, gammas, rej, np.zeros_like(rej))
    if method == "monte-carlo":
        est = [rejection_prob_mc(rule, params, g, reps, seed, ctx, workers=workers) for g in gammas]
        return SizeCurve(
            rule, params, gammas, np.array([e.p for e in est]), np.array([e.stderr for e in est]),
            "monte-carlo", int(reps), int(seed),
        )
    raise DomainError(f"unknown method {method!r}")


def _default_gammas():
    lo, hi, step = DEFAULT_SIZE_GRID
    return lo + step * np.arange(int(round((hi - lo) / step)) + 1)


def max_size(
    rule: CriticalValueRule,
    params: ModelParams,
    ctx: RuleContext,
    gammas=None,
) -> SizeReport:
    """Largest null rejection probability over ``gamma``.

    Scans ``gammas`` (default ``[-40, 40]`` step 0.05) with the
    semi-analytic integral and polishes the best node with a bounded Brent
    search over its two neighbouring cells.  The verdict compares the excess
    over ``delta`` with the error budget ``SEMI_ANALYTIC_TOL + GRID_REFINE_TOL``:
    ``overshoots`` when the excess is above three budgets, ``holds`` when the
    maximum is at most ``delta`` plus one budget, ``inconclusive`` otherwise.
    """
    gammas = _default_gammas() if gammas is None else np.sort(np.asarray(gammas, dtype=float))
    curve = size_curve(rule, params, gammas, ctx)
    i = int(np.argmax(curve.rejection))
    best_gamma, best = float(gammas[i]), float(curve.rejection[i])
    if gammas.size > 1:
        lo = float(gammas[max(i - 1, 0)])
        hi = float(gammas[min(i + 1, gammas.size - 1)])
        res = optimize.minimize_scalar(
            lambda g: -rejection_prob_semianalytic(rule, params, g, ctx),
            bounds=(lo, hi), method="bounded", options={"xatol": 1e-6},
        )
        if -res.fun > best:
            best_gamma, best = float(res.x), float(-res.fun)

    delta = rule.delta
    budget = SEMI_ANALYTIC_TOL + GRID_REFINE_TOL
    excess = best - delta
    if excess > 3.0 * budget:
        verdict = "overshoots"
    elif excess <= budget:
        verdict = "holds"
    else:
        verdict = "inconclusive"
    details = {"min_size": float(curve.rejection.min())}
    if rule.kind is RuleKind.LOH:
        # Size at the maximiser of c_gamma(delta - eta) is bounded below by delta - eta.
        g_floor = ctx.sup(delta - rule.eta).gamma_max
        details["floor_gamma"] = g_floor
        details["floor_size"] = rejection_prob_semianalytic(rule, params, g_floor, ctx)
        details["floor"] = delta - rule.eta
    return SizeReport(rule, delta, best, best_gamma, verdict, excess / budget, budget, curve, details)


def prop1_decomposition(
    params: ModelParams,
    delta: float,
    rule: CriticalValueRule,
    ctx: RuleContext,
    abs_tol: float | None = None,
) -> Prop1Decomposition:
    """Split the rejection probability at ``gamma_max(delta)`` into ``delta``
    plus the mass of ``{cv(gamma_hat) < T' <= c_sup}``.

    The rule must never exceed ``c_sup(delta)``; this is checked on a fine
    ``gamma_hat`` grid and :class:`PreconditionError` raised otherwise.
    """
    if abs(rule.delta - float(delta)) > 0:
        raise PreconditionError("rule.delta must equal delta")
    abs_tol = ctx.quad_tol if abs_tol is None else abs_tol
    sup = ctx.sup(delta)
    grids = ctx.grids_for(rule)
    g = sup.gamma_max
    probe = g + np.linspace(-Z_SPAN, Z_SPAN, 4801)
    cv_probe = rules.evaluate_rule(rule, params, probe, sup, grids)
    if np.any(cv_probe > sup.c_sup + 1e-9):
        raise PreconditionError(f"rule {rule.label} exceeds c_sup somewhere; decomposition does not apply")

    def integrand(z):
        cv = rules.evaluate_rule(rule, params, z + g, sup, grids)
        return _phi(z) * (_reject_given_z(params, g, z, cv) - _reject_given_z(params, g, z, sup.c_sup))

    overshoot = max(_integrate_z(params, g, integrand, abs_tol), 0.0)
    direct = rejection_prob_semianalytic(rule, params, g, ctx, abs_tol)
    return Prop1Decomposition(overshoot, float(delta) + overshoot, direct, g)


# Functions whose inputs fully determine a size computation.
_SIZE_PIPELINE = (
    distribution.density, distribution.cdf, distribution.quantiles, distribution.quantile,
    distribution.sample_tprime, grid.build_quantile_grid, grid.interval_sup,
    rules.compute_sup, rules.evaluate_rule, rejection_prob_semianalytic,
    rejection_prob_mc, size_curve, max_size, prop1_decomposition,
)
_SAMPLE_SIZE_NAMES = {"n", "n_obs", "sample_size", "design", "nobs"}


def n_invariance_check(params: ModelParams, delta: float, rule: CriticalValueRule) -> bool:
    """Audit that the size pipeline never consumes the sample size.

    Every function in the pipeline and every value object it receives is
    inspected; the check passes when none of them has a parameter or field
    naming a sample size or design.  Sizes are then functions of
    ``(rho, c, delta, eta, gamma)`` alone.
    """
    for fn in _SIZE_PIPELINE:
        if _SAMPLE_SIZE_NAMES & set(inspect.signature(fn).parameters):
            return False
    for obj in (params, rule):
        if _SAMPLE_SIZE_NAMES & set(getattr(obj, "__dataclass_fields__", {})):
            return False
    return float(delta) == rule.delta


def regression_n_invariance(
    params: ModelParams,
    gamma: float,
    ns=(50, 500),
    reps: int = 100_000,
    seed: int = 0,
) -> float:
    """Two-sample KS p-value between regression statistics at two sample sizes.

    For each ``n`` a two-level design with estimator correlation ``rho`` is
    built and ``beta`` chosen so that ``sqrt(n) beta / sigma_beta = gamma``.
    """
    samples = []
    for k, n in enumerate(ns):
        design = distribution.RegressionDesign.two_level(n, params.rho)
        beta = gamma * design.sigma_beta / math.sqrt(design.n)
        rng = distribution.make_stream(seed, 1000 + k)
        samples.append(distribution.simulate_regression_tstat(
            design, 0.0, 0.0, beta, rng, reps=reps, cutoff=params.cutoff))
    return float(stats.ks_2samp(samples[0], samples[1]).pvalue)


# ------------------------------------------------------------------ CSV I/O

def _fmt(x) -> str:
    return f"{float(x):.10g}"


def write_size_csv(obj: SizeCurve | SizeReport, path=None, extra_header: dict | None = None) -> str:
    """Write a size curve (or a report with its curve) as commented CSV.

    Header lines start with ``#`` and carry ``key=value`` metadata; the
    column order is fixed to ``gamma,rejection,stderr,method,reps,seed``.
    Returns the CSV text and writes it to ``path`` when given.
    """
    curve = obj.curve if isinstance(obj, SizeReport) else obj
    rule = curve.rule
    meta = {
        "artifact": "pmscrit",
        "version": __version__,
        "kind": "size-report" if isinstance(obj, SizeReport) else "size-curve",
        "rho": _fmt(curve.params.rho),
        "cutoff": _fmt(curve.params.cutoff),
        "delta": _fmt(rule.delta),
        "eta": ";".join(_fmt(e) for e in rule.etas),
        "rule": rule.kind.value,
        "semi_analytic_tol": _fmt(SEMI_ANALYTIC_TOL),
        "quad_abs_tol": _fmt(QUAD_ABS_TOL),
        "grid_refine_tol": _fmt(GRID_REFINE_TOL),
        "grid_step": _fmt(grid.DEFAULT_STEP),
    }
    if isinstance(obj, SizeReport):
        meta.update(
            max_size=_fmt(obj.max_size), argmax_gamma=_fmt(obj.argmax_gamma),
            level_verdict=obj.level_verdict, margin=_fmt(obj.margin),
        )
    meta.update(extra_header or {})
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}={v}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for g, p, se in zip(curve.gammas, curve.rejection, curve.stderr):
        writer.writerow([_fmt(g), _fmt(p), _fmt(se), curve.method, curve.reps, curve.seed])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_size_csv(path) -> tuple[dict, SizeCurve]:
    """Read a file written by :func:`write_size_csv`."""
    return parse_size_csv(Path(path).read_text())


def parse_size_csv(text: str) -> tuple[dict, SizeCurve]:
    """Parse CSV text from :func:`write_size_csv` into metadata and a curve."""
    meta = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = tuple(next(reader))
    if header != CSV_COLUMNS:
        raise DomainError(f"unexpected CSV columns {header}")
    rows = list(reader)
    params = ModelParams(float(meta["rho"]), float(meta["cutoff"]))
    etas = tuple(float(e) for e in meta.get("eta", "").split(";") if e)
    rule = CriticalValueRule(RuleKind(meta["rule"]), float(meta["delta"]), etas)
    method = rows[0][3] if rows else "semi-analytic"
    curve = SizeCurve(
        rule, params,
        [float(r[0]) for r in rows], [float(r[1]) for r in rows], [float(r[2]) for r in rows],
        method, int(rows[0][4]) if rows else 0, int(rows[0][5]) if rows else 0,
    )
    return meta, curve

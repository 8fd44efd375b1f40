"""Worst-case and data-dependent critical values.

A rule maps the observed ``gamma_hat`` to a critical value:

* ``sup``        -- ``c_sup(delta)``, the largest ``(1 - delta)``-quantile over all gamma;
* ``bootstrap``  -- ``c_{gamma_hat}(delta)`` (plug-in / parametric bootstrap);
* ``loh``        -- sup of ``c_gamma(delta - eta)`` over ``gamma_hat +/- z_{1-eta/2}``;
* ``lohstar``    -- the same interval at level ``delta``;
* ``min``        -- ``min(c_sup(delta), loh)``;
* ``mccloskey``  -- the smallest ``min`` value over a finite set of etas.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import optimize

from . import distribution, kernel
from .distribution import ModelParams
from .errors import DomainError, RangeError
from .grid import DEFAULT_QUANTILE_TOL, DEFAULT_STEP, GridCache, QuantileGrid, interval_sup

__all__ = [
    "RuleKind",
    "CriticalValueRule",
    "SupResult",
    "SUP_SEARCH_BOUND",
    "compute_sup",
    "evaluate_rule",
    "RuleContext",
]

SUP_SEARCH_BOUND = 40.0
_TIE_TOL = 1e-12


class RuleKind(str, enum.Enum):
    FIXED_SUP = "sup"
    BOOTSTRAP = "bootstrap"
    LOH = "loh"
    LOH_STAR = "lohstar"
    MIN = "min"
    MCCLOSKEY = "mccloskey"


def _level(x) -> float:
    # delta - eta is keyed at 15 significant digits so 0.05 - 0.01 and 0.04 share a grid.
    return float(f"{float(x):.15g}")


@dataclass(frozen=True)
class CriticalValueRule:
    kind: RuleKind
    delta: float
    etas: tuple[float, ...] = ()

    def __post_init__(self):
        kind = RuleKind(self.kind)
        object.__setattr__(self, "kind", kind)
        delta = float(self.delta)
        if not 0.0 < delta < 1.0:
            raise DomainError(f"delta must lie in (0, 1), got {delta}")
        etas = tuple(float(e) for e in self.etas)
        needs_eta = kind in (RuleKind.LOH, RuleKind.LOH_STAR, RuleKind.MIN, RuleKind.MCCLOSKEY)
        if needs_eta and not etas:
            raise DomainError(f"rule {kind.value!r} needs at least one eta")
        if kind in (RuleKind.LOH, RuleKind.LOH_STAR, RuleKind.MIN) and len(etas) != 1:
            raise DomainError(f"rule {kind.value!r} takes exactly one eta")
        if not needs_eta and etas:
            raise DomainError(f"rule {kind.value!r} takes no eta")
        for eta in etas:
            if not 0.0 < eta < delta:
                raise DomainError(f"eta must satisfy 0 < eta < delta, got eta={eta}, delta={delta}")
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "etas", etas)

    @classmethod
    def fixed_sup(cls, delta):
        return cls(RuleKind.FIXED_SUP, delta)

    @classmethod
    def bootstrap(cls, delta):
        return cls(RuleKind.BOOTSTRAP, delta)

    @classmethod
    def loh(cls, delta, eta):
        return cls(RuleKind.LOH, delta, (eta,))

    @classmethod
    def loh_star(cls, delta, eta):
        return cls(RuleKind.LOH_STAR, delta, (eta,))

    @classmethod
    def min_rule(cls, delta, eta):
        return cls(RuleKind.MIN, delta, (eta,))

    @classmethod
    def mccloskey(cls, delta, etas):
        return cls(RuleKind.MCCLOSKEY, delta, tuple(etas))

    @property
    def eta(self) -> float | None:
        return self.etas[0] if len(self.etas) == 1 else None

    @property
    def label(self) -> str:
        if not self.etas:
            return self.kind.value
        return f"{self.kind.value}({','.join(f'{e:g}' for e in self.etas)})"

    def grid_levels(self) -> list[float]:
        """Quantile levels whose grids the rule reads."""
        if self.kind is RuleKind.BOOTSTRAP or self.kind is RuleKind.LOH_STAR:
            return [_level(self.delta)]
        if self.kind is RuleKind.FIXED_SUP:
            return []
        return sorted({_level(self.delta - e) for e in self.etas})

    def window_halfwidth(self) -> float:
        """Largest confidence-interval half-width ``z_{1-eta/2}`` used."""
        if not self.etas:
            return 0.0
        return max(kernel.std_normal_quantile(1.0 - e / 2.0) for e in self.etas)


@dataclass(frozen=True)
class SupResult:
    """``c_sup(v) = max_gamma c_gamma(v)`` and a maximiser."""

    c_sup: float
    gamma_max: float
    achieved: bool
    v: float


@functools.lru_cache(maxsize=256)
def compute_sup(
    params: ModelParams,
    v: float,
    bound: float = SUP_SEARCH_BOUND,
    step: float = DEFAULT_STEP,
) -> SupResult:
    """Worst-case quantile over ``gamma`` in ``[-bound, bound]``.

    Scans a grid of step ``step``, then refines around the best node with a
    bounded Brent search.  Among nodes within 1e-12 of the maximum the one
    with smallest ``|gamma|`` wins, negative before positive.  ``achieved``
    is False when the maximiser sits on the search boundary.
    """
    v = float(v)
    if not 0.0 < v < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {v}")
    if params.rho == 0.0:
        return SupResult(kernel.std_normal_quantile(1.0 - v), 0.0, True, v)
    count = int(round(2 * bound / step)) + 1
    gammas = -bound + step * np.arange(count)
    values = distribution.quantiles(params, gammas, v)
    top = values.max()
    ties = np.flatnonzero(values >= top - _TIE_TOL)
    order = np.lexsort((gammas[ties] > 0, np.abs(gammas[ties])))
    i = int(ties[order[0]])
    g_best, c_best = float(gammas[i]), float(values[i])

    lo, hi = max(g_best - step, -bound), min(g_best + step, bound)
    res = optimize.minimize_scalar(
        lambda g: -distribution.quantile(params, g, v),
        bounds=(lo, hi), method="bounded", options={"xatol": 1e-10},
    )
    if -res.fun > c_best:
        g_best, c_best = float(res.x), float(-res.fun)
    achieved = abs(g_best) < bound - 0.5 * step
    return SupResult(c_best, g_best, achieved, v)


def evaluate_rule(
    rule: CriticalValueRule,
    params: ModelParams,
    gamma_hat,
    sup_delta: SupResult,
    grids: Mapping[float, QuantileGrid],
):
    """Critical value of ``rule`` at the observed ``gamma_hat`` (vectorised).

    ``grids`` maps quantile levels (see :meth:`CriticalValueRule.grid_levels`)
    to grids covering ``gamma_hat`` plus the confidence-interval half-width.
    """
    gamma_hat = np.asarray(gamma_hat, dtype=float)
    kind = rule.kind
    if kind is RuleKind.FIXED_SUP:
        out = np.full(gamma_hat.shape, sup_delta.c_sup)
    elif kind is RuleKind.BOOTSTRAP:
        out = _grid_for(grids, rule.delta).value_at(gamma_hat)
    elif kind is RuleKind.LOH_STAR:
        out = _loh(_grid_for(grids, rule.delta), gamma_hat, rule.eta)
    elif kind is RuleKind.LOH:
        out = _loh(_grid_for(grids, rule.delta - rule.eta), gamma_hat, rule.eta)
    else:
        out = None
        for eta in rule.etas:
            loh = _loh(_grid_for(grids, rule.delta - eta), gamma_hat, eta)
            cand = np.minimum(sup_delta.c_sup, loh)
            out = cand if out is None else np.minimum(out, cand)
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def _grid_for(grids, level) -> QuantileGrid:
    try:
        return grids[_level(level)]
    except KeyError:
        raise RangeError(f"no quantile grid supplied for level {level:g}") from None


def _loh(grid, gamma_hat, eta):
    half = kernel.std_normal_quantile(1.0 - eta / 2.0)
    return interval_sup(grid, gamma_hat - half, gamma_hat + half)


class RuleContext:
    """Everything needed to evaluate rules for one ``(rho, c)``.

    Grids are fetched lazily from a :class:`GridCache` on the symmetric
    range ``[-H, H]`` where ``H`` covers the sup search bound, the
    quadrature span in ``z`` and the widest confidence window, rounded up to
    a multiple of 5 so rules with nearby etas share grids.
    """

    def __init__(
        self,
        params: ModelParams,
        cache: GridCache | None = None,
        *,
        gamma_span: float = SUP_SEARCH_BOUND,
        z_span: float = 12.0,
        step: float = DEFAULT_STEP,
        quantile_tol: float = DEFAULT_QUANTILE_TOL,
        quad_tol: float = 1e-9,
    ):
        if not (quantile_tol > 0 and quad_tol > 0):
            raise DomainError("tolerances must be positive")
        self.params = params
        self.quantile_tol = float(quantile_tol)
        self.quad_tol = float(quad_tol)
        self.cache = cache if cache is not None else GridCache()
        self.gamma_span = float(gamma_span)
        self.z_span = float(z_span)
        self.step = float(step)

    def sup(self, v: float) -> SupResult:
        return compute_sup(self.params, float(v), SUP_SEARCH_BOUND, self.step)

    def grid(self, v: float, halfwidth: float) -> QuantileGrid:
        h = 5.0 * math.ceil(halfwidth / 5.0)
        return self.cache.get(self.params, _level(v), -h, h, self.step, self.quantile_tol)

    def grids_for(self, rule: CriticalValueRule) -> dict[float, QuantileGrid]:
        half = self.gamma_span + self.z_span + rule.window_halfwidth() + 1.0
        return {lvl: self.grid(lvl, half) for lvl in rule.grid_levels()}

    def critical_value(self, rule: CriticalValueRule, gamma_hat):
        return evaluate_rule(rule, self.params, gamma_hat, self.sup(rule.delta), self.grids_for(rule))

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmscrit import distribution as dist, kernel
from pmscrit.distribution import ModelParams
from pmscrit.errors import DomainError, RangeError
from pmscrit.rules import CriticalValueRule, RuleContext, RuleKind, compute_sup, evaluate_rule

# Worst-case 95% quantile for rho=0.7, c=1.96: mpmath quantile at the maximiser.
C_SUP_07 = 3.4264740023033165
GAMMA_MAX_07 = -2.70272


def test_sup_matches_reference(params07):
    sup = compute_sup(params07, 0.05)
    assert sup.c_sup == pytest.approx(C_SUP_07, abs=1e-9)
    assert sup.gamma_max == pytest.approx(GAMMA_MAX_07, abs=1e-3)
    assert sup.achieved


def test_sup_rho_zero_and_symmetry():
    assert compute_sup(ModelParams(0.0, 1.0), 0.1).c_sup == pytest.approx(kernel.std_normal_quantile(0.9))
    a = compute_sup(ModelParams(0.5, 1.5), 0.05)
    b = compute_sup(ModelParams(-0.5, 1.5), 0.05)
    assert a.c_sup == pytest.approx(b.c_sup, abs=1e-10)
    assert a.gamma_max == pytest.approx(-b.gamma_max, abs=1e-6)


def test_sup_rejects_bad_level(params07):
    with pytest.raises(DomainError):
        compute_sup(params07, 1.0)


def test_sup_on_search_boundary_is_not_achieved(params07):
    # The true maximiser is near -2.70; a search confined to [-1, 1] ends on its edge.
    sup = compute_sup(params07, 0.05, bound=1.0)
    assert not sup.achieved
    assert sup.gamma_max == pytest.approx(-1.0)


@pytest.mark.parametrize("v", [0.3, 0.7, 0.9])
def test_sup_matches_brute_force(v):
    params = ModelParams(-0.6, 1.2)
    brute = dist.quantiles(params, np.linspace(-40, 40, 80001), v).max()
    assert compute_sup(params, v).c_sup == pytest.approx(brute, abs=1e-7)
    assert compute_sup(params, v).c_sup >= brute - 1e-12


@pytest.mark.parametrize(
    "kind, delta, etas",
    [("sup", 0.05, (0.01,)), ("loh", 0.05, ()), ("min", 0.05, (0.01, 0.02)), ("loh", 0.05, (0.05,)),
     ("bootstrap", 0.0, ()), ("mccloskey", 0.05, ()), ("nonsense", 0.05, ())],
)
def test_rule_validation(kind, delta, etas):
    with pytest.raises((DomainError, ValueError)):
        CriticalValueRule(kind, delta, etas)


def test_rule_metadata():
    rule = CriticalValueRule.mccloskey(0.05, [0.01, 0.02])
    assert rule.kind is RuleKind.MCCLOSKEY
    assert rule.label == "mccloskey(0.01,0.02)"
    assert rule.grid_levels() == [0.03, 0.04]
    assert CriticalValueRule.loh(0.05, 0.01).eta == 0.01
    assert CriticalValueRule.fixed_sup(0.05).grid_levels() == []
    assert CriticalValueRule.fixed_sup(0.05).window_halfwidth() == 0.0


@given(st.floats(-30.0, 30.0))
@settings(max_examples=60, deadline=None)
def test_rule_orderings(ctx07, gamma_hat):
    delta, eta = 0.05, 0.01
    cv = {r.kind: ctx07.critical_value(r, gamma_hat) for r in (
        CriticalValueRule.fixed_sup(delta), CriticalValueRule.bootstrap(delta),
        CriticalValueRule.loh(delta, eta), CriticalValueRule.loh_star(delta, eta),
        CriticalValueRule.min_rule(delta, eta),
    )}
    mcc = ctx07.critical_value(CriticalValueRule.mccloskey(delta, (eta, 2 * eta)), gamma_hat)
    tol = 1e-9
    assert cv[RuleKind.BOOTSTRAP] <= cv[RuleKind.FIXED_SUP] + tol
    assert cv[RuleKind.MIN] <= cv[RuleKind.FIXED_SUP] + tol
    assert cv[RuleKind.MIN] <= cv[RuleKind.LOH] + tol
    assert cv[RuleKind.BOOTSTRAP] <= cv[RuleKind.LOH_STAR] + tol
    assert cv[RuleKind.LOH_STAR] <= cv[RuleKind.LOH] + tol
    assert mcc <= cv[RuleKind.MIN] + tol


def test_bootstrap_is_plug_in_quantile(ctx07, params07):
    g = np.array([-4.0, -2.71, 0.0, 1.3])
    got = ctx07.critical_value(CriticalValueRule.bootstrap(0.05), g)
    assert np.allclose(got, dist.quantiles(params07, g, 0.05), atol=1e-9, rtol=0)


def test_loh_is_interval_maximum(ctx07, params07):
    half = kernel.std_normal_quantile(1 - 0.01 / 2)
    g_hat = 1.0
    dense = dist.quantiles(params07, np.linspace(g_hat - half, g_hat + half, 5001), 0.04).max()
    got = ctx07.critical_value(CriticalValueRule.loh(0.05, 0.01), g_hat)
    assert got == pytest.approx(dense, abs=1e-7)


def test_rho_zero_values():
    ctx = RuleContext(ModelParams(0.0, 1.96))
    z = kernel.std_normal_quantile
    assert ctx.critical_value(CriticalValueRule.bootstrap(0.05), 3.0) == pytest.approx(z(0.95), abs=1e-12)
    assert ctx.critical_value(CriticalValueRule.loh(0.05, 0.01), 3.0) == pytest.approx(z(0.96), abs=1e-12)


def test_median_rule_at_zero_is_zero():
    ctx = RuleContext(ModelParams(0.5, 1.96))
    assert ctx.critical_value(CriticalValueRule.bootstrap(0.5), 0.0) == pytest.approx(0.0, abs=1e-10)


def test_evaluate_rule_needs_grids(params07):
    sup = compute_sup(params07, 0.05)
    with pytest.raises(RangeError):
        evaluate_rule(CriticalValueRule.bootstrap(0.05), params07, 0.0, sup, {})


def test_context_rejects_bad_tolerances(params07):
    with pytest.raises(DomainError):
        RuleContext(params07, quad_tol=0.0)

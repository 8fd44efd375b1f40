
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pmscrit import distribution as dist
from pmscrit.distribution import ModelParams
from pmscrit.errors import DomainError, PreconditionError
from pmscrit.rules import CriticalValueRule, RuleContext
from pmscrit.size import (
    CSV_COLUMNS, SizeCurve, max_size, n_invariance_check, parse_size_csv, prop1_decomposition,
    read_size_csv, regression_n_invariance, rejection_prob_mc, rejection_prob_semianalytic,
    size_curve, write_size_csv,
)

BOOT = CriticalValueRule.bootstrap(0.05)


@given(st.floats(-20.0, 20.0))
@settings(max_examples=25, deadline=None)
def test_sup_rule_size_equals_cdf_tail(ctx07, params07, gamma):
    # With a constant critical value the rejection probability is 1 - H(c_sup).
    rule = CriticalValueRule.fixed_sup(0.05)
    c_sup = ctx07.sup(0.05).c_sup
    expected = 1.0 - dist.cdf(params07, gamma, c_sup)
    assert rejection_prob_semianalytic(rule, params07, gamma, ctx07) == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("rule", [
    BOOT, CriticalValueRule.loh(0.05, 0.01), CriticalValueRule.min_rule(0.05, 0.01),
    CriticalValueRule.mccloskey(0.05, (0.01, 0.02)),
])
@pytest.mark.parametrize("gamma", [-2.7, 0.5])
def test_semianalytic_agrees_with_monte_carlo(ctx07, params07, rule, gamma):
    exact = rejection_prob_semianalytic(rule, params07, gamma, ctx07)
    mc = rejection_prob_mc(rule, params07, gamma, 400_000, 11, ctx07)
    assert abs(mc.p - exact) <= 4 * mc.stderr + 1e-6


def test_mc_is_independent_of_worker_count(ctx07, params07):
    a = rejection_prob_mc(BOOT, params07, -2.0, 300_000, 5, ctx07, workers=1, block=50_000)
    b = rejection_prob_mc(BOOT, params07, -2.0, 300_000, 5, ctx07, workers=4, block=50_000)
    assert a == b
    c = rejection_prob_mc(BOOT, params07, -2.0, 300_000, 6, ctx07, block=50_000)
    assert c != a


def test_mc_rejects_zero_reps(ctx07, params07):
    with pytest.raises(DomainError):
        rejection_prob_mc(BOOT, params07, 0.0, 0, 1, ctx07)


def test_size_curve_methods(ctx07, params07):
    g = [-3.0, 0.0, 3.0]
    semi = size_curve(BOOT, params07, g, ctx07)
    assert semi.method == "semi-analytic" and np.all(semi.stderr == 0)
    mc = size_curve(BOOT, params07, g, ctx07, method="monte-carlo", reps=20_000, seed=3)
    assert mc.reps == 20_000 and np.all(mc.stderr > 0)
    with pytest.raises(DomainError):
        size_curve(BOOT, params07, g, ctx07, method="exact")


def test_max_size_verdicts(ctx07, params07):
    coarse = np.arange(-8.0, 4.0, 0.1)
    sup = max_size(CriticalValueRule.fixed_sup(0.05), params07, ctx07, coarse)
    assert sup.level_verdict == "holds"
    boot = max_size(BOOT, params07, ctx07, coarse)
    assert boot.level_verdict == "overshoots"
    # Frozen from a full default-grid run; MC with 10^7 draws agrees within one stderr.
    assert boot.max_size == pytest.approx(0.1251575, abs=2e-6)
    assert boot.argmax_gamma == pytest.approx(-1.931, abs=5e-3)
    loh = max_size(CriticalValueRule.loh(0.05, 0.01), params07, ctx07, coarse)
    assert loh.level_verdict == "holds"
    assert loh.details["floor_size"] >= loh.details["floor"] - 1e-6


def test_rho_zero_sizes_are_nominal():
    params = ModelParams(0.0, 1.96)
    ctx = RuleContext(params)
    for rule, level in [(BOOT, 0.05), (CriticalValueRule.loh(0.05, 0.01), 0.04)]:
        for g in (-2.0, 0.0, 4.0):
            assert rejection_prob_semianalytic(rule, params, g, ctx) == pytest.approx(level, abs=1e-9)


def test_decomposition_identity(ctx07, params07):
    dec = prop1_decomposition(params07, 0.05, BOOT, ctx07)
    assert dec.consistent
    assert dec.overshoot_term > 0.04
    assert dec.gamma_max == pytest.approx(ctx07.sup(0.05).gamma_max)


def test_decomposition_precondition(ctx07, params07):
    with pytest.raises(PreconditionError):
        prop1_decomposition(params07, 0.05, CriticalValueRule.loh(0.05, 0.01), ctx07)
    with pytest.raises(PreconditionError):
        prop1_decomposition(params07, 0.04, BOOT, ctx07)


def test_sample_size_audit(params07):
    assert n_invariance_check(params07, 0.05, BOOT)
    assert regression_n_invariance(params07, -2.0, (30, 300), reps=40_000, seed=2) > 0.001


def test_csv_round_trip(ctx07, params07, tmp_path):
    curve = size_curve(CriticalValueRule.mccloskey(0.05, (0.01, 0.02)), params07, [-1.0, 0.25], ctx07,
                       method="monte-carlo", reps=5000, seed=9)
    path = tmp_path / "curve.csv"
    text = write_size_csv(curve, path, extra_header={"note": "x"})
    lines = text.splitlines()
    assert lines[[i for i, l in enumerate(lines) if not l.startswith("#")][0]] == ",".join(CSV_COLUMNS)
    meta, back = read_size_csv(path)
    assert meta["rule"] == "mccloskey" and meta["note"] == "x" and meta["version"]
    assert back.rule == curve.rule and back.params == curve.params
    assert np.allclose(back.rejection, curve.rejection, rtol=1e-9, atol=0)
    assert (back.method, back.reps, back.seed) == ("monte-carlo", 5000, 9)
    assert parse_size_csv(text)[1].gammas.tolist() == [-1.0, 0.25]


def test_report_csv_header(ctx07, params07):
    rep = max_size(BOOT, params07, ctx07, [-2.0, -1.9, -1.8])
    meta, curve = parse_size_csv(write_size_csv(rep))
    assert meta["kind"] == "size-report" and meta["level_verdict"] == "overshoots"
    assert float(meta["max_size"]) == pytest.approx(rep.max_size, rel=1e-9)
    assert curve.gammas.size == 3


def test_size_curve_validation(params07):
    with pytest.raises(DomainError):
        SizeCurve(BOOT, params07, [0.0, 1.0], [0.1], [0.0])
    with pytest.raises(DomainError):
        parse_size_csv("# rho=0.7\na,b\n")

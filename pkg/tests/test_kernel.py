import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pmscrit import kernel
from pmscrit.errors import BracketError, ConvergenceError, DomainError
from pmscrit.kernel import QuadratureSpec, RootBracket

# Reference values from mpmath at 30 digits.
NORMAL_QUANTILES = {
    0.975: 1.9599639845400542355,
    0.95: 1.6448536269514722,
    0.5: 0.0,
    1e-10: -6.3613409024040557,
}


@pytest.mark.parametrize("p, expected", NORMAL_QUANTILES.items())
def test_quantile_matches_reference(p, expected):
    assert kernel.std_normal_quantile(p) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_quantile_rejects_levels_outside_unit_interval(p):
    with pytest.raises(DomainError):
        kernel.std_normal_quantile(p)


@given(st.floats(min_value=1e-12, max_value=1 - 1e-12))
def test_quantile_inverts_cdf(p):
    x = kernel.std_normal_quantile(p)
    assert kernel.std_normal_cdf(x) == pytest.approx(p, rel=1e-12, abs=1e-15)


@given(st.floats(-8, 8), st.floats(0, 8))
def test_delta_is_even_in_shift(a, b):
    assert kernel.delta_fn(a, b) == pytest.approx(kernel.delta_fn(-a, b), abs=1e-15)
    assert 0.0 <= kernel.delta_fn(a, b) <= 1.0


def test_delta_keeps_tail_precision():
    # Phi(21) - Phi(19) is 0 in naive double arithmetic; the true mass is ~5e-81.
    expected = kernel.std_normal_cdf(-19.0) - kernel.std_normal_cdf(-21.0)
    assert expected > 0.0
    assert kernel.delta_fn(20.0, 1.0) == pytest.approx(expected, rel=1e-12)


def test_pdf_and_cdf_reject_non_finite():
    with pytest.raises(DomainError):
        kernel.std_normal_pdf(np.inf)
    with pytest.raises(DomainError):
        kernel.std_normal_cdf([0.0, np.nan])


def test_integrate_normal_mass():
    val = kernel.integrate(kernel.std_normal_pdf, -10, 10, QuadratureSpec(1e-13))
    assert val == pytest.approx(1.0 - 2 * kernel.std_normal_cdf(-10.0), abs=1e-13)


@pytest.mark.parametrize("deg", [0, 3, 9, 15])
def test_integrate_polynomials(deg):
    val = kernel.integrate(lambda x: x**deg, 0.0, 2.0, QuadratureSpec(1e-12))
    assert val == pytest.approx(2.0 ** (deg + 1) / (deg + 1), rel=1e-12)


def test_integrate_kink_with_breakpoint():
    val = kernel.integrate(np.abs, -1.0, 3.0, QuadratureSpec(1e-12), breakpoints=[0.0])
    assert val == pytest.approx(5.0, abs=1e-12)


def test_integrate_scalar_function():
    val = kernel.integrate(math.cos, 0.0, math.pi / 2, vectorized=False)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_integrate_degenerate_and_reversed_limits():
    assert kernel.integrate(np.exp, 1.0, 1.0) == 0.0
    with pytest.raises(DomainError):
        kernel.integrate(np.exp, 1.0, 0.0)


def test_integrate_reports_nonconvergence_with_estimate():
    spec = QuadratureSpec(1e-14, max_subdivisions=8)
    with pytest.raises(ConvergenceError) as info:
        kernel.integrate(lambda x: np.sin(1.0 / x), 1e-4, 1.0, spec)
    assert math.isfinite(info.value.estimate)
    assert info.value.error > 0


def test_quadrature_spec_validation():
    with pytest.raises(DomainError):
        QuadratureSpec(0.0)
    with pytest.raises(DomainError):
        QuadratureSpec(1e-8, max_subdivisions=0)


def test_find_root():
    root = kernel.find_root(lambda x: x**3 - 2.0, RootBracket(0.0, 2.0), tol=1e-13)
    assert root == pytest.approx(2.0 ** (1 / 3), abs=1e-12)


def test_find_root_requires_sign_change():
    with pytest.raises(BracketError):
        kernel.find_root(lambda x: x * x + 1.0, RootBracket(-1.0, 1.0))
    with pytest.raises(BracketError):
        RootBracket(1.0, 0.0)

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from subdiff.specialfn import (
    MLQuery,
    c_alpha_sup,
    gamma_fn,
    kernel_k,
    mittag_leffler,
    ml_bound_suite,
    ml_table,
)

# E_{alpha,beta}(-x) frozen from mpmath (Talbot inversion of s^(alpha-beta)/(s^alpha + x), 30 digits)
ML_ORACLE = [
    (0.25, 1.0, 0.5, 0.63767051920039336),
    (0.25, 1.0, 30.0, 0.026584961365091657),
    (0.5, 1.0, 2.0, 0.25539567631050574),
    (0.7, 1.0, 0.01, 0.98907457735011664),
    (0.7, 1.0, 7.0, 0.05333556480336571),
    (0.9, 1.0, 100.0, 0.001068972418287089),
    (0.5, 0.5, 3.0, 0.027186130003586436),
    (0.7, 0.7, 1.5, 0.12338382331923949),
    (0.9, 0.9, 20.0, 0.00028402595741192639),
    (0.4, 1.4, 5.0, 0.17507458577925256),
    (0.9, 1.0, 10000.0, 1.0513113058088607e-5),
    (0.3, 1.0, 1000.0, 0.00076993246495257764),
]


@pytest.mark.parametrize("x, expected", [(1.0, 1.0), (0.5, math.sqrt(math.pi)), (2.5, 1.5 * 0.5 * math.sqrt(math.pi))])
def test_gamma_examples(x, expected):
    assert gamma_fn(x) == pytest.approx(expected, rel=1e-12)


def test_gamma_matches_scipy_on_range():
    xs = np.linspace(0.01, 50.0, 997)
    assert np.allclose(gamma_fn(xs), special.gamma(xs), rtol=1e-12, atol=0)


@pytest.mark.parametrize("bad", [0.0, -1.0, -0.5])
def test_gamma_domain_error(bad):
    with pytest.raises(ValueError):
        gamma_fn(bad)


def test_kernel_examples():
    assert kernel_k(0.5, 1.0) == pytest.approx(1.0 / math.sqrt(math.pi), rel=1e-12)
    assert kernel_k(0.5, 4.0) == pytest.approx(0.5 / math.sqrt(math.pi), rel=1e-12)
    # mpmath, 30 digits
    assert kernel_k(0.3, 2.0) == pytest.approx(0.625745587208164603880168191724, rel=1e-12)


def test_kernel_domain_and_monotone():
    with pytest.raises(ValueError):
        kernel_k(0.5, 0.0)
    with pytest.raises(ValueError):
        kernel_k(0.5, -1.0)
    s = np.linspace(0.01, 10, 200)
    assert np.all(np.diff(kernel_k(0.4, s)) < 0)


def test_ml_examples():
    assert mittag_leffler(1.0, 1.0, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-12)
    assert mittag_leffler(0.7, 1.0, 0.0) == 1.0
    assert mittag_leffler(0.5, 1.0, 1.0) == pytest.approx(0.427583576155807004410750344491, rel=1e-10)


@pytest.mark.parametrize("alpha, beta, x, expected", ML_ORACLE)
def test_ml_against_frozen_oracle(alpha, beta, x, expected):
    assert mittag_leffler(alpha, beta, x) == pytest.approx(expected, rel=1e-10)


# alpha within rounding of 1: the pole of 1/Gamma and the Lorentzian peak of the
# integrand both sit at distance 1 - alpha; values frozen from mpmath at 40 digits
ML_NEAR_ONE_ORACLE = [
    (1e-8, 2.0, 0.13533528612347433, 0.13533528035671995),
    (1e-8, 20.0, 2.6207114689873501e-9, 2.0927335728802508e-9),
    (1e-8, 60.0, 1.7252023866113953e-10, 2.9782329390314544e-12),
    (1e-8, 300.0, 3.355780827043094e-11, 1.1261521837797388e-13),
    (2.0**-52, 2.0, 0.13533528323661276, 0.13533528323661263),
    (2.0**-52, 20.0, 2.0611536348632378e-9, 2.0611536231397736e-9),
    (2.0**-52, 60.0, 3.830718792892766e-18, 6.6130064406639503e-20),
    (2.0**-52, 300.0, 7.4513301998253354e-19, 2.5005601658206442e-21),
]


@pytest.mark.parametrize("eps, x, e_one, e_alpha", ML_NEAR_ONE_ORACLE)
def test_ml_alpha_near_one(eps, x, e_one, e_alpha):
    alpha = 1.0 - eps
    assert mittag_leffler(alpha, 1.0, x) == pytest.approx(e_one, rel=1e-10)
    assert mittag_leffler(alpha, alpha, x) == pytest.approx(e_alpha, rel=1e-10)
    xs = np.logspace(-2, 3, 60)
    assert np.allclose(ml_table(alpha, 1.0)(xs), mittag_leffler(alpha, 1.0, xs), rtol=1e-9, atol=0)


def test_ml_half_is_erfcx():
    xs = np.logspace(-3, 4, 300)
    assert np.allclose(mittag_leffler(0.5, 1.0, xs), special.erfcx(xs), rtol=1e-10, atol=0)


def test_ml_alpha_one_is_exp():
    xs = np.linspace(0, 50, 501)
    assert np.allclose(mittag_leffler(1.0, 1.0, xs), np.exp(-xs), rtol=1e-12, atol=0)


def test_ml_query_validation():
    with pytest.raises(ValueError):
        MLQuery(alpha=1.2, beta=1.0, x=1.0)
    with pytest.raises(ValueError):
        MLQuery(alpha=0.5, beta=0.0, x=1.0)
    with pytest.raises(ValueError):
        MLQuery(alpha=0.5, beta=1.0, x=-1.0)
    assert MLQuery(0.5, 1.0, 1.0).evaluate() == pytest.approx(special.erfcx(1.0), rel=1e-10)


def test_ml_table_matches_direct():
    xs = np.logspace(-2, 3.5, 400)
    for alpha, beta in [(0.3, 1.0), (0.6, 0.6), (0.9, 1.0)]:
        tab = ml_table(alpha, beta)(xs)
        ref = mittag_leffler(alpha, beta, xs)
        assert np.allclose(tab, ref, rtol=1e-9, atol=1e-15)


def test_bound_suite_examples():
    assert ml_bound_suite(0.5, [0, 1, 10, 100]).passed
    rep = ml_bound_suite(0.3, np.logspace(-3, 4, 1000))
    assert rep.passed, rep.violations[:3]
    tight = ml_bound_suite(0.999, [0.0])
    rows = {r[2]: r for r in tight.rows}
    assert rows["ii"][3] == pytest.approx(1.0) and rows["ii"][4] == pytest.approx(1.0)


def test_bound_suite_rejects_bad_input():
    with pytest.raises(ValueError):
        ml_bound_suite(0.5, [])
    with pytest.raises(ValueError):
        ml_bound_suite(0.5, [2.0, 1.0])


def test_bound_report_csv():
    text = ml_bound_suite(0.5, [0.0, 1.0]).to_csv()
    assert text.splitlines()[0] == "alpha,x,bound_id,lhs,rhs,pass"


def test_c_alpha_examples():
    ca = c_alpha_sup(0.5)
    assert math.isfinite(ca) and ca > 0
    for a in (0.2, 0.5, 0.8):
        assert c_alpha_sup(a) >= mittag_leffler(a, a, 1.0)
    assert abs(c_alpha_sup(0.5, 4000) - ca) < 1e-6


@settings(max_examples=40, deadline=None)
@given(
    alpha=st.floats(0.1, 1.0),
    x=st.floats(0.0, 1e3, allow_nan=False),
    dx=st.floats(1e-3, 10.0),
)
def test_ml_unit_interval_monotone_and_rational_bound(alpha, x, dx):
    e0 = mittag_leffler(alpha, 1.0, x)
    e1 = mittag_leffler(alpha, 1.0, x + dx)
    assert -1e-12 <= e1 <= e0 + 1e-12 <= 1.0 + 2e-12
    assert e0 <= 1.0 / (1.0 + x / math.gamma(1.0 + alpha)) + 1e-12


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.15, 0.95), c0=st.floats(0.1, 10.0), s=st.floats(0.05, 20.0))
def test_ml_derivative_identity(alpha, c0, s):
    h = 1e-4 * s
    fd = -(mittag_leffler(alpha, 1.0, c0 * (s + h) ** alpha) - mittag_leffler(alpha, 1.0, c0 * (s - h) ** alpha)) / (2 * h)
    exact = c0 * s ** (alpha - 1) * mittag_leffler(alpha, alpha, c0 * s**alpha)
    assert fd == pytest.approx(exact, rel=1e-6)

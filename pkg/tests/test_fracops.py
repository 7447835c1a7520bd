from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from subdiff.fracops import (
    CaputoWeights,
    TimeGrid,
    caputo_apply,
    caputo_series,
    coercivity_check,
    l1_weights,
    make_history,
    max_principle_check,
    rl_convolve,
    soe_kernel,
)


def test_grid_validation_and_kinds():
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0]))
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.1, 0.5]))
    with pytest.raises(ValueError):
        TimeGrid(np.array([0.0, 0.5, 0.5]))
    g = TimeGrid.graded(2.0, 10, 2.0)
    assert g.nodes[3] == pytest.approx(2.0 * (0.3) ** 2)
    assert g.T == 2.0 and g.N == 10
    u = TimeGrid.uniform(1.0, 4)
    assert np.allclose(u.nodes, [0, 0.25, 0.5, 0.75, 1.0])
    assert TimeGrid.default_gamma(0.5) == pytest.approx(3.0)
    assert TimeGrid.default_gamma(0.2) == pytest.approx(4.0)


def test_leading_weight_uniform():
    tau = 0.01
    w = l1_weights(TimeGrid.uniform(1.0, 100), 0.4)
    assert w.leading(7) == pytest.approx(tau**-0.4 / math.gamma(1.6), rel=1e-13)


def test_alpha_one_backward_difference():
    g = TimeGrid.uniform(1.0, 10)
    w = l1_weights(g, 1.0)
    row = w.row(5)
    assert np.all(row[:-1] == 0.0) and row[-1] == pytest.approx(10.0)
    v = g.nodes**2
    assert caputo_apply(w, v, 6) == pytest.approx((v[6] - v[5]) / 0.1)


@pytest.mark.parametrize("alpha", [0.3, 0.7, 1.0])
def test_constant_history_vanishes(alpha):
    w = l1_weights(TimeGrid.graded(1.0, 40, 2.0), alpha)
    out = caputo_series(w, np.full(41, 5.0))
    assert np.all(out[1:] == 0.0)


def test_caputo_of_t_is_exact():
    g = TimeGrid.uniform(1.0, 100)
    w = l1_weights(g, 0.5)
    assert caputo_apply(w, g.nodes, 100) == pytest.approx(2.0 / math.sqrt(math.pi), rel=1e-12)


def test_caputo_index_errors():
    w = l1_weights(TimeGrid.uniform(1.0, 5), 0.5)
    with pytest.raises(IndexError):
        caputo_apply(w, np.zeros(6), 0)
    with pytest.raises(IndexError):
        caputo_apply(w, np.zeros(6), 6)
    with pytest.raises(IndexError):
        w.row(7)


def test_caputo_order_on_t_squared():
    alpha = 0.5
    errs = []
    for N in (40, 80, 160):
        g = TimeGrid.uniform(1.0, N)
        exact = 2 * g.nodes[1:] ** (2 - alpha) / math.gamma(3 - alpha)
        approx = caputo_series(l1_weights(g, alpha), g.nodes**2)[1:]
        errs.append(np.max(np.abs(approx - exact)))
    assert errs[0] / errs[1] >= 2.5 and errs[1] / errs[2] >= 2.5
    assert errs[1] / errs[2] == pytest.approx(2 ** (2 - alpha), rel=0.15)


def test_caputo_linear_and_vector_valued():
    g = TimeGrid.graded(1.0, 30, 1.5)
    w = l1_weights(g, 0.6)
    a, b = np.sin(3 * g.nodes), g.nodes**3
    lhs = caputo_series(w, 2 * a - 3 * b)
    rhs = 2 * caputo_series(w, a) - 3 * caputo_series(w, b)
    assert np.allclose(lhs[1:], rhs[1:], atol=1e-12)
    stacked = caputo_series(w, np.stack([a, b], axis=1))
    assert np.allclose(stacked[1:, 0], caputo_series(w, a)[1:])


def test_rl_of_one_is_exact():
    g = TimeGrid.graded(2.0, 50, 2.0)
    alpha = 0.35
    out = rl_convolve(alpha, np.ones(51), g)
    assert out[0] == 0.0
    assert np.allclose(out, g.nodes**alpha / math.gamma(1 + alpha), rtol=1e-12, atol=0)
    assert np.all(rl_convolve(alpha, np.zeros(51), g) == 0.0)


def test_rl_beta_integral_with_singular_first_panel():
    # int_0^t (t-s)^(a-1) s^(-a) ds = B(a, 1-a)
    alpha = 0.4
    g = TimeGrid.graded(1.0, 200, 2.0)
    v = np.zeros(201)
    v[1:] = g.nodes[1:] ** (-alpha)
    out = rl_convolve(alpha, v, g, singular_exponent=alpha)
    expected = special.beta(alpha, 1 - alpha) / math.gamma(alpha)
    ref, _ = integrate.quad(lambda s: 1 / math.gamma(alpha), 0, 1, weight="alg", wvar=(-alpha, alpha - 1.0))
    assert ref == pytest.approx(expected, rel=1e-10)
    assert out[-1] == pytest.approx(expected, rel=1e-3)
    assert np.allclose(out[20:], expected, rtol=1e-2)
    assert np.allclose(out[1:], expected, rtol=0.1)


@pytest.mark.parametrize("alpha", [0.3, 0.6, 0.9])
def test_composition_identity(alpha):
    N = 200
    g = TimeGrid.uniform(1.0, N)
    v = np.sin(2 * g.nodes) + g.nodes**2
    dv = caputo_series(l1_weights(g, alpha), v)
    dv[0] = 0.0
    back = rl_convolve(alpha, dv, g)
    assert np.max(np.abs(back - (v - v[0]))) <= 10 / N


@settings(max_examples=30, deadline=None)
@given(
    alpha=st.floats(0.1, 0.95),
    seed=st.integers(0, 10_000),
)
def test_rl_monotone_and_nonnegative(alpha, seed):
    rng = np.random.default_rng(seed)
    g = TimeGrid.uniform(1.0, 30)
    w = rng.random(31)
    v = w + rng.random(31)
    lo, hi = rl_convolve(alpha, w, g), rl_convolve(alpha, v, g)
    assert np.all(lo >= 0.0)
    assert np.all(hi >= lo)


def test_coercivity_examples():
    g = TimeGrid.uniform(1.0, 100)
    w = l1_weights(g, 0.5)
    m, ok = coercivity_check(w, np.full(101, 3.0))
    assert ok and np.all(m == 0.0)
    m, ok = coercivity_check(w, g.nodes)
    assert ok and np.all(m >= 0.0)


def test_coercivity_random_trigonometric():
    rng = np.random.default_rng(1)
    g = TimeGrid.graded(2.0, 60, 2.0)
    t = g.nodes
    for alpha in (0.25, 0.5, 0.85):
        w = CaputoWeights(g, alpha)
        for _ in range(100 // 3 + 1):
            k = np.arange(1, 6)
            a, b = rng.normal(size=5), rng.normal(size=5)
            v = rng.normal() + np.sin(np.outer(t, k)) @ a + np.cos(np.outer(t, k)) @ b
            _, ok = coercivity_check(w, v, tol=1e-12)
            assert ok


def test_max_principle_examples():
    g = TimeGrid.uniform(3.0, 300)
    w = l1_weights(g, 0.5)
    inc = g.nodes**2
    assert max_principle_check(w, inc)
    assert caputo_apply(w, inc, 300) > 0
    assert max_principle_check(w, np.full(301, 2.0))
    s = np.sin(g.nodes)
    n = int(np.argmax(s))
    assert abs(g.nodes[n] - math.pi / 2) < 0.02
    assert caputo_apply(w, s, n) >= 0.0 and max_principle_check(w, s)


def test_soe_kernel_accuracy_and_history_equivalence():
    alpha = 0.4
    g = TimeGrid.graded(5.0, 300, 2.0)
    ker = soe_kernel(alpha, float(np.min(np.diff(g.nodes))), 5.0, tol=1e-8)
    s = np.geomspace(ker.delta, 5.0, 500)
    assert np.max(np.abs(ker(s) / (s**-alpha / math.gamma(1 - alpha)) - 1)) <= 1e-8
    w = CaputoWeights(g, alpha)
    v = np.stack([np.cos(g.nodes), np.exp(-g.nodes)], axis=1)
    direct = make_history(w, 2, "direct")
    soe = make_history(w, 2, "soe")
    for n in range(1, g.N + 1):
        a, b = direct.memory(n), soe.memory(n)
        assert np.allclose(a, b, rtol=1e-7, atol=1e-7)
        direct.push(v[n] - v[n - 1])
        soe.push(v[n] - v[n - 1])
    with pytest.raises(ValueError):
        make_history(w, 2, "fft")


def test_weights_csv(tmp_path):
    w = l1_weights(TimeGrid.uniform(1.0, 3), 0.5)
    path = tmp_path / "w.csv"
    w.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "n,j,weight" and len(lines) == 1 + 6

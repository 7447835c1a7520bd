from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import special

from subdiff.evolve import (
    BlowUp,
    MonitorConstants,
    boundedness_monitor,
    caputo_norm_bound,
    difference_residual,
    energy_inequality_lo,
    monitor_energy,
    nonlinear_remainder,
    remainder_coefficient,
    solve_transient,
    time_derivative_series,
)
from subdiff.fracops import TimeGrid
from subdiff.model import Problem, Source, cubic, quadratic, steady_source, zero_nonlinearity
from subdiff.space import BoundaryCondition, EllipticOp, Grid1D, norm_L2
from subdiff.specialfn import mittag_leffler
from subdiff.steady import solve_steady


def linear_problem(alpha, tgrid, nx=101, u0=None, q=-1.0, r=None):
    g = Grid1D(0.0, 1.0, nx)
    u0 = np.sin(np.pi * g.x) if u0 is None else u0
    src = steady_source(np.zeros(nx)) if r is None else r
    return Problem(g, EllipticOp(1.0, 0.0, BoundaryCondition()), alpha, 0.0, q, zero_nonlinearity(), src, u0, tgrid)


def discrete_lambda(nx):
    h = 1.0 / (nx - 1)
    return 4.0 / h**2 * math.sin(math.pi * h / 2) ** 2 + 1.0


def cubic_problem(alpha, tgrid, nx=41, amp=0.5, q=-1.0, r_inf=None):
    g = Grid1D(0.0, 1.0, nx)
    r_inf = np.zeros(nx) if r_inf is None else r_inf
    base = Problem(g, EllipticOp(1.0, 0.0, BoundaryCondition()), alpha, 1.0, q, cubic(), steady_source(r_inf),
                   np.zeros(nx), tgrid)
    u_inf = solve_steady(base).u
    u0 = u_inf + amp * np.sin(np.pi * g.x) * np.sin(3 * np.pi * g.x)
    return base.replace(u0=u0), u_inf


def test_fixed_point_property():
    g = Grid1D(0.0, 1.0, 41)
    r_inf = g.field(lambda x: 10 * x * (1 - x))
    pb, u_inf = cubic_problem(0.6, TimeGrid.graded(2.0, 40, 2.0), r_inf=r_inf, amp=0.0)
    hist = solve_transient(pb, u_inf)
    assert np.max(np.abs(hist.u - u_inf)) <= 100 * 1e-10 * max(1.0, np.max(np.abs(u_inf)))


def test_alpha_one_heat_mode():
    N, nx = 400, 101
    pb = linear_problem(1.0, TimeGrid.uniform(1.0, N), nx)
    hist = solve_transient(pb)
    lam = math.pi**2 + 1
    exact = np.exp(-lam * hist.t)[:, None] * np.sin(np.pi * pb.grid.x)[None, :]
    err = np.max(np.abs(hist.u - exact))
    assert err < 1e-2
    # time error dominates and is first order: halving N roughly doubles it
    coarse = solve_transient(pb.replace(tgrid=TimeGrid.uniform(1.0, N // 2)))
    err_c = np.max(np.abs(coarse.u - np.exp(-lam * coarse.t)[:, None] * np.sin(np.pi * pb.grid.x)[None, :]))
    assert 1.6 < err_c / err < 2.4


def test_subdiffusive_mittag_leffler_mode():
    alpha, nx = 0.5, 101
    pb = linear_problem(alpha, TimeGrid.graded(1.0, 400, 3.0), nx)
    hist = solve_transient(pb)
    amp = mittag_leffler(alpha, 1.0, discrete_lambda(nx) * hist.t**alpha)
    exact = amp[:, None] * np.sin(np.pi * pb.grid.x)[None, :]
    assert np.max(np.abs(hist.u - exact)) < 2e-3


def test_larger_alpha_decays_faster_after_crossover():
    amps = []
    for alpha in (0.5, 0.7, 0.9):
        hist = solve_transient(linear_problem(alpha, TimeGrid.graded(1.0, 200, 2.0), 41))
        mid = hist.u[:, 20]
        amps.append(mid[hist.t >= 0.5])
    assert np.all(amps[0] > amps[1]) and np.all(amps[1] > amps[2])


def test_alpha_limit_close_to_backward_euler():
    # literal invariant: L2-relative gap at t = 1 on the linear scenario (q = -1).
    # The exact modes already differ by a factor of 7 there (see the oracle test below),
    # so this test documents an invariant that the continuous problem does not satisfy.
    tg = TimeGrid.uniform(1.0, 200)
    a = solve_transient(linear_problem(0.999, tg, 41))
    b = solve_transient(linear_problem(1.0, tg, 41))
    rel = norm_L2(a.u[-1] - b.u[-1], a.grid) / norm_L2(b.u[-1], b.grid)
    assert rel <= 0.05


def test_alpha_limit_oracle_and_early_closeness():
    nx = 41
    tg = TimeGrid.uniform(1.0, 400)
    a = solve_transient(linear_problem(0.999, tg, nx))
    b = solve_transient(linear_problem(1.0, tg, nx))
    lam = discrete_lambda(nx)
    mode = np.sin(np.pi * a.grid.x)
    exact = mittag_leffler(0.999, 1.0, lam * a.t**0.999)
    amp = a.u[:, nx // 2] / mode[nx // 2]
    assert np.max(np.abs(amp - exact)) < 5e-3
    # the power-law tail separates the two only after the exponential has died out
    n = int(np.searchsorted(tg.nodes, 0.3))
    rel = norm_L2(a.u[n] - b.u[n], a.grid) / norm_L2(b.u[n], b.grid)
    assert rel <= 0.05
    assert mittag_leffler(0.999, 1.0, lam) / math.exp(-lam) > 5.0


def test_dirichlet_data_kept_every_step():
    g = Grid1D(0.0, 1.0, 21)
    bc = BoundaryCondition("dirichlet", 1.0, -0.5)
    u0 = 1.0 - 1.5 * g.x
    pb = Problem(g, EllipticOp(1.0, 0.0, bc), 0.5, 1.0, -1.0, cubic(), steady_source(np.zeros(21)), u0,
                 TimeGrid.uniform(1.0, 20))
    hist = solve_transient(pb)
    assert np.all(hist.u[:, 0] == 1.0) and np.all(hist.u[:, -1] == -0.5)


def test_causality():
    tg = TimeGrid.uniform(1.0, 30)
    g = Grid1D(0.0, 1.0, 21)
    prof = np.sin(np.pi * g.x)
    late = lambda t: np.where(t > 0.5, 1.0, 0.0)
    a = solve_transient(linear_problem(0.6, tg, 21))
    b = solve_transient(linear_problem(0.6, tg, 21, r=Source(np.zeros(21), prof, late)))
    early = tg.nodes <= 0.5
    assert np.array_equal(a.u[early], b.u[early])
    assert not np.allclose(a.u[-1], b.u[-1])


def test_blowup_detected_with_partial_history():
    pb = linear_problem(1.0, TimeGrid.uniform(5.0, 100), 21, q=50.0)
    with pytest.raises(BlowUp) as info:
        solve_transient(pb)
    exc = info.value
    assert exc.step < 100 and exc.history is not None and not exc.history.completed
    assert exc.history.u.shape[0] == exc.step + 1


def test_soe_history_matches_direct():
    pb, u_inf = cubic_problem(0.4, TimeGrid.graded(3.0, 150, 2.5))
    a = solve_transient(pb, u_inf)
    b = solve_transient(pb, u_inf, history_method="soe")
    assert np.max(np.abs(a.u - b.u)) < 1e-7


def test_difference_residual_small():
    pb, u_inf = cubic_problem(0.6, TimeGrid.graded(1.0, 60, 2.0), amp=1.0)
    hist = solve_transient(pb, u_inf)
    for n in (1, 10, 60):
        res = difference_residual(hist, u_inf, n)
        assert norm_L2(res, pb.grid) <= 1e-8
    with pytest.raises(IndexError):
        difference_residual(hist, u_inf, 0)


def test_remainder_cubic_closed_form():
    rng = np.random.default_rng(0)
    ui, w = rng.normal(size=(2, 50))
    coef = remainder_coefficient(cubic(), ui, w)
    assert np.allclose(coef * w**2, 3 * ui * w**2 + w**3, rtol=1e-13, atol=1e-13)
    assert np.allclose(coef, 3 * ui + w)
    assert np.allclose(coef * w**2, (ui + w) ** 3 - ui**3 - 3 * ui**2 * w)


def test_remainder_quadratic_one_node():
    rng = np.random.default_rng(1)
    ui, w = rng.normal(size=(2, 20))
    assert np.allclose(remainder_coefficient(quadratic(), ui, w, nodes=1) * w**2, w**2, rtol=1e-14)


def test_nonlinear_remainder_scales_with_p():
    pb, u_inf = cubic_problem(0.5, TimeGrid.uniform(1.0, 2))
    w = 0.1 * np.ones(pb.grid.nx)
    assert np.allclose(nonlinear_remainder(pb.replace(p=2.0), u_inf, w), 2 * nonlinear_remainder(pb, u_inf, w))


def test_monitor_trivial_trajectory():
    pb, u_inf = cubic_problem(0.5, TimeGrid.graded(1.0, 30, 2.0), amp=0.0)
    trace = monitor_energy(solve_transient(pb, u_inf), u_inf, "hi")
    assert np.all(trace.bound_lhs <= 1e-20)
    assert np.all(trace.bound_holds) and not trace.barrier_tripped
    assert np.all(trace.D1 <= 1e-20)


def test_monitor_small_data_allen_cahn():
    g = Grid1D(0.0, 1.0, 41)
    pb, u_inf = cubic_problem(0.5, TimeGrid.graded(10.0, 200, 3.0), amp=0.02)
    trace = monitor_energy(solve_transient(pb, u_inf), u_inf, "hi")
    assert np.all(trace.D1 <= 0.5) and not trace.barrier_tripped
    assert np.all(trace.bound_holds)
    for key in ("C_ell", "c", "C_tilde", "mu_star", "phi1_variant"):
        assert key in trace.header
    assert g.nx == pb.grid.nx


def test_monitor_large_data_latches_flag():
    pb, u_inf = cubic_problem(0.5, TimeGrid.graded(1.0, 60, 2.0), amp=3.0, q=0.0)
    trace = monitor_energy(solve_transient(pb, u_inf), u_inf, "hi")
    assert trace.header["conditions_ok"] is False
    assert trace.barrier_tripped
    ok = trace.barrier_ok.astype(int)
    assert np.all(np.diff(ok) <= 0)  # once violated, stays violated


def test_monitor_regimes_and_csv():
    pb, u_inf = cubic_problem(0.7, TimeGrid.graded(2.0, 40, 2.0), amp=0.05)
    hist = solve_transient(pb, u_inf)
    K = MonitorConstants(pb, n_random=16)
    for regime in ("lo", "hi", "between"):
        tr = monitor_energy(hist, u_inf, regime, constants=K)
        assert tr.s == (0 if regime == "lo" else 1)
        for col in tr.COLUMNS:
            assert np.all(np.isfinite(np.asarray(getattr(tr, col), dtype=float)))
    text = tr.to_csv()
    assert text.splitlines()[0] == ",".join(tr.COLUMNS)
    with pytest.raises(ValueError):
        monitor_energy(hist, u_inf, "mid", constants=K)
    a = monitor_energy(hist, u_inf, "hi", constants=K, phi1_variant="as_printed")
    assert a.header["phi1_variant"] == "as_printed"


def test_discrete_energy_inequality():
    pb, u_inf = cubic_problem(0.5, TimeGrid.graded(2.0, 80, 3.0), amp=1.0)
    lhs, rhs = energy_inequality_lo(solve_transient(pb, u_inf), u_inf)
    assert np.all(lhs <= rhs + 1e-8)


def test_time_derivative_series_steady_and_heat():
    pb, u_inf = cubic_problem(0.5, TimeGrid.uniform(1.0, 20), amp=0.0)
    ut, cap, res = time_derivative_series(solve_transient(pb, u_inf), u_inf)
    assert np.nanmax(np.abs(ut)) < 1e-10 and np.nanmax(np.abs(cap)) < 1e-10 and np.max(res) < 1e-8

    heat = linear_problem(1.0, TimeGrid.uniform(1.0, 2000), 201)
    hist = solve_transient(heat)
    ut, _, _ = time_derivative_series(hist, np.zeros(201), s=1)
    lam = math.pi**2 + 1
    got = norm_L2(ut[1:], heat.grid)
    exact = lam * np.exp(-lam * hist.t[1:]) * math.sqrt(0.5)
    late = hist.t[1:] >= 0.05
    assert np.max(np.abs(got[late] / exact[late] - 1)) < 0.05


@pytest.mark.parametrize("alpha", [0.7, 0.8, 0.9])
def test_caputo_bound_exponent(alpha):
    # int_0^t k^alpha(t - s) s^(-alpha/2) ds = t^(1 - 3 alpha / 2) Gamma(1 - alpha/2) / Gamma(2 - 3 alpha / 2)
    tg = TimeGrid.graded(10.0, 400, 2.0)
    v = np.zeros(401)
    v[1:] = tg.nodes[1:] ** (-alpha / 2)
    out = caputo_norm_bound(alpha, v, tg, singular_exponent=alpha / 2)
    t = tg.nodes[1:]
    exact = t ** (1 - 1.5 * alpha) * special.gamma(1 - alpha / 2) / special.gamma(2 - 1.5 * alpha)
    tail = t >= 1.0
    assert np.max(np.abs(out[1:][tail] / exact[tail] - 1)) < 1e-2
    slope = np.polyfit(np.log(t[tail]), np.log(out[1:][tail]), 1)[0]
    assert slope == pytest.approx(1 - 1.5 * alpha, abs=0.01)
    with pytest.raises(ValueError):
        caputo_norm_bound(1.0, v, tg)


def test_boundedness_monitor_examples():
    zero = linear_problem(0.5, TimeGrid.uniform(1.0, 20), 21, u0=np.zeros(21))
    rep = boundedness_monitor(solve_transient(zero))
    assert rep.C_T == 0.0 and rep.lhs == 0.0
    dec = linear_problem(0.5, TimeGrid.uniform(2.0, 100), 41)
    rep = boundedness_monitor(solve_transient(dec))
    assert 0.1 <= rep.C_T <= 10.0 and rep.preconditions_ok
    growth = []
    for T in (0.5, 1.0):
        pb = linear_problem(1.0, TimeGrid.uniform(T, int(200 * T)), 41, q=15.0)
        growth.append(boundedness_monitor(solve_transient(pb)).C_T)
    assert growth[1] > growth[0] > 1.0

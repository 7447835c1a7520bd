from __future__ import annotations

import math

import numpy as np
import pytest

from subdiff.fracops import TimeGrid
from subdiff.model import Problem, cubic, steady_source, zero_nonlinearity
from subdiff.space import BoundaryCondition, EllipticOp, Grid1D, norm_L2
from subdiff.steady import (
    NewtonDivergence,
    SingularJacobian,
    newton_step,
    smallest_jacobian_eigenvalue,
    solve_steady,
)


def build(nx, nl, p, q, r_inf, d=0.0, bc=None):
    g = Grid1D(0.0, 1.0, nx)
    bc = bc or BoundaryCondition()
    u0 = np.zeros(nx)
    if bc.dirichlet:
        u0[0], u0[-1] = bc.left, bc.right
    return Problem(
        grid=g,
        op=EllipticOp(1.0, d, bc),
        alpha=1.0,
        p=p,
        q=q,
        nl=nl,
        source=steady_source(g.field(r_inf)),
        u0=u0,
        tgrid=TimeGrid.uniform(1.0, 4),
    )


def manufactured(nx):
    return build(nx, cubic(), 1.0, 0.0, lambda x: math.pi**2 * np.sin(math.pi * x) + np.sin(math.pi * x) ** 3)


def test_trivial_zero_solution():
    pb = build(21, cubic(), 0.0, 0.0, 0.0)
    res = solve_steady(pb)
    assert np.all(res.u == 0.0)


def test_eigenfunction_oracle():
    pb = build(101, zero_nonlinearity(), 0.0, 0.0, lambda x: np.sin(math.pi * x), d=1.0)
    u = solve_steady(pb).u
    exact = np.sin(math.pi * pb.grid.x) / (math.pi**2 + 1)
    assert np.max(np.abs(u - exact)) < 1e-4


def test_manufactured_second_order():
    errs = []
    for nx in (21, 41, 81):
        pb = manufactured(nx)
        res = solve_steady(pb)
        assert res.iterations <= 12
        assert res.residuals[-1] <= 1e-10 * norm_L2(pb.r_inf, pb.grid) + 1e-12
        errs.append(norm_L2(res.u - np.sin(math.pi * pb.grid.x), pb.grid))
    for a, b in zip(errs, errs[1:]):
        assert 3.6 <= a / b <= 4.4


def test_residual_decreases_strictly():
    res = solve_steady(manufactured(41), guess=np.zeros(41))
    assert np.all(np.diff(res.residuals) < 0)


def test_newton_step_properties():
    pb = manufactured(41)
    u = solve_steady(pb).u
    new, r = newton_step(u, pb)
    assert np.max(np.abs(new - u)) < 1e-12
    lin = build(41, zero_nonlinearity(), 0.0, -1.0, lambda x: 1 + x)
    res = solve_steady(lin, guess=np.zeros(41))
    assert res.iterations == 1


def test_inhomogeneous_dirichlet_data():
    pb = build(41, cubic(), 1.0, -1.0, 0.0, bc=BoundaryCondition("dirichlet", 0.5, -0.25))
    u = solve_steady(pb).u
    assert u[0] == 0.5 and u[-1] == -0.25


def test_neumann_problem():
    pb = build(41, cubic(), 1.0, -1.0, 2.0, bc=BoundaryCondition("neumann"))
    u = solve_steady(pb).u
    # constant state with -q u + u^3 = r: u + u^3 = 2
    assert np.allclose(u, 1.0, atol=1e-10)


def test_jacobian_positive_when_pinfty_holds():
    pb = manufactured(41)
    u = solve_steady(pb).u
    assert smallest_jacobian_eigenvalue(pb, u) > 0


def test_monotone_fallback_agrees():
    pb = manufactured(41)
    a = solve_steady(pb).u
    b = solve_steady(pb, method="monotone").u
    assert np.max(np.abs(a - b)) < 1e-8
    with pytest.raises(ValueError):
        solve_steady(pb, method="bisection")


def test_divergence_reports_best_iterate():
    # -u'' = -u^3 - 400 pi^2 sin(pi x) with a tiny iteration budget
    pb = build(41, cubic(), -1.0, 0.0, lambda x: 400 * np.sin(math.pi * x))
    with pytest.raises(NewtonDivergence) as info:
        solve_steady(pb, max_iter=2)
    assert info.value.best is not None and info.value.best.shape == (41,)


def test_singular_jacobian_names_node():
    # Neumann, d = 0, q = 0, p = 0: the Jacobian annihilates constants
    pb = build(11, zero_nonlinearity(), 0.0, 0.0, 1.0, bc=BoundaryCondition("neumann"))
    with pytest.raises(SingularJacobian) as info:
        solve_steady(pb, guess=np.zeros(11))
    assert info.value.node is not None

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subdiff import space
from subdiff.space import (
    BoundaryCondition,
    DualNorm,
    EllipticityError,
    EllipticOp,
    Grid1D,
    assemble,
    elliptic_regularity_constant,
    embedding_constant,
    embedding_constants,
    inner,
    norm_Hminus1,
    norm_Hs,
    norm_Lp,
    seminorm_H1_sq,
)

DIR = BoundaryCondition("dirichlet")
NEU = BoundaryCondition("neumann")


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid1D(1.0, 0.0, 10)
    with pytest.raises(ValueError):
        Grid1D(0.0, 1.0, 2)
    g = Grid1D(0.0, 2.0, 5)
    assert g.h == 0.5 and g.weights.sum() == pytest.approx(2.0)
    with pytest.raises(ValueError):
        BoundaryCondition("robin")


def test_ellipticity_errors():
    g = Grid1D(0.0, 1.0, 11)
    with pytest.raises(EllipticityError):
        assemble(EllipticOp(g.field(lambda x: x - 0.5)), g)
    with pytest.raises(EllipticityError):
        assemble(EllipticOp(1.0, -1.0), g)


def test_constant_stencil():
    g = Grid1D(0.0, 1.0, 11)
    A = assemble(EllipticOp(1.0, 0.0, DIR), g).matrix.toarray()
    h2 = g.h**2
    for i in range(1, 10):
        assert A[i, i - 1] == pytest.approx(-1 / h2)
        assert A[i, i] == pytest.approx(2 / h2)
        assert A[i, i + 1] == pytest.approx(-1 / h2)
    inner_block = A[1:-1, 1:-1]
    assert np.allclose(inner_block, inner_block.T)
    assert np.min(np.linalg.eigvalsh(inner_block)) > 0


def test_laplacian_of_sine_second_order():
    errs = []
    for nx in (21, 41, 81):
        g = Grid1D(0.0, 1.0, nx)
        u = np.sin(np.pi * g.x)
        Au = assemble(EllipticOp(1.0, 0.0, DIR), g).apply(u)
        errs.append(np.max(np.abs(Au[1:-1] - math.pi**2 * u[1:-1])))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)


def test_variable_coefficient_flux_form():
    errs = []
    for nx in (41, 81):
        g = Grid1D(0.0, 1.0, nx)
        D = g.field(lambda x: 1 + x)
        u = np.sin(np.pi * g.x)
        exact = -(np.pi * np.cos(np.pi * g.x) + (1 + g.x) * -(np.pi**2) * np.sin(np.pi * g.x)) + 2 * u
        Au = assemble(EllipticOp(D, 2.0, DIR), g).apply(u)
        errs.append(np.max(np.abs(Au - exact)[1:-1]))
    assert errs[0] / errs[1] > 3.5


def test_neumann_constants_in_kernel():
    g = Grid1D(0.0, 1.0, 21)
    A = assemble(EllipticOp(g.field(lambda x: 1 + x**2), 0.0, NEU), g)
    assert np.allclose(A.apply(np.full(21, 3.0)), 0.0, atol=1e-10)


def test_norm_examples():
    g = Grid1D(0.0, 1.0, 401)
    assert norm_Hs(np.ones(401), g, 0) == pytest.approx(1.0)
    s = np.sin(np.pi * g.x)
    assert norm_Hs(s, g, 0) == pytest.approx(math.sqrt(0.5), rel=1e-10)
    assert norm_Hs(s, g, 1) == pytest.approx(math.sqrt(0.5 + math.pi**2 / 2), rel=1e-4)
    assert norm_Hs(s, g, 2) == pytest.approx(math.sqrt(0.5 + math.pi**2 / 2 + math.pi**4 / 2), rel=1e-4)
    with pytest.raises(ValueError):
        norm_Hs(s, g, 3)


def test_hminus1_examples():
    g = Grid1D(0.0, 1.0, 201)
    assert norm_Hminus1(np.zeros(201), g, DIR) == 0.0
    val = norm_Hminus1(np.sin(np.pi * g.x), g, DIR)
    assert val == pytest.approx(math.sqrt(1 / (2 * (math.pi**2 + 1))), rel=1e-4)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 100_000), neumann=st.booleans())
def test_norm_chain(seed, neumann):
    bc = NEU if neumann else DIR
    g = Grid1D(0.0, 1.0, 41)
    v = np.random.default_rng(seed).standard_normal(41)
    if bc.dirichlet:
        v[0] = v[-1] = 0.0
    hm1 = DualNorm(g, bc)(v)
    l2, h1, h2 = (norm_Hs(v, g, s) for s in (0, 1, 2))
    assert hm1 <= l2 * (1 + 1e-12) and l2 <= h1 <= h2


def test_operator_coercive_on_gradient():
    rng = np.random.default_rng(3)
    g = Grid1D(0.0, 1.0, 51)
    D = g.field(lambda x: 0.5 + x**2)
    A = assemble(EllipticOp(D, 0.0, DIR), g)
    for _ in range(20):
        v = rng.standard_normal(51)
        v[0] = v[-1] = 0.0
        lhs = inner(A.matvec(v), v, g)
        assert lhs >= A.c_D * seminorm_H1_sq(v, g) * (1 - 1e-12)


def test_solve_with_shift():
    g = Grid1D(0.0, 1.0, 101)
    A = assemble(EllipticOp(1.0, 0.0, DIR), g)
    rhs = np.sin(np.pi * g.x)
    v = A.solve(rhs, shift=1.0)
    assert v[0] == 0.0 and v[-1] == 0.0
    assert np.allclose((A.matvec(v) + v)[1:-1], rhs[1:-1])


def test_lp_norm():
    g = Grid1D(0.0, 1.0, 101)
    assert norm_Lp(-np.ones(101), g, math.inf) == 1.0
    assert norm_Lp(np.ones(101) * 2, g, 3.0) == pytest.approx(2.0)


def test_embedding_examples():
    g = Grid1D(0.0, 1.0, 101)
    fam = space.test_functions(g, DIR, n_random=16)
    allv = np.vstack(list(fam.values()))
    assert embedding_constant(allv, g, DIR, "L2", 2.0) == pytest.approx(1.0)
    s = np.sin(np.pi * g.x)
    candidate = 1.0 / norm_Hs(s, g, 1)
    tab = embedding_constants(g, DIR, n_random=16)
    assert tab.get("H1", math.inf) >= candidate
    assert tab.empirical and len(tab.rows()) == len(tab.values)
    small = embedding_constants(g, DIR, n_random=8)
    large = embedding_constants(g, DIR, n_random=64)
    for key, val in small.values.items():
        assert large[key] >= val * (1 - 1e-12)


def test_elliptic_regularity_stable_under_refinement():
    vals = []
    for nx in (41, 81, 161):
        g = Grid1D(0.0, 1.0, nx)
        op = assemble(EllipticOp(g.field(lambda x: 1 + 0.5 * np.sin(2 * np.pi * x)), 0.0, DIR), g)
        vals.append(elliptic_regularity_constant(op, n_random=32))
    assert max(vals) / min(vals) < 1.5
    assert all(math.isfinite(v) and v > 0 for v in vals)


def test_field_csv(tmp_path):
    g = Grid1D(0.0, 1.0, 3)
    path = tmp_path / "u.csv"
    space.field_to_csv(path, g, np.array([0.0, 1.0, 0.0]), "u_inf")
    assert path.read_text().splitlines() == ["x,u_inf", "0.0,0.0", "0.5,1.0", "1.0,0.0"]

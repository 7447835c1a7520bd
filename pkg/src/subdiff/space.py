"""One-dimensional grids, the discrete elliptic operator and discrete Sobolev norms.

Conventions
-----------
Fields are plain ``numpy`` arrays of nodal values (length ``Nx``). The
assembled operator ``A`` is the *positive* flux-form operator
``A u = -(D u')' + d u``; the evolution equation reads
``D_t^alpha u + A u = q u - p f(u) + r``.

Dirichlet nodes carry zero rows in ``A`` and are held at the boundary data.
Neumann ends use half-cell finite-volume rows; the boundary flux enters the
vector ``b`` so that ``A u - b`` is the discrete operator including data.
All inner products use trapezoid weights, which makes ``A`` self-adjoint in
that inner product for both boundary types.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg, sparse

logger = logging.getLogger(__name__)


class EllipticityError(ValueError):
    """Raised when the diffusion coefficient is not bounded away from zero."""


@dataclass(frozen=True)
class Grid1D:
    a: float
    b: float
    nx: int

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        if self.nx < 3:
            raise ValueError(f"need at least 3 nodes, got {self.nx}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.nx - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.nx)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.nx, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def field(self, fn: Callable[[np.ndarray], np.ndarray] | float) -> np.ndarray:
        """Sample a callable (or a constant) at the nodes."""
        if callable(fn):
            return np.broadcast_to(np.asarray(fn(self.x), dtype=float), (self.nx,)).copy()
        return np.full(self.nx, float(fn))


@dataclass(frozen=True)
class BoundaryCondition:
    """Time-constant Dirichlet values or outward normal derivatives at both ends."""

    kind: str = "dirichlet"
    left: float = 0.0
    right: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ValueError(f"boundary kind must be dirichlet or neumann, got {self.kind!r}")

    @property
    def dirichlet(self) -> bool:
        return self.kind == "dirichlet"

    def homogeneous(self) -> "BoundaryCondition":
        return BoundaryCondition(self.kind, 0.0, 0.0)


@dataclass(frozen=True)
class EllipticOp:
    D: np.ndarray | float
    d: np.ndarray | float = 0.0
    bc: BoundaryCondition = field(default_factory=BoundaryCondition)

    def coefficients(self, grid: Grid1D) -> tuple[np.ndarray, np.ndarray]:
        D = np.broadcast_to(np.asarray(self.D, dtype=float), (grid.nx,)).copy()
        d = np.broadcast_to(np.asarray(self.d, dtype=float), (grid.nx,)).copy()
        if not np.all(D > 0.0):
            i = int(np.argmin(D))
            raise EllipticityError(f"diffusion coefficient must be positive; min D = {D[i]:g} at node {i}")
        if np.any(d < 0.0):
            i = int(np.argmin(d))
            raise EllipticityError(f"reaction coefficient d must be non-negative; min d = {d[i]:g} at node {i}")
        return D, d


@dataclass(frozen=True)
class DiscreteOperator:
    """Assembled tridiagonal operator plus boundary bookkeeping."""

    grid: Grid1D
    bc: BoundaryCondition
    lower: np.ndarray  # sub-diagonal, length nx - 1
    diag: np.ndarray
    upper: np.ndarray  # super-diagonal, length nx - 1
    b: np.ndarray  # boundary data contribution
    D: np.ndarray
    d: np.ndarray
    D_half: np.ndarray

    @property
    def free(self) -> np.ndarray:
        m = np.ones(self.grid.nx, dtype=bool)
        if self.bc.dirichlet:
            m[0] = m[-1] = False
        return m

    @property
    def c_D(self) -> float:
        return float(np.min(self.D))

    @property
    def matrix(self) -> sparse.csr_matrix:
        return sparse.diags([self.lower, self.diag, self.upper], [-1, 0, 1], format="csr")

    def matvec(self, u: np.ndarray) -> np.ndarray:
        """``A u`` (without boundary data); works on trailing-axis batches."""
        out = self.diag * u
        out[..., 1:] += self.lower * u[..., :-1]
        out[..., :-1] += self.upper * u[..., 1:]
        return out

    def apply(self, u: np.ndarray) -> np.ndarray:
        """``A u - b``; zero at Dirichlet nodes."""
        return self.matvec(u) - self.b

    def banded(self, shift: np.ndarray | float = 0.0) -> np.ndarray:
        """``A + diag(shift)`` restricted to free nodes, in ``solve_banded`` layout."""
        m = self.free
        diag = (self.diag + shift)[m]
        up = self.upper.copy()
        lo = self.lower.copy()
        if self.bc.dirichlet:
            up = up[1:-1]
            lo = lo[1:-1]
        n = diag.size
        ab = np.zeros((3, n))
        ab[0, 1:] = up[: n - 1]
        ab[1] = diag
        ab[2, :-1] = lo[: n - 1]
        return ab

    def solve(self, rhs: np.ndarray, shift: np.ndarray | float = 0.0) -> np.ndarray:
        """Solve ``(A + diag(shift)) v = rhs`` on free nodes (v = 0 elsewhere)."""
        m = self.free
        sh = np.broadcast_to(np.asarray(shift, dtype=float), (self.grid.nx,))
        out = np.zeros_like(rhs, dtype=float)
        out[..., m] = linalg.solve_banded((1, 1), self.banded(sh), rhs[..., m].T).T
        return out


def assemble(op: EllipticOp, grid: Grid1D) -> DiscreteOperator:
    """Flux-form finite differences with harmonic-mean ``D`` at half nodes."""
    D, d = op.coefficients(grid)
    h = grid.h
    n = grid.nx
    Dh = 2.0 * D[:-1] * D[1:] / (D[:-1] + D[1:])
    diag = np.zeros(n)
    lower = np.zeros(n - 1)
    upper = np.zeros(n - 1)
    b = np.zeros(n)
    inner = slice(1, n - 1)
    diag[inner] = (Dh[:-1] + Dh[1:]) / h**2 + d[inner]
    lower[: n - 2] = -Dh[:-1] / h**2  # row i couples to i-1
    upper[1:] = -Dh[1:] / h**2  # row i couples to i+1
    bc = op.bc
    if bc.kind == "neumann":
        diag[0] = 2.0 * Dh[0] / h**2 + d[0]
        upper[0] = -2.0 * Dh[0] / h**2
        diag[-1] = 2.0 * Dh[-1] / h**2 + d[-1]
        lower[-1] = -2.0 * Dh[-1] / h**2
        # outward derivative data: -u'(a) = left, u'(b) = right
        b[0] = 2.0 * D[0] * bc.left / h
        b[-1] = 2.0 * D[-1] * bc.right / h
    return DiscreteOperator(grid, bc, lower, diag, upper, b, D, d, Dh)


# ---------------------------------------------------------------------------
# norms


def inner(u: np.ndarray, v: np.ndarray, grid: Grid1D) -> np.ndarray:
    return (u * v) @ grid.weights


def norm_L2(u: np.ndarray, grid: Grid1D):
    return np.sqrt(np.maximum(inner(u, u, grid), 0.0))


def seminorm_H1_sq(u: np.ndarray, grid: Grid1D):
    du = np.diff(u, axis=-1) / grid.h
    return np.sum(du**2, axis=-1) * grid.h


def second_difference(u: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Central second differences, one-sided third-order-exact closures at the ends."""
    h2 = grid.h**2
    out = np.empty_like(u, dtype=float)
    out[..., 1:-1] = (u[..., 2:] - 2.0 * u[..., 1:-1] + u[..., :-2]) / h2
    out[..., 0] = (2.0 * u[..., 0] - 5.0 * u[..., 1] + 4.0 * u[..., 2] - u[..., 3]) / h2
    out[..., -1] = (2.0 * u[..., -1] - 5.0 * u[..., -2] + 4.0 * u[..., -3] - u[..., -4]) / h2
    return out


def norm_Hs_sq(u: np.ndarray, grid: Grid1D, s: int):
    """Squared discrete H^s norm, s in {0, 1, 2}; accepts batches (time, x)."""
    u = np.asarray(u, dtype=float)
    if s not in (0, 1, 2):
        raise ValueError(f"s must be 0, 1 or 2, got {s}")
    val = inner(u, u, grid)
    if s >= 1:
        val = val + seminorm_H1_sq(u, grid)
    if s >= 2:
        if grid.nx < 4:
            raise ValueError("the discrete H2 norm needs at least 4 nodes")
        u2 = second_difference(u, grid)
        val = val + inner(u2, u2, grid)
    return val


def norm_Hs(u: np.ndarray, grid: Grid1D, s: int, bc: BoundaryCondition | None = None):
    """Discrete H^s norm; ``bc`` is accepted for symmetry with the dual norm."""
    return np.sqrt(norm_Hs_sq(u, grid, s))


class DualNorm:
    """``||v||_{H^-1} = sqrt(<v, w>)`` with ``(-Delta_h + I) w = v``, homogeneous bc.

    The lift reuses the assembled Laplacian, so the pairing is exactly dual
    to the discrete H^1 norm on fields satisfying the homogeneous condition.
    """

    def __init__(self, grid: Grid1D, bc: BoundaryCondition):
        self.grid = grid
        self.lap = assemble(EllipticOp(1.0, 0.0, bc.homogeneous()), grid)

    def sq(self, v: np.ndarray):
        v = np.asarray(v, dtype=float)
        w = self.lap.solve(v, shift=1.0)
        return inner(v, w, self.grid)

    def __call__(self, v: np.ndarray):
        return np.sqrt(np.maximum(self.sq(v), 0.0))


def norm_Hminus1(v: np.ndarray, grid: Grid1D, bc: BoundaryCondition):
    """Discrete H^{-1} norm (see :class:`DualNorm`)."""
    return DualNorm(grid, bc)(v)


def norm_sq(u: np.ndarray, grid: Grid1D, s: int, bc: BoundaryCondition):
    """Squared norm for s in {-1, 0, 1, 2}."""
    if s == -1:
        return DualNorm(grid, bc).sq(u)
    return norm_Hs_sq(u, grid, s)


def norm_Lp(u: np.ndarray, grid: Grid1D, p: float):
    u = np.abs(np.asarray(u, dtype=float))
    if math.isinf(p):
        return np.max(u, axis=-1)
    return (u**p @ grid.weights) ** (1.0 / p)


def field_to_csv(path, grid: Grid1D, values: np.ndarray, name: str = "value") -> None:
    with open(path, "w") as fh:
        fh.write(f"x,{name}\n")
        for xi, vi in zip(grid.x, values):
            fh.write(f"{float(xi)!r},{float(vi)!r}\n")


# ---------------------------------------------------------------------------
# empirical embedding constants


def test_functions(grid: Grid1D, bc: BoundaryCondition, n_random: int = 64, seed: int = 0,
                   include_green: bool = True) -> dict[str, np.ndarray]:
    """Families of homogeneous-bc test fields used for empirical operator norms.

    Returns ``{"smooth": ..., "green": ...}``; each is an array (k, nx). The
    smooth family holds Fourier modes and random trigonometric combinations
    (all in H^2), the Green family holds discrete Green's functions of
    ``-Delta_h + I``, which maximize point values for a given H^1 norm.
    Families for a larger ``n_random`` contain those for a smaller one.
    """
    x = (grid.x - grid.a) / (grid.b - grid.a)
    kmax = max(1, min(grid.nx // 4, 48))
    k = np.arange(1, kmax + 1)
    if bc.dirichlet:
        modes = np.sin(np.pi * np.outer(k, x))
    else:
        modes = np.cos(np.pi * np.outer(np.concatenate([[0], k]), x))
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((n_random, modes.shape[0])) / (1.0 + np.arange(modes.shape[0]))[None, :] ** 1.5
    smooth = np.vstack([modes, coeffs @ modes])
    fam = {"smooth": smooth}
    if include_green:
        lap = assemble(EllipticOp(1.0, 0.0, bc.homogeneous()), grid)
        idx = np.unique(np.linspace(0, grid.nx - 1, min(grid.nx, 33)).astype(int))
        idx = idx[lap.free[idx]]
        rhs = np.zeros((idx.size, grid.nx))
        rhs[np.arange(idx.size), idx] = 1.0
        fam["green"] = lap.solve(rhs, shift=1.0)
    return fam


def embedding_constant(samples: np.ndarray, grid: Grid1D, bc: BoundaryCondition, source: str, target) -> float:
    """Largest ratio ``||v||_target / ||v||_source`` over the sample rows.

    ``source`` is one of ``"L1", "L2", "H1", "H2"``; ``target`` is a number
    ``p`` (meaning L^p, ``inf`` allowed) or ``"H-1"``.
    """
    samples = np.atleast_2d(samples)
    if source == "L1":
        den = norm_Lp(samples, grid, 1.0)
    else:
        den = np.sqrt(norm_Hs_sq(samples, grid, {"L2": 0, "H1": 1, "H2": 2}[source]))
    if target == "H-1":
        num = DualNorm(grid, bc)(samples)
    else:
        num = norm_Lp(samples, grid, float(target))
    ok = den > 0
    return float(np.max(num[ok] / den[ok]))


@dataclass
class EmbeddingTable:
    """Empirical (lower-bound) embedding constants keyed by ``(source, target)``."""

    values: dict
    n_random: int
    seed: int
    empirical: bool = True

    def __getitem__(self, key):
        return self.values[key]

    def get(self, source: str, target) -> float:
        return self.values[(source, target)]

    def rows(self):
        return [(s, str(t), v) for (s, t), v in sorted(self.values.items(), key=lambda kv: (kv[0][0], str(kv[0][1])))]


def embedding_constants(grid: Grid1D, bc: BoundaryCondition, ells=(math.inf, 2.0, 4.0, 6.0),
                        nus=(2.0, 4.0, 6.0), n_random: int = 64, seed: int = 0) -> EmbeddingTable:
    """Empirical constants C_{H1->L^l}, C_{H2->L^inf}, C_{L2->L^nu} and C_{L1->H^-1}.

    In one dimension on a bounded interval the embeddings hold for every
    exponent; the default exponents cover the values appearing in the energy
    estimates for d = 1. For finite exponents above 2 the discrete L^nu norm
    is not bounded by the L^2 norm uniformly in h, so ``C_{L2->L^nu}`` grows
    with resolution; the table records what the test set attains.
    """
    fam = test_functions(grid, bc, n_random=n_random, seed=seed)
    smooth, green = fam["smooth"], fam["green"]
    both = np.vstack([smooth, green])
    vals = {}
    for ell in ells:
        vals[("H1", ell)] = embedding_constant(both, grid, bc, "H1", ell)
    vals[("H2", math.inf)] = embedding_constant(smooth, grid, bc, "H2", math.inf)
    for nu in nus:
        vals[("L2", nu)] = embedding_constant(both, grid, bc, "L2", nu)
    # L1 -> H^-1: the extreme points of the L1 ball are scaled unit spikes
    spikes = np.eye(grid.nx) / grid.weights[:, None]
    if bc.dirichlet:
        spikes = spikes[1:-1]
    vals[("L1", "H-1")] = embedding_constant(np.vstack([spikes, both]), grid, bc, "L1", "H-1")
    return EmbeddingTable(vals, n_random, seed)


def elliptic_regularity_constant(op: DiscreteOperator, n_random: int = 64, seed: int = 0) -> float:
    """Empirical ``C_ell`` in ``||v||_{H2} <= C_ell (||A v||_{L2} + ||v||_{L2})``.

    Maximized over the smooth homogeneous-bc test family.
    """
    grid = op.grid
    v = test_functions(grid, op.bc, n_random=n_random, seed=seed, include_green=False)["smooth"]
    Av = op.matvec(v)
    if op.bc.dirichlet:
        Av[:, 0] = Av[:, -1] = 0.0
    num = np.sqrt(norm_Hs_sq(v, grid, 2))
    den = norm_L2(Av, grid) + norm_L2(v, grid)
    return float(np.max(num / den))

"""Problem definition, the normalization of the nonlinearity, and hypothesis checkers.

The transient problem on a 1D grid is::

    D_t^alpha u + A u = q u - p f(u) + r(t)      in (0, T) x (a, b)
    boundary data time-constant, u(0) = u0

with ``A = -(D u')' + d u`` assembled by :mod:`subdiff.space`.
"""
from __future__ import annotations

import dataclasses
import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expr
from .fracops import TimeGrid
from .space import (
    BoundaryCondition,
    DiscreteOperator,
    DualNorm,
    EllipticOp,
    Grid1D,
    assemble,
    norm_Hs_sq,
)

logger = logging.getLogger(__name__)

NORMALIZED_TOL = 1e-14


@dataclass(frozen=True)
class Growth:
    """Declared bound ``|f''(xi)| <= c2 + C2 |xi|^kappa2``."""

    c2: float = 0.0
    C2: float = 0.0
    kappa2: float = 0.0

    def __post_init__(self):
        if min(self.c2, self.C2, self.kappa2) < 0:
            raise ValueError("growth constants must be non-negative")

    def bound(self, xi):
        return self.c2 + self.C2 * np.abs(xi) ** self.kappa2


@dataclass(frozen=True)
class Nonlinearity:
    f: Callable
    df: Callable
    d2f: Callable
    growth: Growth = Growth()
    name: str = "custom"
    degree: int | None = None  # polynomial degree when known

    @property
    def normalized(self) -> bool:
        return abs(float(self.f(0.0))) <= NORMALIZED_TOL and abs(float(self.df(0.0))) <= NORMALIZED_TOL

    @property
    def odd_sign(self) -> bool:
        """Whether ``f(xi) xi >= 0`` holds on a sample of [-10, 10]."""
        xi = np.linspace(-10.0, 10.0, 2001)
        return bool(np.all(self.f(xi) * xi >= -1e-12))


def zero_nonlinearity() -> Nonlinearity:
    z = lambda v: np.zeros_like(np.asarray(v, dtype=float)) if np.ndim(v) else 0.0
    return Nonlinearity(z, z, z, Growth(0.0, 0.0, 0.0), "none", 0)


def cubic() -> Nonlinearity:
    """Allen-Cahn type ``f = xi^3``."""
    return Nonlinearity(lambda v: v**3, lambda v: 3.0 * v**2, lambda v: 6.0 * v, Growth(0.0, 6.0, 1.0), "cubic", 3)


def quartic() -> Nonlinearity:
    return Nonlinearity(lambda v: v**4, lambda v: 4.0 * v**3, lambda v: 12.0 * v**2, Growth(0.0, 12.0, 2.0), "quartic", 4)


def quadratic() -> Nonlinearity:
    return Nonlinearity(lambda v: v**2, lambda v: 2.0 * v, lambda v: 2.0 + 0.0 * v, Growth(2.0, 0.0, 0.0), "quadratic", 2)


def exponential() -> Nonlinearity:
    return Nonlinearity(np.exp, np.exp, np.exp, Growth(0.0, 0.0, 0.0), "exp", None)


def custom(f: str, df: str, d2f: str, growth: Growth = Growth(), degree: int | None = None,
           name: str = "custom") -> Nonlinearity:
    """Nonlinearity from expression strings in the variable ``xi``."""
    return Nonlinearity(expr.compile_expr(f, "xi"), expr.compile_expr(df, "xi"), expr.compile_expr(d2f, "xi"),
                        growth, name, degree)


BUILTIN_NONLINEARITIES = {
    "none": zero_nonlinearity,
    "cubic": cubic,
    "quartic": quartic,
    "quadratic": quadratic,
    "exp": exponential,
}


# ---------------------------------------------------------------------------
# sources


@dataclass(frozen=True)
class Source:
    """Time-dependent source ``r(t, x)`` with limit ``r_inf``.

    Three forms are supported: constant (``r = r_inf``), separable
    (``r = r_inf + envelope(t) * profile``) and sampled (one row per node of
    the problem's time grid).
    """

    r_inf: np.ndarray
    profile: np.ndarray | None = None
    envelope: Callable | None = None
    samples: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        if self.samples is not None:
            return "sampled"
        if self.profile is not None:
            return "separable"
        return "steady"

    def values(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.samples is not None:
            if self.samples.shape[0] != t.size:
                raise ValueError("sampled source does not match the time grid")
            return np.array(self.samples, dtype=float)
        out = np.broadcast_to(self.r_inf, (t.size, self.r_inf.size)).copy()
        if self.profile is not None:
            out += np.outer(np.asarray(self.envelope(t), dtype=float), self.profile)
        return out

    def shifted(self, delta: np.ndarray) -> "Source":
        samples = None if self.samples is None else self.samples + delta[None, :]
        return dataclasses.replace(self, r_inf=self.r_inf + delta, samples=samples)


def steady_source(r_inf) -> Source:
    return Source(np.asarray(r_inf, dtype=float))


# ---------------------------------------------------------------------------
# problem


@dataclass
class Problem:
    grid: Grid1D
    op: EllipticOp
    alpha: float
    p: np.ndarray
    q: np.ndarray
    nl: Nonlinearity
    source: Source
    u0: np.ndarray
    tgrid: TimeGrid
    r_exp: float = math.inf
    s_exp: float = 2.0
    omega_r: float | None = None
    name: str = "problem"

    def __post_init__(self):
        nx = self.grid.nx
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        self.p = np.broadcast_to(np.asarray(self.p, dtype=float), (nx,)).copy()
        self.q = np.broadcast_to(np.asarray(self.q, dtype=float), (nx,)).copy()
        self.u0 = np.asarray(self.u0, dtype=float)
        for label, v in (("u0", self.u0), ("r_inf", self.source.r_inf)):
            if v.shape != (nx,):
                raise ValueError(f"{label} must have {nx} nodal values, got shape {v.shape}")
        bc = self.op.bc
        if bc.dirichlet and (abs(self.u0[0] - bc.left) > 1e-12 or abs(self.u0[-1] - bc.right) > 1e-12):
            raise ValueError("u0 violates the Dirichlet boundary data")
        if self.s_exp < 2.0:
            raise ValueError(f"the summability exponent of q must be >= 2, got {self.s_exp}")
        if self.r_exp < 1.0:
            raise ValueError(f"the summability exponent r must be >= 1, got {self.r_exp}")

    @property
    def bc(self) -> BoundaryCondition:
        return self.op.bc

    @property
    def r_inf(self) -> np.ndarray:
        return self.source.r_inf

    @functools.cached_property
    def A(self) -> DiscreteOperator:
        return assemble(self.op, self.grid)

    @functools.cached_property
    def dual(self) -> DualNorm:
        return DualNorm(self.grid, self.bc)

    def reaction(self, u, r):
        """Right-hand side ``q u - p f(u) + r`` without the elliptic part."""
        return self.q * u - self.p * self.nl.f(u) + r

    def steady_residual(self, u, r_inf=None):
        """``A u - b - q u + p f(u) - r_inf`` with zeros at Dirichlet nodes."""
        r_inf = self.r_inf if r_inf is None else r_inf
        res = self.A.apply(u) - self.reaction(u, r_inf)
        res[~self.A.free] = 0.0
        return res

    def replace(self, **changes) -> "Problem":
        fresh = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        fresh.update(changes)
        return Problem(**fresh)


def normalize(nl: Nonlinearity, p, q, r, r_inf):
    """Move ``f(0)`` and ``f'(0)`` into the source and the linear coefficient.

    With ``f~ = f - f(0) - f'(0) xi`` the reaction ``q u - p f(u) + r`` equals
    ``(q - f'(0) p) u - p f~(u) + (r - f(0) p)``; the problem is unchanged.
    ``r`` may be a field, an array of fields, or a :class:`Source`.
    Returns ``(nl_tilde, q_tilde, r_tilde, r_inf_tilde)``.
    """
    f0 = float(nl.f(0.0))
    f1 = float(nl.df(0.0))
    p = np.asarray(p, dtype=float)
    q_t = np.asarray(q, dtype=float) - f1 * p
    delta = -f0 * p
    if isinstance(r, Source):
        r_t = r.shifted(np.broadcast_to(delta, r.r_inf.shape))
    else:
        r_t = np.asarray(r, dtype=float) + delta
    r_inf_t = np.asarray(r_inf, dtype=float) + delta
    if f0 == 0.0 and f1 == 0.0:
        return nl, q_t, r_t, r_inf_t
    f, df, d2f = nl.f, nl.df, nl.d2f
    nl_t = Nonlinearity(
        lambda v: f(v) - f0 - f1 * v,
        lambda v: df(v) - f1,
        d2f,
        nl.growth,
        nl.name + "~",
        nl.degree,
    )
    return nl_t, q_t, r_t, r_inf_t


# ---------------------------------------------------------------------------
# hypothesis checkers


def p_infinity(p, q, nl: Nonlinearity, u_inf) -> np.ndarray:
    """Linearized potential ``p f'(u_inf) - q``."""
    return np.asarray(p) * nl.df(np.asarray(u_inf, dtype=float)) - np.asarray(q)


def check_pinfty(p, q, nl: Nonlinearity, u_inf) -> float:
    """Nodal minimum of ``p f'(u_inf) - q``; the condition holds iff it is > 0."""
    return float(np.min(p_infinity(p, q, nl, u_inf)))


@dataclass(frozen=True)
class GrowthCheck:
    passed: bool
    worst_ratio: float
    range_limited: bool
    lo: float
    hi: float


def check_growth(nl: Nonlinearity, lo: float = -10.0, hi: float = 10.0, samples: int = 2001) -> GrowthCheck:
    """Sample ``|f''(xi)| / (c2 + C2 |xi|^kappa2)`` on [lo, hi].

    Non-polynomial nonlinearities (or polynomials of degree above
    ``kappa2 + 2``) can only satisfy a declared bound on a bounded range;
    those results are flagged ``range_limited``.
    """
    xi = np.linspace(lo, hi, samples)
    num = np.abs(np.asarray(nl.d2f(xi), dtype=float))
    den = nl.growth.bound(xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(num == 0.0, 0.0, num / den)
    worst = float(np.max(ratio))
    limited = nl.degree is None or nl.degree > nl.growth.kappa2 + 2
    return GrowthCheck(worst <= 1.0 + 1e-12, worst, limited, lo, hi)


@dataclass(frozen=True)
class Summability:
    lo: bool
    hi: bool

    @property
    def label(self) -> str:
        return "lo" if self.lo else ("hi" if self.hi else "fail")

    def __eq__(self, other):
        if isinstance(other, str):
            return self.label == other
        return (self.lo, self.hi) == (getattr(other, "lo", None), getattr(other, "hi", None))

    def __hash__(self):
        return hash((self.lo, self.hi))


def check_summability(d: int, r_exp: float, kappa2: float) -> Summability:
    """Classify ``(d, r, kappa2)`` against the low- and high-regularity tables.

    Low regularity (s = 0) needs d = 1, r = inf, kappa2 = 1. High regularity
    (s = 1) needs: d = 1 with r >= 2; d = 2 with r > 2 and finite kappa2;
    d = 3 with r >= 6 and kappa2 <= 2 - 6/r.
    """
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
    lo = d == 1 and math.isinf(r_exp) and kappa2 == 1.0
    if d == 1:
        hi = r_exp >= 2.0
    elif d == 2:
        hi = r_exp > 2.0 and math.isfinite(kappa2)
    else:
        hi = r_exp >= 6.0 and kappa2 <= 2.0 - 6.0 / r_exp
    return Summability(lo, hi)


def decay_profile(t: np.ndarray, alpha: float, omega: float | None = None) -> np.ndarray:
    """``Psi(t) = t^-alpha`` for alpha < 1 and ``exp(-omega t)`` for alpha = 1."""
    t = np.asarray(t, dtype=float)
    if alpha < 1.0:
        with np.errstate(divide="ignore"):
            return t ** (-alpha)
    if omega is None or omega <= 0:
        raise ValueError("the exponential profile needs omega > 0")
    return np.exp(-omega * t)


def check_decay_r(r_values, r_inf, tgrid: TimeGrid, X: str, alpha: float, omega: float | None,
                  grid: Grid1D, bc: BoundaryCondition) -> float:
    """Smallest ``C_r`` with ``||r(t_n) - r_inf||_X^2 <= C_r Psi(t_n)`` for n >= 1.

    ``X`` is ``"L2"`` or ``"H-1"``. An infinite or very large value means
    the decay hypothesis fails on this horizon.
    """
    diff = np.asarray(r_values, dtype=float)[1:] - np.asarray(r_inf, dtype=float)[None, :]
    if X == "L2":
        sq = norm_Hs_sq(diff, grid, 0)
    elif X in ("H-1", "Hminus1"):
        sq = DualNorm(grid, bc).sq(diff)
    else:
        raise ValueError(f"X must be L2 or H-1, got {X!r}")
    psi = decay_profile(tgrid.nodes[1:], alpha, omega)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(sq == 0.0, 0.0, sq / psi)
    return float(np.max(ratio)) if ratio.size else 0.0


def check_between_states(p, q, nl: Nonlinearity, u_series, u_inf, theta_count: int = 16) -> float:
    """Minimum of ``p f'(theta u + (1-theta) u_inf) - q`` over steps, nodes and theta."""
    u = np.atleast_2d(np.asarray(u_series, dtype=float))
    u_inf = np.asarray(u_inf, dtype=float)
    worst = math.inf
    for theta in np.linspace(0.0, 1.0, int(theta_count) + 1):
        state = theta * u + (1.0 - theta) * u_inf[None, :]
        worst = min(worst, float(np.min(p * nl.df(state) - q)))
    return worst

"""Transient solver (implicit L1 stepping with Newton) and energy monitors.

The monitors evaluate, along a computed trajectory, the quantities that
appear in the energy estimates for ``w = u - u_inf``:

* ``D0``: smallness functional of the low-regularity (L2/H1) estimate,
* ``D1``: smallness functional of the high-regularity (H1/H2) estimate,
* ``D_between``: functional of the estimate that uses the averaged potential
  ``p f'(theta u + (1-theta) u_inf) - q`` instead of a smallness condition,

plus both sides of the integrated bound
``(c/2) (k^{1-alpha} * ||w||_{s+1}^2)(t) + ||w(t)||_s^2 <= ||w(0)||_s^2 + C~ C_r B``.
The analytic constants are not constructive; they are formed from the
empirical embedding and elliptic-regularity constants of
:mod:`subdiff.space` and reported in the trace header.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .fracops import CaputoWeights, TimeGrid, caputo_series, make_history, rl_convolve
from .model import Problem, check_between_states, check_decay_r, check_pinfty, p_infinity
from .space import (
    DualNorm,
    elliptic_regularity_constant,
    embedding_constant,
    inner,
    norm_L2,
    norm_Hs_sq,
    norm_Lp,
    test_functions,
)
from .steady import NewtonDivergence, SolverError

logger = logging.getLogger(__name__)

STEP_RTOL = 1e-10
STEP_ATOL = 1e-14
MAX_NEWTON = 30
MAX_HALVINGS = 8
BLOWUP_THRESHOLD = 1e6
GAUSS_NODES = 8


class StepFailure(SolverError):
    """Newton failed at a time step; ``history`` holds the steps that converged."""

    def __init__(self, message, step: int, history=None):
        super().__init__(message)
        self.step = step
        self.history = history


class BlowUp(StepFailure):
    pass


@dataclass
class SolutionHistory:
    problem: Problem
    t: np.ndarray
    u: np.ndarray  # (N+1, nx)
    caputo: np.ndarray  # (N+1, nx); row 0 is NaN
    newton_iterations: np.ndarray
    residuals: np.ndarray
    u_inf: np.ndarray | None = None
    completed: bool = True
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self):
        return self.problem.grid

    @property
    def tgrid(self) -> TimeGrid:
        return self.problem.tgrid

    @property
    def steps(self) -> int:
        return self.u.shape[0] - 1

    def deviation(self, u_inf=None) -> np.ndarray:
        ref = self.u_inf if u_inf is None else u_inf
        if ref is None:
            raise ValueError("a steady state is needed to form u - u_inf")
        return self.u - ref[None, :]

    def norms_sq(self, s: int, u_inf=None) -> np.ndarray:
        """Squared ``H^s`` norms of ``u - u_inf`` at every step (s = -1..2)."""
        key = ("w", s, None if u_inf is None else id(u_inf))
        if key not in self._cache:
            w = self.deviation(u_inf)
            if s == -1:
                self._cache[key] = self.problem.dual.sq(w)
            else:
                self._cache[key] = norm_Hs_sq(w, self.grid, s)
        return self._cache[key]

    def ut(self) -> np.ndarray:
        """Backward differences ``(u_n - u_{n-1}) / tau_n``; row 0 is NaN."""
        out = np.full(self.u.shape, np.nan)
        out[1:] = np.diff(self.u, axis=0) / np.diff(self.t)[:, None]
        return out


def _newton_time_step(problem: Problem, a_nn: float, mem, u_prev, r_n, rtol, atol, max_iter):
    A = problem.A
    free = A.free
    p, q, nl = problem.p, problem.q, problem.nl
    const = -a_nn * u_prev + mem - r_n - A.b
    grid = problem.grid

    def F(v):
        out = a_nn * v + A.matvec(v) - q * v + p * nl.f(v) + const
        out[~free] = 0.0
        return out

    v = u_prev.copy()
    res = F(v)
    rn = float(norm_L2(res, grid))
    scale = float(norm_L2(a_nn * u_prev, grid) + norm_L2(mem, grid) + norm_L2(r_n, grid) + norm_L2(A.matvec(u_prev), grid))
    target = rtol * scale + atol
    it = 0
    while rn > target:
        if it >= max_iter:
            raise NewtonDivergence(f"no convergence in {max_iter} Newton iterations (residual {rn:.3e})", best=v, residual=rn)
        shift = a_nn + p * nl.df(v) - q
        delta = A.solve(-res, shift=shift)
        lam = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = v + lam * delta
            res_t = F(trial)
            rt = float(norm_L2(res_t, grid))
            if rt < rn:
                break
            lam *= 0.5
        else:
            if rn <= 100.0 * target:
                break  # round-off floor
            raise NewtonDivergence(f"line search exhausted (residual {rn:.3e})", best=v, residual=rn)
        it += 1
        v, res, rn = trial, res_t, rt
        if lam == 1.0 and np.max(np.abs(delta)) <= 1e-15 * (1.0 + np.max(np.abs(v))):
            break
    return v, it, rn


def solve_transient(problem: Problem, u_inf=None, history_method: str = "direct",
                    rtol: float = STEP_RTOL, atol: float = STEP_ATOL, max_newton: int = MAX_NEWTON,
                    blowup: float = BLOWUP_THRESHOLD, soe_tol: float = 1e-8) -> SolutionHistory:
    """Integrate the transient problem on ``problem.tgrid``.

    At each ``t_n`` the implicit L1 equation
    ``D_tau u_n + A u_n - q u_n + p f(u_n) - r(t_n) = 0`` is solved by damped
    Newton iteration; ``alpha = 1`` gives backward Euler.

    Parameters
    ----------
    history_method : {"direct", "soe"}
        Evaluation of the L1 memory term; ``"soe"`` uses a sum-of-exponentials
        compression of the kernel with relative error ``soe_tol``.
    blowup : float
        Abort with :class:`BlowUp` once ``max |u_n|`` reaches this value.

    Raises
    ------
    StepFailure
        Newton failed; ``step`` and the partial ``history`` are attached.
    """
    tg = problem.tgrid
    t = tg.nodes
    nx = problem.grid.nx
    N = tg.N
    weights = CaputoWeights(tg, problem.alpha, cache=False)
    memory = make_history(weights, nx, history_method, soe_tol)
    R = problem.source.values(t)
    u = np.empty((N + 1, nx))
    cap = np.full((N + 1, nx), np.nan)
    iters = np.zeros(N + 1, dtype=int)
    resid = np.zeros(N + 1)
    u[0] = problem.u0
    for n in range(1, N + 1):
        mem = memory.memory(n)
        row_last = weights.leading(n)
        try:
            un, it, rn = _newton_time_step(problem, row_last, mem, u[n - 1], R[n], rtol, atol, max_newton)
        except NewtonDivergence as exc:
            partial = _history(problem, t[:n], u[:n], cap[:n], iters[:n], resid[:n], u_inf, completed=False)
            raise StepFailure(f"Newton failed at step {n} (t = {t[n]:.6g}): {exc}", n, partial) from None
        u[n] = un
        iters[n] = it
        resid[n] = rn
        cap[n] = row_last * (un - u[n - 1]) + mem
        memory.push(un - u[n - 1])
        if not np.all(np.isfinite(un)) or np.max(np.abs(un)) >= blowup:
            partial = _history(problem, t[: n + 1], u[: n + 1], cap[: n + 1], iters[: n + 1], resid[: n + 1], u_inf, completed=False)
            raise BlowUp(f"blow-up suspected at step {n} (t = {t[n]:.6g}): max|u| = {np.max(np.abs(un)):.3e}", n, partial)
    return _history(problem, t, u, cap, iters, resid, u_inf)


def _history(problem, t, u, cap, iters, resid, u_inf, completed=True):
    return SolutionHistory(problem, np.array(t), u, cap, iters, resid,
                           None if u_inf is None else np.asarray(u_inf, dtype=float), completed)


# ---------------------------------------------------------------------------
# difference equation


def remainder_coefficient(nl, u_inf, w, nodes: int = GAUSS_NODES):
    """``int_0^1 (1 - theta) f''(u_inf + theta w) dtheta`` by Gauss-Legendre.

    Multiplied by ``w**2`` this is exactly ``f(u_inf + w) - f(u_inf) - f'(u_inf) w``
    whenever ``f''`` is a polynomial of degree below ``2 nodes - 1``.
    """
    x, wts = np.polynomial.legendre.leggauss(nodes)
    theta = 0.5 * (x + 1.0)
    wts = 0.5 * wts
    acc = np.zeros(np.broadcast_shapes(np.shape(u_inf), np.shape(w)))
    for th, wt in zip(theta, wts):
        acc = acc + wt * (1.0 - th) * nl.d2f(u_inf + th * w)
    return acc


def nonlinear_remainder(problem: Problem, u_inf, w):
    """``p * (f(u_inf + w) - f(u_inf) - f'(u_inf) w)`` in integral form."""
    return problem.p * remainder_coefficient(problem.nl, u_inf, w) * w**2


def difference_residual(history: SolutionHistory, u_inf, n: int) -> np.ndarray:
    """Residual of the equation for ``w = u - u_inf`` at step ``n``.

    ``D_tau w + (A + p_inf) w + p R(w) - (r - r_inf)`` with the Taylor
    remainder ``R`` in integral form. Zero at Dirichlet nodes. For a converged
    trajectory this vanishes up to the solver tolerance.
    """
    if not 1 <= n <= history.steps:
        raise IndexError(f"step {n} outside 1..{history.steps}")
    pb = history.problem
    u_inf = np.asarray(u_inf, dtype=float)
    w = history.u[n] - u_inf
    r = pb.source.values(history.t)[n]
    pinf = p_infinity(pb.p, pb.q, pb.nl, u_inf)
    out = history.caputo[n] + pb.A.matvec(w) + pinf * w + nonlinear_remainder(pb, u_inf, w) - (r - pb.r_inf)
    out[~pb.A.free] = 0.0
    return out


def _rhs_series(history: SolutionHistory, u_inf) -> np.ndarray:
    """``-(p R(w) - (r - r_inf))`` at all steps (the forcing of the difference equation)."""
    pb = history.problem
    w = history.deviation(u_inf)
    rho = pb.source.values(history.t) - pb.r_inf[None, :]
    return rho - nonlinear_remainder(pb, u_inf, w)


# ---------------------------------------------------------------------------
# monitors


@dataclass
class MonitorTrace:
    """Per-step monitor values; ``header`` records every constant used."""

    regime: str
    s: int
    t: np.ndarray
    norm_L2_sq: np.ndarray
    norm_H1_sq: np.ndarray
    norm_H2_sq: np.ndarray
    norm_Hm1_sq: np.ndarray
    caputo_res_sq: np.ndarray
    D0: np.ndarray
    D1: np.ndarray
    D_between: np.ndarray
    bound_lhs: np.ndarray
    bound_rhs: np.ndarray
    barrier_ok: np.ndarray
    header: dict

    COLUMNS = ("t", "norm_L2_sq", "norm_H1_sq", "norm_H2_sq", "D0", "D1", "D_between",
               "bound_lhs", "bound_rhs", "barrier_ok")

    @property
    def barrier_tripped(self) -> bool:
        return not bool(np.all(self.barrier_ok))

    @property
    def bound_holds(self) -> np.ndarray:
        return self.bound_lhs <= self.bound_rhs * (1.0 + 1e-9) + 1e-12

    def to_csv(self, handle=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for i in range(self.t.size):
            w.writerow([repr(float(getattr(self, c)[i])) if c != "barrier_ok" else int(self.barrier_ok[i])
                        for c in self.COLUMNS])
        text = buf.getvalue()
        if handle is not None:
            handle.write(text)
        return text


def _lp_exponent(r_exp: float) -> float:
    """``2 r / (r - 2)`` with the limit 2 for ``r = inf``."""
    if math.isinf(r_exp):
        return 2.0
    if r_exp <= 2.0:
        return math.inf
    return 2.0 * r_exp / (r_exp - 2.0)


class MonitorConstants:
    """Empirical constants entering the monitor formulas for one problem."""

    def __init__(self, problem: Problem, n_random: int = 64, seed: int = 0):
        self.problem = problem
        grid, bc = problem.grid, problem.bc
        fam = test_functions(grid, bc, n_random=n_random, seed=seed)
        self._smooth = fam["smooth"]
        self._both = np.vstack([fam["smooth"], fam["green"]])
        spikes = np.eye(grid.nx) / grid.weights[:, None]
        self._spikes = spikes[1:-1] if bc.dirichlet else spikes
        self._cache = {}
        self.C_ell = elliptic_regularity_constant(problem.A, n_random=n_random, seed=seed)
        self.n_random = n_random
        self.seed = seed

    def emb(self, source: str, target) -> float:
        key = (source, target)
        if key not in self._cache:
            pb = self.problem
            if source == "H2":
                samples = self._smooth
            elif source == "L1":
                samples = np.vstack([self._spikes, self._both])
            else:
                samples = self._both
            self._cache[key] = embedding_constant(samples, pb.grid, pb.bc, source, target)
        return self._cache[key]

    def table(self) -> dict:
        def label(t):
            if isinstance(t, str):
                return t
            return "Linf" if math.isinf(t) else f"L{float(t):g}"

        return {f"C_{s}->{label(t)}": v for (s, t), v in sorted(self._cache.items(), key=lambda kv: str(kv[0]))}


def monitor_energy(history: SolutionHistory, u_inf, regime: str = "hi", constants: MonitorConstants | None = None,
                   phi1_variant: str = "corrected", omega_r: float | None = None,
                   theta_count: int = 16) -> MonitorTrace:
    """Evaluate the energy-estimate monitors along a computed trajectory.

    Parameters
    ----------
    regime : {"lo", "hi", "between"}
        ``lo`` uses the L2/H1 estimate (s = 0), ``hi`` the H1/H2 estimate
        (s = 1), ``between`` the estimate based on the averaged potential
        (s = 1) with its own barrier.
    phi1_variant : {"corrected", "as_printed"}
        The constant part of the high-regularity growth function is built from
        the H1-based function by default; ``"as_printed"`` uses the L2-based
        one instead.
    omega_r : float, optional
        Rate of the exponential decay assumed for ``r - r_inf`` when
        ``alpha = 1``; defaults to ``problem.omega_r`` or 1.
    """
    if regime not in ("lo", "hi", "between"):
        raise ValueError(f"unknown regime {regime!r}")
    if phi1_variant not in ("corrected", "as_printed"):
        raise ValueError(f"unknown phi1_variant {phi1_variant!r}")
    pb = history.problem
    grid, bc = pb.grid, pb.bc
    u_inf = np.asarray(u_inf, dtype=float)
    alpha = pb.alpha
    K = constants or MonitorConstants(pb)
    t = history.t
    s = 0 if regime == "lo" else 1

    n0 = history.norms_sq(0, u_inf)
    n1 = history.norms_sq(1, u_inf)
    n2 = history.norms_sq(2, u_inf)
    nm1 = history.norms_sq(-1, u_inf)

    c_D = pb.A.c_D
    pinf = p_infinity(pb.p, pb.q, pb.nl, u_inf)
    c_low = check_pinfty(pb.p, pb.q, pb.nl, u_inf)
    c_between = check_between_states(pb.p, pb.q, pb.nl, history.u, u_inf, theta_count)
    pinf_sup = float(np.max(np.abs(pinf)))
    r_exp = pb.r_exp
    p_norm = float(norm_Lp(pb.p, grid, r_exp))
    q_L2 = float(norm_L2(pb.q, grid))
    g = pb.nl.growth
    kap = g.kappa2
    C_kap = max(1.0, 2.0 ** (kap - 1.0))

    # growth functions
    ell_hi = _lp_exponent(r_exp)
    C_H1_inf = K.emb("H1", math.inf)
    C_H2_inf = K.emb("H2", math.inf)
    nu_lo = 1.0  # d = 1, m = 1, l = r = inf
    phi0_tilde = lambda xi: g.C2 * C_kap * K.emb("L2", (kap + 1.0) * nu_lo) ** (kap + 1.0) * C_H1_inf * xi**kap
    phi0_inf = lambda xi: phi0_tilde(xi) + g.c2 * K.emb("L2", nu_lo) * C_H1_inf
    phi1_tilde = lambda xi: g.C2 * C_kap * K.emb("H1", (kap + 1.0) * ell_hi) ** (kap + 1.0) * C_H2_inf * xi**kap
    base1 = phi1_tilde if phi1_variant == "corrected" else phi0_tilde
    phi1_inf = lambda xi: base1(xi) + g.c2 * K.emb("H1", ell_hi) * C_H2_inf

    uinf_L2 = float(norm_L2(u_inf, grid))
    uinf_H1 = math.sqrt(float(norm_Hs_sq(u_inf, grid, 1)))
    w_L2 = np.sqrt(n0)
    w_H1 = np.sqrt(n1)
    P0 = p_norm * (phi0_inf(uinf_L2) + phi0_tilde(w_L2))
    P1 = p_norm * (phi1_inf(uinf_H1) + phi1_tilde(w_H1))

    ok_low = c_low > 0.0
    ok_between = c_between > 0.0
    cl = max(c_low, 1e-12)
    cb = max(c_between, 1e-12)
    C_ell = K.C_ell

    # low regularity: c = m, C~ = 2/m, D0 = 2 C_{L1->H-1}^2 P0^2 ||w||_L2^2 / m^2
    m = min(cl, c_D)
    C_L1 = K.emb("L1", "H-1")
    D0 = 2.0 * C_L1**2 * P0**2 * n0 / m**2
    # high regularity with mu = (1 + 2 |p_inf|^2) / (2 c)
    mu_star = (1.0 + 2.0 * pinf_sup**2) / (2.0 * cl)
    Kh = (1.0 + 2.0 * pinf_sup**2) / (2.0 * cl**2) + 2.0
    M = min(mu_star, c_D)
    D1 = 4.0 * Kh * C_ell**2 * P1**2 * n1
    # averaged-potential regime
    P1b = p_norm * (phi1_inf(uinf_H1) + phi1_tilde(w_H1))
    Db = ((P1b + q_L2) * C_H2_inf) ** 2
    mb_floor = min(cb / 2.0, c_D)
    mu_b = max((1.0 + 2.0 * pinf_sup**2) / (2.0 * cb), 4.0 * float(Db[0]) / mb_floor)

    if regime == "lo":
        c, Ct, flags_raw = m, 2.0 / m, D0 <= 0.5
        ok = ok_low
        X = "H-1"
    elif regime == "hi":
        c, Ct, flags_raw = 1.0 / (2.0 * C_ell**2 * M), 2.0 * Kh / M, D1 <= 0.5
        ok = ok_low
        X = "L2"
    else:
        Mb = min(mu_b, c_D)
        c = min(0.5 * mu_b * mb_floor, 0.5) / (C_ell**2 * Mb)
        Ct = (mu_b / cb + 2.0) / Mb
        flags_raw = Db < 0.5 * mu_b * mb_floor
        ok = ok_between
        X = "L2"
    barrier_ok = np.logical_and.accumulate(flags_raw & ok)

    omega = omega_r if omega_r is not None else (pb.omega_r or 1.0)
    C_r = check_decay_r(pb.source.values(t), pb.r_inf, pb.tgrid, X, alpha, omega, grid, bc)
    if alpha < 1.0:
        B = 1.0 / (math.gamma(alpha) * alpha * (1.0 - alpha))
    else:
        B = 1.0 / omega
    higher = n1 if s == 0 else n2
    lower = n0 if s == 0 else n1
    conv = rl_convolve(alpha, higher, pb.tgrid)
    lhs = 0.5 * c * conv + lower
    rhs = np.full(t.size, lower[0] + Ct * C_r * B)

    # residual route for || D^alpha w ||_{H^{s-1}}^2
    w = history.deviation(u_inf)
    forcing = _rhs_series(history, u_inf)
    dalpha = -(pb.A.matvec(w) + pinf[None, :] * w) + forcing
    dalpha[:, ~pb.A.free] = 0.0
    cap_sq = pb.dual.sq(dalpha) if s == 0 else norm_Hs_sq(dalpha, grid, 0)

    header = {
        "regime": regime,
        "s": s,
        "alpha": alpha,
        "conditions_ok": bool(ok),
        "c_low": c_low,
        "c_between": c_between,
        "c_D": c_D,
        "pinf_sup": pinf_sup,
        "p_norm": p_norm,
        "q_L2": q_L2,
        "C_ell": C_ell,
        "c": c,
        "C_tilde": Ct,
        "C_r": C_r,
        "B": B,
        "mu_star": mu_star,
        "mu_between": mu_b,
        "barrier_threshold_between": 0.5 * mu_b * mb_floor,
        "phi1_variant": phi1_variant,
        "omega_r": omega,
        "empirical_constants": True,
    }
    header.update(K.table())
    return MonitorTrace(regime, s, t, n0, n1, n2, nm1, cap_sq, D0, D1, Db, lhs, rhs, barrier_ok, header)


def energy_inequality_lo(history: SolutionHistory, u_inf) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the per-step L2 energy inequality, n = 1..N.

    LHS ``D_tau ||w||^2 + m ||w||_{H1}^2``, RHS ``||p R(w) - rho||_{H-1}^2 / m``
    with ``m = min(c, c_D)``. Holds exactly for the discrete scheme because the
    L1 derivative is coercive and the dual norm is taken in the discrete pairing.
    """
    pb = history.problem
    u_inf = np.asarray(u_inf, dtype=float)
    m = min(check_pinfty(pb.p, pb.q, pb.nl, u_inf), pb.A.c_D)
    if m <= 0.0:
        raise ValueError(f"the energy inequality needs p_inf >= c > 0 (minimum {m:.3e})")
    n0 = history.norms_sq(0, u_inf)
    n1 = history.norms_sq(1, u_inf)
    dn0 = caputo_series(CaputoWeights(pb.tgrid, pb.alpha), n0)
    forcing = _rhs_series(history, u_inf)
    lhs = dn0[1:] + m * n1[1:]
    rhs = pb.dual.sq(forcing[1:]) / m
    return lhs, rhs


def time_derivative_series(history: SolutionHistory, u_inf, s: int = 1):
    """u_t, the discrete Caputo derivative, and ``||D^alpha w||_{H^{s-1}}`` per step.

    The last series uses the equation: ``D^alpha w = -(A + p_inf) w - p R(w) + rho``.
    Returns ``(ut, caputo, residual_norm)`` where ``ut`` and ``caputo`` are
    arrays (N+1, nx) with NaN in row 0.
    """
    pb = history.problem
    u_inf = np.asarray(u_inf, dtype=float)
    w = history.deviation(u_inf)
    pinf = p_infinity(pb.p, pb.q, pb.nl, u_inf)
    dalpha = -(pb.A.matvec(w) + pinf[None, :] * w) + _rhs_series(history, u_inf)
    dalpha[:, ~pb.A.free] = 0.0
    if s - 1 == -1:
        sq = pb.dual.sq(dalpha)
    else:
        sq = norm_Hs_sq(dalpha, pb.grid, s - 1)
    return history.ut(), history.caputo, np.sqrt(np.maximum(sq, 0.0))


def caputo_norm_bound(alpha: float, values, tgrid: TimeGrid, singular_exponent: float | None = None) -> np.ndarray:
    """``int_0^t k^alpha(t - s) v(s) ds`` at the grid nodes by product integration.

    Used to bound ``||D_t^alpha u||`` through ``||u_t||``; with data that
    behave like ``s^(-sigma)`` near 0 pass ``singular_exponent = sigma``.
    """
    if alpha >= 1.0:
        raise ValueError("the Caputo kernel needs alpha < 1")
    return rl_convolve(1.0 - alpha, values, tgrid, singular_exponent=singular_exponent)


@dataclass
class BoundednessReport:
    C_T: float
    lhs: float
    rhs: float
    preconditions_ok: bool
    notes: list = field(default_factory=list)


def boundedness_monitor(history: SolutionHistory, problem: Problem | None = None) -> BoundednessReport:
    """Finite-horizon bound ``sup ||u||^2 + int ||u||_H1^2 <= C_T (||u0||^2 + int ||r||_{H-1}^2)``.

    Reports the smallest ``C_T`` compatible with the computed trajectory
    (time integrals by the trapezoid rule).
    """
    pb = problem or history.problem
    notes = []
    pre = True
    if np.any(pb.p < 0.0):
        pre = False
        notes.append("p has negative values")
    if not pb.nl.odd_sign:
        pre = False
        notes.append("f(xi) xi >= 0 fails on [-10, 10]")
    grid = pb.grid
    t = history.t
    l2 = norm_Hs_sq(history.u, grid, 0)
    h1 = norm_Hs_sq(history.u, grid, 1)
    r = pb.source.values(t)
    rm1 = DualNorm(grid, pb.bc).sq(r)
    lhs = float(np.max(l2) + np.trapezoid(h1, t))
    rhs = float(l2[0] + np.trapezoid(rm1, t))
    if rhs == 0.0:
        C_T = 0.0 if lhs == 0.0 else math.inf
    else:
        C_T = lhs / rhs
    return BoundednessReport(C_T, lhs, rhs, pre, notes)

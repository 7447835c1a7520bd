"""Decay-rate fits and verdicts for the decay theorems.

A :class:`Run` bundles a trajectory, its steady state and the monitor trace.
:func:`verify_decay_theorem` turns it into a :class:`DecayReport` with four
claims:

* ``V1``: the integrated energy bound holds at every step,
* ``V2``: ``||w||_{H^s}^2`` decays at least like ``t^-alpha`` (one-sided,
  slope tolerance 0.15) or exponentially when ``alpha = 1``,
* ``V3``: the barrier flag never trips,
* ``V4``: ``||D^alpha w||_{H^{s-1}}^2 + ||w||_{H^{s+1}}^2`` decays at least like
  ``t^-alpha`` (slope tolerance 0.2).

Fitted constants are reported as measured values; they are not claimed to
coincide with the existential constants of the estimates.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .evolve import (
    BlowUp,
    MonitorConstants,
    MonitorTrace,
    SolutionHistory,
    StepFailure,
    monitor_energy,
    solve_transient,
    time_derivative_series,
)
from .fracops import TimeGrid
from .model import Problem, check_growth, check_summability
from .space import norm_Hs_sq

logger = logging.getLogger(__name__)

SOLVER_TOL = 1e-10
FLOOR_FACTOR = 100.0
MIN_POINTS = 10
POWER_SLACK = 0.15
TAUBER_SLACK = 0.2
UT_SLACK = 0.2
ZERO_SERIES = 1e-28


class Abstain(Exception):
    """A fit or check cannot be carried out; ``reason`` says why."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class FitResult:
    kind: str  # "power" or "exponential"
    rate: float
    C: float
    R2: float
    window: tuple
    n_points: int
    truncated: bool = False

    def __iter__(self):
        return iter((self.rate, self.C, self.R2))


def _times(tgrid) -> np.ndarray:
    return tgrid.nodes if isinstance(tgrid, TimeGrid) else np.asarray(tgrid, dtype=float)


def _select(series, t, window, floor, log_t: bool):
    y = np.asarray(series, dtype=float)
    if y.shape != t.shape:
        raise ValueError("series and time grid differ in length")
    if window is None:
        window = (t[-1] / 10.0, t[-1])
    lo, hi = float(window[0]), float(window[1])
    if log_t:
        lo = max(lo, np.min(t[t > 0]) if np.any(t > 0) else lo)
    sel = (t >= lo) & (t <= hi) & np.isfinite(y)
    truncated = False
    if floor is None:
        finite = y[np.isfinite(y)]
        floor = FLOOR_FACTOR * SOLVER_TOL * (float(np.max(np.abs(finite))) if finite.size else 0.0)
    below = np.flatnonzero(sel & (y < floor))
    if below.size:
        cut = t[below[0]]
        if np.any(sel & (t < cut)):
            sel &= t < cut
            truncated = True
    if np.any(y[sel] <= 0.0):
        raise Abstain("non-positive values in the fit window")
    if np.count_nonzero(sel) < MIN_POINTS:
        raise Abstain(f"fewer than {MIN_POINTS} usable points in the fit window")
    return t[sel], y[sel], (float(t[sel][0]), float(t[sel][-1])), truncated


def _linfit(x, ly):
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * x + icpt)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    if ss_tot <= 1e-30 * max(1.0, float(np.sum(ly**2))):
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return float(slope), float(icpt), r2


def fit_power(series, tgrid, window=None, floor=None) -> FitResult:
    """Least squares of ``log y`` on ``log t``; returns exponent ``gamma = -slope``.

    The window defaults to the last decade ``[t_N / 10, t_N]``. Values below
    ``floor`` (default ``100 * 1e-10 * max|y|``) end the window early.
    """
    t = _times(tgrid)
    ts, ys, win, trunc = _select(series, t, window, floor, log_t=True)
    slope, icpt, r2 = _linfit(np.log(ts), np.log(ys))
    return FitResult("power", -slope, math.exp(icpt), r2, win, ts.size, trunc)


def fit_exponential(series, tgrid, window=None, floor=None) -> FitResult:
    """Least squares of ``log y`` on ``t``; returns the rate ``omega = -slope``."""
    t = _times(tgrid)
    ts, ys, win, trunc = _select(series, t, window, floor, log_t=False)
    slope, icpt, r2 = _linfit(ts, np.log(ys))
    return FitResult("exponential", -slope, math.exp(icpt), r2, win, ts.size, trunc)


# ---------------------------------------------------------------------------
# reports


@dataclass
class Verdict:
    claim: str
    status: str  # "pass", "fail" or "abstain"
    margin: float = math.nan
    fitted: float = math.nan
    tolerance: float = math.nan
    note: str = ""


@dataclass
class DecayReport:
    regime: str  # "power" or "exponential"
    rate: float
    C: float
    R2: float
    window: tuple
    verdicts: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def verdict(self, claim: str) -> Verdict:
        for v in self.verdicts:
            if v.claim == claim:
                return v
        raise KeyError(claim)

    @property
    def passed(self) -> bool:
        return all(v.status == "pass" for v in self.verdicts)

    def to_text(self) -> str:
        label = "exponent" if self.regime == "power" else "rate"
        lines = [
            f"regime: {self.regime}",
            f"fitted {label}: {self.rate!r}",
            f"coefficient: {self.C!r}",
            f"R2: {self.R2!r}",
            f"window: [{self.window[0]!r}, {self.window[1]!r}]",
        ]
        for key in sorted(self.info):
            lines.append(f"{key}: {self.info[key]!r}")
        for v in self.verdicts:
            line = f"{v.claim}: {v.status} (margin {v.margin!r}, fitted {v.fitted!r}, tolerance {v.tolerance!r})"
            if v.note:
                line += f" - {v.note}"
            lines.append(line)
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["claim_id", "status", "margin", "fitted_value", "tolerance"])
        for v in self.verdicts:
            w.writerow([v.claim, v.status, repr(float(v.margin)), repr(float(v.fitted)), repr(float(v.tolerance))])
        return buf.getvalue()


@dataclass
class Run:
    """A trajectory with its steady state and monitor trace."""

    problem: Problem
    history: SolutionHistory
    u_inf: np.ndarray
    trace: MonitorTrace
    label: str = "run"


def make_run(problem: Problem, u_inf, regime: str = "hi", history_method: str = "direct",
             constants: MonitorConstants | None = None, label: str = "run", **monitor_kw) -> Run:
    """Solve the transient problem and evaluate the monitors."""
    hist = solve_transient(problem, u_inf=u_inf, history_method=history_method)
    trace = monitor_energy(hist, u_inf, regime=regime, constants=constants, **monitor_kw)
    return Run(problem, hist, np.asarray(u_inf, dtype=float), trace, label)


def _prerequisites(run: Run) -> list:
    """Reasons that block the theorem's hypotheses (empty when all hold)."""
    pb = run.problem
    tr = run.trace
    reasons = []
    if not tr.header.get("conditions_ok", False):
        name = "averaged potential" if tr.regime == "between" else "linearized potential"
        reasons.append(f"{name} not bounded below by a positive constant")
    summ = check_summability(1, pb.r_exp, pb.nl.growth.kappa2)
    if tr.regime == "lo" and not summ.lo:
        reasons.append("summability conditions of the low-regularity estimate fail")
    if tr.regime != "lo" and not summ.hi:
        reasons.append("summability conditions of the high-regularity estimate fail")
    g = check_growth(pb.nl)
    if not g.passed:
        reasons.append(f"declared growth bound violated (ratio {g.worst_ratio:.3g})")
    if not math.isfinite(tr.header.get("C_r", math.inf)):
        reasons.append("decay of r - r_inf not observed")
    return reasons


def _rate_verdict(claim, series, t, alpha, slack, window, floor=None):
    """One-sided rate claim; returns (Verdict, FitResult or None)."""
    y = np.asarray(series, dtype=float)
    finite = y[np.isfinite(y)]
    if finite.size and float(np.max(np.abs(finite))) <= ZERO_SERIES:
        return Verdict(claim, "pass", math.inf, math.inf, slack, "series vanishes identically"), None
    try:
        if alpha < 1.0:
            fit = fit_power(y, t, window, floor)
            margin = fit.rate - (alpha - slack)
            return Verdict(claim, "pass" if margin >= 0 else "fail", margin, fit.rate, slack), fit
        fit = fit_exponential(y, t, window, floor)
        return Verdict(claim, "pass" if fit.rate > 0 else "fail", fit.rate, fit.rate, 0.0), fit
    except Abstain as exc:
        return Verdict(claim, "abstain", note=exc.reason), None


def _default_window(t, alpha):
    if alpha < 1.0:
        return (t[-1] / 10.0, t[-1])
    return (t[-1] / 10.0, t[-1])


def verify_decay_theorem(run: Run, s: int | None = None, regime: str | None = None, window=None) -> DecayReport:
    """Verdicts V1-V4 for the decay theorem on one run.

    ``s`` defaults to the monitor's regularity level and ``regime`` to
    ``"power"`` for alpha < 1 and ``"exponential"`` for alpha = 1.
    """
    tr = run.trace
    pb = run.problem
    alpha = pb.alpha
    s = tr.s if s is None else s
    regime = regime or ("power" if alpha < 1.0 else "exponential")
    t = run.history.t
    window = window or _default_window(t, alpha)
    eff_alpha = alpha if regime == "power" else 1.0

    main = run.history.norms_sq(s, run.u_inf)
    v2, fit = _rate_verdict("V2", main, t, eff_alpha, POWER_SLACK, window)
    higher = run.history.norms_sq(s + 1, run.u_inf)
    tauber = np.where(np.isnan(tr.caputo_res_sq), 0.0, tr.caputo_res_sq) + higher
    tauber[0] = np.nan
    v4, fit4 = _rate_verdict("V4", tauber, t, eff_alpha, TAUBER_SLACK, window)

    holds = tr.bound_holds
    rel = (tr.bound_rhs - tr.bound_lhs) / np.maximum(np.abs(tr.bound_rhs), 1e-300)
    margin = float(np.min(rel[1:])) if rel.size > 1 else float(rel[0])
    v1 = Verdict("V1", "pass" if bool(np.all(holds)) else "fail", margin, float(np.max(tr.bound_lhs)), 1e-9)
    if tr.regime == "between":
        ratio = tr.D_between / tr.header["barrier_threshold_between"]
        v3_margin = float(1.0 - np.max(ratio))
    else:
        D = tr.D0 if tr.s == 0 else tr.D1
        v3_margin = float(0.5 - np.max(D))
    v3 = Verdict("V3", "fail" if tr.barrier_tripped else "pass", v3_margin, v3_margin, 0.5 if tr.regime != "between" else 1.0)

    verdicts = [v1, v2, v3, v4]
    reasons = _prerequisites(run)
    if reasons:
        note = "; ".join(reasons)
        verdicts = [Verdict(v.claim, "abstain", v.margin, v.fitted, v.tolerance, note) for v in verdicts]
    info = {"alpha": alpha, "s": s, "monitor_regime": tr.regime, "label": run.label}
    if fit4 is not None:
        info["tauber_rate"] = fit4.rate
    if fit is None:
        return DecayReport(regime, v2.fitted, math.nan, math.nan, window, verdicts, info)
    return DecayReport(regime, fit.rate, fit.C, fit.R2, fit.window, verdicts, info)


# ---------------------------------------------------------------------------
# smallness probe


def unit_profile(problem: Problem, s: int, kind: str = "mode", seed: int = 0) -> np.ndarray:
    """Perturbation profile with unit ``H^s`` norm and homogeneous boundary values.

    ``kind="mode"`` is the first eigenfunction shape of the Laplacian;
    ``kind="random"`` a seeded random trigonometric polynomial.
    """
    grid = problem.grid
    x = (grid.x - grid.a) / (grid.b - grid.a)
    dirichlet = problem.bc.dirichlet
    basis = np.sin if dirichlet else np.cos
    if kind == "mode":
        g = basis(np.pi * x)
    elif kind == "random":
        rng = np.random.default_rng(seed)
        k = np.arange(1, 9)
        c = rng.standard_normal(k.size) / k**2
        g = c @ basis(np.pi * np.outer(k, x))
    else:
        raise ValueError(f"unknown profile kind {kind!r}")
    return g / math.sqrt(float(norm_Hs_sq(g, grid, s)))


@dataclass
class ProbeResult:
    rows: list  # (radius, status, note)
    rho0_lower: float

    @property
    def prefix_monotone(self) -> bool:
        seen_fail = False
        for _, status, _ in sorted(self.rows):
            if status != "pass":
                seen_fail = True
            elif seen_fail:
                return False
        return True

    def to_text(self) -> str:
        lines = [f"radius {r!r}: {st}" + (f" - {note}" if note else "") for r, st, note in self.rows]
        lines.append(f"largest radius of the passing prefix: {self.rho0_lower!r}")
        return "\n".join(lines) + "\n"


def smallness_probe(problem: Problem, u_inf, radii, regime: str = "hi", profile: np.ndarray | None = None,
                    history_method: str = "direct") -> ProbeResult:
    """Run from ``u_inf + radius * g`` for each radius and record the decay verdicts.

    A radius passes when every verdict of :func:`verify_decay_theorem` passes.
    Solver failures count as failures. ``rho0_lower`` is the largest radius
    of the passing prefix (radii sorted increasingly).
    """
    u_inf = np.asarray(u_inf, dtype=float)
    s = 0 if regime == "lo" else 1
    g = unit_profile(problem, s) if profile is None else np.asarray(profile, dtype=float)
    constants = MonitorConstants(problem)
    rows = []
    for radius in sorted(float(r) for r in radii):
        if radius == 0.0:
            rows.append((0.0, "pass", "steady start"))
            continue
        pb = problem.replace(u0=u_inf + radius * g)
        try:
            run = make_run(pb, u_inf, regime, history_method, constants, label=f"radius={radius!r}")
        except BlowUp as exc:
            rows.append((radius, "fail", f"blow-up at step {exc.step}"))
            continue
        except StepFailure as exc:
            rows.append((radius, "fail", f"solver failure at step {exc.step}"))
            continue
        rep = verify_decay_theorem(run)
        bad = [f"{v.claim}={v.status}" for v in rep.verdicts if v.status != "pass"]
        rows.append((radius, "fail" if bad else "pass", ", ".join(bad)))
    rho = 0.0
    for radius, status, _ in rows:
        if status != "pass":
            break
        rho = radius
    return ProbeResult(rows, rho)


# ---------------------------------------------------------------------------
# time derivative


def initial_ut_singular(t, ut_norm, alpha: float, n_first: int = 6, threshold: float = -0.1) -> bool:
    """Heuristic for a non-finite ``u_t(0)``: ``||u_t||`` grows like a negative power near 0.

    Fits the log-log slope of the backward-difference norms over the first
    ``n_first`` steps; a slope below ``threshold`` with ``alpha < 1`` signals
    the ``t^(alpha-1)`` behaviour of unregularized data.
    """
    if alpha >= 1.0:
        return False
    t = np.asarray(t, dtype=float)[1 : n_first + 1]
    y = np.asarray(ut_norm, dtype=float)[1 : n_first + 1]
    ok = (t > 0) & (y > 0) & np.isfinite(y)
    if np.count_nonzero(ok) < 3:
        return False
    slope = np.polyfit(np.log(t[ok]), np.log(y[ok]), 1)[0]
    return bool(slope < threshold)


def verify_ut_theorem(run: Run, regime: str | None = None, t0: float | None = None, beta: float | None = None,
                      window=None) -> DecayReport:
    """Verdicts for the time-derivative theorem.

    Claims: ``a`` (alpha = 1: ``||u_t||_{H1}`` over the last 5% of the horizon
    below 1e-3 times its first value), ``b`` (slope of ``||u_t||_{H2}^2`` in ``t - t0`` at most
    ``-min(alpha, beta) + 0.2``), ``c`` (alpha = 1: exponential fit of
    ``||u_t||_{H2}^2`` with positive rate; alpha < 1: same as ``b`` with
    ``beta = alpha``). If ``u_t(0)`` looks non-finite (alpha < 1) the claims
    that need finite initial time derivatives abstain. ``info`` also carries
    the exponential rate of ``||u_t||_{H1}^2``.
    """
    pb = run.problem
    alpha = pb.alpha
    regime = regime or ("power" if alpha < 1.0 else "exponential")
    hist = run.history
    ut, _, _ = time_derivative_series(hist, run.u_inf, s=1)
    t = hist.t
    h1 = np.full(t.size, np.nan)
    h2 = np.full(t.size, np.nan)
    h1[1:] = norm_Hs_sq(ut[1:], pb.grid, 1)
    h2[1:] = norm_Hs_sq(ut[1:], pb.grid, 2)
    l2 = np.full(t.size, np.nan)
    l2[1:] = np.sqrt(norm_Hs_sq(ut[1:], pb.grid, 0))
    singular = initial_ut_singular(t, l2, alpha)
    if t0 is None:
        t0 = 0.0
    beta = alpha if beta is None else beta
    shifted = t - t0
    valid = shifted > 0
    window = window or (t[-1] / 10.0, t[-1])
    verdicts = []
    info = {"alpha": alpha, "t0": t0, "beta": beta, "ut_initial_singular": singular}
    note_init = "u_t(0) not finite in the discrete norm; it cannot be bootstrapped from the equation"

    # (a)
    if alpha == 1.0:
        first = math.sqrt(h1[1]) if h1[1] > 0 else 0.0
        tail = math.sqrt(float(np.nanmax(h1[t >= t[0] + 0.95 * (t[-1] - t[0])])))
        ok = tail <= 1e-3 * first or tail <= ZERO_SERIES
        verdicts.append(Verdict("a", "pass" if ok else "fail", 1e-3 * first - tail, tail, 1e-3))
    else:
        verdicts.append(Verdict("a", "abstain", note="clause stated for alpha = 1"))

    win_shift = (window[0] - t0, window[1] - t0)
    m = min(alpha, beta)
    rate_fit = None
    if singular:
        verdicts.append(Verdict("b", "abstain", note=note_init))
        verdicts.append(Verdict("c", "abstain", note=note_init))
    else:
        vb, fb = _rate_verdict("b", h2[valid], shifted[valid], m if m < 1.0 else 1.0, UT_SLACK, win_shift)
        if m >= 1.0:
            vb = Verdict("b", vb.status, vb.margin, vb.fitted, vb.tolerance, "exponential tail, slope test via rate")
        verdicts.append(vb)
        if alpha == 1.0:
            vc, fc = _rate_verdict("c", h2[valid], shifted[valid], 1.0, 0.0, win_shift)
        else:
            vc, fc = _rate_verdict("c", h2[valid], shifted[valid], alpha, UT_SLACK, win_shift)
        verdicts.append(vc)
        rate_fit = fc
    if alpha == 1.0:
        try:
            info["ut_H1_rate"] = fit_exponential(h1[1:], t[1:], window).rate
        except Abstain as exc:
            info["ut_H1_rate"] = math.nan
            info["ut_H1_note"] = exc.reason
    if rate_fit is None:
        return DecayReport(regime, math.nan, math.nan, math.nan, window, verdicts, info)
    return DecayReport(regime, rate_fit.rate, rate_fit.C, rate_fit.R2, rate_fit.window, verdicts, info)


@dataclass
class RtHypothesis:
    integral: float
    tail_integral: float
    tail_sup: float
    integrable: bool
    sup_decays: bool


def check_rt_hypothesis(t, rt_norm, tail_fraction: float = 0.5, sup_tol: float = 1e-2) -> RtHypothesis:
    """Check ``r_t in L2(0, inf; L2)`` and ``||r_t(t)|| -> 0`` on a finite record.

    Integrability is judged by the share of ``int ||r_t||^2`` carried by the
    last ``tail_fraction`` of the horizon; sup-decay by the maximum of
    ``||r_t||`` over that tail relative to the overall maximum.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(rt_norm, dtype=float)
    sq = y**2
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (sq[1:] + sq[:-1]) * np.diff(t))])
    total = float(cum[-1])
    t_tail = t[0] + (1.0 - tail_fraction) * (t[-1] - t[0])
    tail_int = total - float(np.interp(t_tail, t, cum))
    peak = float(np.max(np.abs(y))) if y.size else 0.0
    tail_sup = float(np.max(np.abs(y[t >= t_tail])))
    integrable = total == 0.0 or tail_int <= 0.1 * total
    sup_decays = peak == 0.0 or tail_sup <= sup_tol * peak
    return RtHypothesis(total, tail_int, tail_sup, integrable, sup_decays)


def spike_train(j_max: int = 20, points_per_spike: int = 8, background: int = 4000):
    """The indicator sum ``sum_j chi_[j, j + j^-4]`` sampled on a grid resolving each spike."""
    t = [np.linspace(0.0, j_max + 1.0, background)]
    for j in range(1, j_max + 1):
        w = float(j) ** -4
        t.append(np.linspace(j, j + w, points_per_spike))
        t.append(np.array([j - 1e-9 * w, j + w + 1e-9 * w]))
    t = np.unique(np.concatenate(t))
    y = np.zeros_like(t)
    for j in range(1, j_max + 1):
        y[(t >= j) & (t <= j + float(j) ** -4)] = 1.0
    return t, y

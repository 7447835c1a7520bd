"""Comparison principle for fractional relaxation inequalities.

For ``D_t^alpha eta + c0 eta <= phi`` the solution is dominated by the
majorant::

    nu(t) = E_{alpha,1}(-c0 t^alpha) eta(0)
            + int_0^t (t-s)^(alpha-1) E_{alpha,alpha}(-c0 (t-s)^alpha) phi(s) ds

This module evaluates ``nu``, checks majorization of computed series, and
provides the power-law and exponential corollaries, the barrier implication
and the two-function rate lemma used for time derivatives.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .fracops import CaputoWeights, TimeGrid, caputo_series, rl_convolve
from .specialfn import c_alpha_sup, ml_table

logger = logging.getLogger(__name__)

PHI_KINDS = ("zero", "constant", "power", "exponential", "shifted_power", "series")
GAUSS_NODES = 8


@dataclass(frozen=True)
class MajorantSpec:
    """Data of the relaxation inequality.

    ``phi_kind`` selects the forcing: ``zero``; ``constant`` (phi0);
    ``power`` (phi0 t^-alpha); ``exponential`` (phi0 exp(-c1 t));
    ``shifted_power`` (phi0 (1+t)^-alpha); ``series`` (``samples`` on the
    time grid, linearly interpolated).
    """

    alpha: float
    c0: float
    eta0: float = 0.0
    phi_kind: str = "zero"
    phi0: float = 0.0
    c1: float | None = None
    samples: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha!r}")
        if not self.c0 > 0.0:
            raise ValueError(f"c0 must be positive, got {self.c0!r}")
        if self.eta0 < 0.0:
            raise ValueError("eta(0) must be non-negative")
        if self.phi_kind not in PHI_KINDS:
            raise ValueError(f"unknown phi kind {self.phi_kind!r}")
        if self.phi_kind == "series":
            if self.samples is None:
                raise ValueError("phi_kind 'series' needs samples")
            if np.any(np.asarray(self.samples) < 0.0):
                raise ValueError("phi must be non-negative")
        elif self.phi0 < 0.0:
            raise ValueError("phi0 must be non-negative")
        if self.phi_kind == "power" and self.alpha >= 1.0:
            raise ValueError("the power forcing t^-alpha is not integrable for alpha = 1")
        if self.phi_kind == "exponential" and (self.c1 is None or self.c1 <= 0.0):
            raise ValueError("exponential forcing needs c1 > 0")

    def phi(self, t) -> np.ndarray:
        """Forcing at times ``t`` (the power class is infinite at t = 0)."""
        t = np.asarray(t, dtype=float)
        k = self.phi_kind
        if k == "zero":
            return np.zeros_like(t)
        if k == "constant":
            return np.full_like(t, self.phi0)
        if k == "power":
            with np.errstate(divide="ignore"):
                return self.phi0 * t ** (-self.alpha)
        if k == "exponential":
            return self.phi0 * np.exp(-self.c1 * t)
        if k == "shifted_power":
            return self.phi0 * (1.0 + t) ** (-self.alpha)
        raise ValueError("sampled forcing has no closed form; use the samples")

    def dphi(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = self.phi_kind
        if k in ("zero", "constant"):
            return np.zeros_like(t)
        if k == "exponential":
            return -self.c1 * self.phi0 * np.exp(-self.c1 * t)
        if k == "shifted_power":
            return -self.alpha * self.phi0 * (1.0 + t) ** (-self.alpha - 1.0)
        raise ValueError(f"no derivative for phi kind {k!r}")

    def phi_on(self, tgrid: TimeGrid) -> np.ndarray:
        if self.phi_kind == "series":
            s = np.asarray(self.samples, dtype=float)
            if s.shape != (tgrid.N + 1,):
                raise ValueError("phi samples do not match the time grid")
            return s
        return self.phi(tgrid.nodes)


def _E1(alpha: float, x):
    """``E_{alpha,1}(-x)`` for x >= 0."""
    x = np.asarray(x, dtype=float)
    if alpha == 1.0:
        return np.exp(-x)
    return ml_table(alpha, 1.0)(x)


def relaxation_kernel_integral(alpha: float, c0: float, sigma):
    """``G(sigma) = int_0^sigma s^(alpha-1) E_{alpha,alpha}(-c0 s^alpha) ds``.

    Closed form ``(1 - E_{alpha,1}(-c0 sigma^alpha)) / c0``.
    """
    sigma = np.maximum(np.asarray(sigma, dtype=float), 0.0)
    if alpha == 1.0:
        return -np.expm1(-c0 * sigma) / c0
    return (1.0 - _E1(alpha, c0 * sigma**alpha)) / c0


@dataclass
class _PanelRule:
    """Quadrature nodes for ``int_0^{t_n} G(t_n - s) g(s) ds`` panel by panel."""

    alpha: float

    def __post_init__(self):
        x, w = np.polynomial.legendre.leggauss(GAUSS_NODES)
        self.gl = (0.5 * (x + 1.0), 0.5 * w)
        # last panel in sigma = t_n - s with sigma = tau * v^(1/alpha):
        # d sigma = (tau/alpha) v^(1/alpha - 1) dv, G smooth in v
        b = 1.0 / self.alpha - 1.0
        xj, wj = special.roots_jacobi(GAUSS_NODES, 0.0, b)
        v = 0.5 * (xj + 1.0)
        self.jac = (v, wj * 0.5 ** (b + 1.0) / self.alpha)

    def points(self, t: np.ndarray, n: int):
        """Return ``(s, sigma, weights, panel_index)`` for the integral up to ``t_n``."""
        xg, wg = self.gl
        if n > 1:
            a, b = t[: n - 1], t[1:n]
            s_far = (a[:, None] + (b - a)[:, None] * xg[None, :]).ravel()
            w_far = ((b - a)[:, None] * wg[None, :]).ravel()
            idx_far = np.repeat(np.arange(n - 1), GAUSS_NODES)
        else:
            s_far = w_far = np.empty(0)
            idx_far = np.empty(0, dtype=int)
        tau = t[n] - t[n - 1]
        v, wj = self.jac
        sig_last = tau * v ** (1.0 / self.alpha)
        s_last = t[n] - sig_last
        w_last = tau * wj
        s = np.concatenate([s_far, s_last])
        w = np.concatenate([w_far, w_last])
        idx = np.concatenate([idx_far, np.full(GAUSS_NODES, n - 1)])
        return s, t[n] - s, w, idx


def nu_majorant(spec: MajorantSpec, tgrid: TimeGrid) -> np.ndarray:
    """The majorant ``nu(t_n)`` on the nodes of ``tgrid``.

    Integration by parts turns the weakly singular convolution into
    ``G(t) phi(0) + int_0^t G(t - s) phi'(s) ds`` with the bounded kernel
    ``G`` of :func:`relaxation_kernel_integral`. Closed forms are used for
    the zero, constant and power classes (and exponential forcing at
    alpha = 1); otherwise the remaining integral is evaluated with
    Gauss-Legendre rules on the grid panels and a Gauss-Jacobi rule on the
    panel touching ``t_n``, which absorbs the ``sigma^alpha`` behaviour of
    ``G`` at the origin. Sampled forcing is interpolated linearly.
    """
    a, c0, eta0 = spec.alpha, spec.c0, spec.eta0
    t = tgrid.nodes
    E = _E1(a, c0 * t**a)
    k = spec.phi_kind
    if k == "zero":
        return eta0 * E
    if k == "constant":
        return eta0 * E + spec.phi0 * (1.0 - E) / c0
    if k == "power":
        # Laplace transform: phi0 Gamma(1-alpha) s^(alpha-1) / (s^alpha + c0)
        out = (eta0 + spec.phi0 * math.gamma(1.0 - a)) * E
        out[0] = eta0
        return out
    if k == "exponential" and a == 1.0:
        c1 = spec.c1
        if abs(c1 - c0) < 1e-12:
            return (eta0 + spec.phi0 * t) * np.exp(-c0 * t)
        return eta0 * np.exp(-c0 * t) + spec.phi0 * (np.exp(-c0 * t) - np.exp(-c1 * t)) / (c1 - c0)

    G = lambda sig: relaxation_kernel_integral(a, c0, sig)
    if k == "series":
        phi = spec.phi_on(tgrid)
        slopes = np.diff(phi) / np.diff(t)
        phi_start = phi[0]
    else:
        slopes = None
        phi_start = float(spec.phi(0.0))
    rule = _PanelRule(a)
    out = np.empty(t.size)
    out[0] = eta0
    for n in range(1, t.size):
        s, sig, w, idx = rule.points(t, n)
        dphi = slopes[idx] if slopes is not None else spec.dphi(s)
        out[n] = eta0 * E[n] + G(t[n]) * phi_start + float(np.sum(w * G(sig) * dphi))
    return out


def solve_fractional_relaxation(alpha: float, c0: float, phi_values, eta0: float, tgrid: TimeGrid) -> np.ndarray:
    """L1 solution of ``D_t^alpha eta + c0 eta = phi`` (phi sampled at the nodes)."""
    phi = np.asarray(phi_values, dtype=float)
    if phi.shape != (tgrid.N + 1,):
        raise ValueError("phi samples do not match the time grid")
    W = CaputoWeights(tgrid, alpha, cache=False)
    eta = np.empty(tgrid.N + 1)
    eta[0] = eta0
    dv = np.empty(tgrid.N)
    for n in range(1, tgrid.N + 1):
        row = W.row(n)
        mem = float(row[:-1] @ dv[: n - 1])
        a = row[-1]
        eta[n] = (phi[n] - mem + a * eta[n - 1]) / (a + c0)
        dv[n - 1] = eta[n] - eta[n - 1]
    return eta


@dataclass
class MajorizationReport:
    passed: bool
    worst_gap: float
    worst_index: int
    violations: list
    t: np.ndarray
    eta: np.ndarray
    nu: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return self.eta - self.nu

    def to_csv(self, handle=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "eta", "nu", "gap"])
        for row in zip(self.t, self.eta, self.nu, self.gap):
            w.writerow([repr(float(v)) for v in row])
        if handle is not None:
            handle.write(buf.getvalue())
        return buf.getvalue()


def check_majorization(eta, spec: MajorantSpec, tgrid: TimeGrid, rtol: float = 1e-6, atol: float = 1e-12,
                       nu: np.ndarray | None = None) -> MajorizationReport:
    """Check ``eta(t_n) <= nu(t_n) (1 + rtol) + atol`` at every node."""
    eta = np.asarray(eta, dtype=float)
    nu = nu_majorant(spec, tgrid) if nu is None else nu
    gap = eta - nu
    bad = np.flatnonzero(eta > nu * (1.0 + rtol) + atol)
    i = int(np.argmax(gap))
    return MajorizationReport(bad.size == 0, float(gap[i]), i, bad.tolist(), tgrid.nodes, eta, nu)


def beta_integral_tail(alpha: float) -> float:
    """``int_{1/2}^1 sigma^(alpha-1) (1-sigma)^(-alpha) d sigma`` by adaptive quadrature."""
    val, _ = integrate.quad(lambda s: s ** (alpha - 1.0), 0.5, 1.0, weight="alg", wvar=(0.0, -alpha))
    return val


def c_of_alpha(alpha: float) -> float:
    """``C(alpha) = 2^alpha (1 + alpha + C_alpha int_{1/2}^1 sigma^(alpha-1) (1-sigma)^(-alpha) d sigma)``.

    ``C_alpha = sup_x x E_{alpha,alpha}(-x)`` comes from
    :func:`subdiff.specialfn.c_alpha_sup`.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"C(alpha) is defined for 0 < alpha < 1, got {alpha!r}")
    return 2.0**alpha * (1.0 + alpha + c_alpha_sup(alpha) * beta_integral_tail(alpha))


@dataclass
class DecayBound:
    coefficient: float
    passed: bool
    worst_ratio: float
    printed_coefficient: float | None = None


def power_decay_bound(spec: MajorantSpec, tgrid: TimeGrid, t_min: float = 0.0) -> DecayBound:
    """Coefficient ``K`` with ``nu(t) <= K t^-alpha`` for power forcing.

    ``K = Gamma(1+alpha) eta(0) / c0 + phi0 C(alpha) / c0``. The first term
    follows from ``E_{alpha,1}(-x) <= Gamma(1+alpha) / x``; it scales like
    ``1/c0`` and stays valid for ``c0 < 1``. ``printed_coefficient`` holds the
    variant with ``c0^-alpha`` in the first term for comparison. The bound is
    checked at nodes with ``t >= max(t_min, t_1)``.
    """
    if spec.phi_kind not in ("power", "zero"):
        raise ValueError("power_decay_bound needs power (or zero) forcing")
    a, c0 = spec.alpha, spec.c0
    if a >= 1.0:
        raise ValueError("the power-law corollary needs alpha < 1")
    phi0 = spec.phi0 if spec.phi_kind == "power" else 0.0
    Ca = c_of_alpha(a)
    K = math.gamma(1.0 + a) * spec.eta0 / c0 + phi0 * Ca / c0
    K_printed = math.gamma(1.0 + a) * c0 ** (-a) * spec.eta0 + phi0 * Ca / c0
    t = tgrid.nodes
    sel = (t > 0.0) & (t >= t_min)
    nu = nu_majorant(spec, tgrid)[sel]
    env = t[sel] ** (-a)
    if K == 0.0:
        worst = float(np.max(np.abs(nu))) if nu.size else 0.0
        return DecayBound(0.0, worst <= 1e-300, worst, K_printed)
    ratio = nu / (K * env)
    worst = float(np.max(ratio)) if ratio.size else 0.0
    return DecayBound(K, worst <= 1.0 + 1e-12, worst, K_printed)


def exp_decay_bound(spec: MajorantSpec, tgrid: TimeGrid) -> DecayBound:
    """For alpha = 1 and ``phi = phi0 exp(-c1 t)`` with ``c1 > c0``:
    ``nu(t) <= (eta(0) + phi0 / (c1 - c0)) exp(-c0 t)``.
    """
    if spec.alpha != 1.0:
        raise ValueError("the exponential corollary is stated for alpha = 1")
    if spec.phi_kind == "zero":
        c1, phi0 = math.inf, 0.0
    elif spec.phi_kind == "exponential":
        c1, phi0 = spec.c1, spec.phi0
    else:
        raise ValueError("exp_decay_bound needs exponential forcing")
    if not c1 > spec.c0:
        raise ValueError(f"precondition c1 > c0 violated (c1 = {c1}, c0 = {spec.c0})")
    coef = spec.eta0 + (phi0 / (c1 - spec.c0) if phi0 else 0.0)
    t = tgrid.nodes
    nu = nu_majorant(spec, tgrid)
    env = coef * np.exp(-spec.c0 * t)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(env > 0, nu / env, np.where(nu > 0, np.inf, 0.0))
    worst = float(np.max(ratio))
    return DecayBound(coef, worst <= 1.0 + 1e-12, worst)


def beta_envelope(alpha: float) -> float:
    """``1 / (Gamma(alpha) alpha (1 - alpha))``, an upper bound for ``Gamma(1-alpha)``.

    It bounds ``(k^{1-alpha} * s^-alpha)(t) = Gamma(1-alpha)`` through
    ``B(alpha, 1-alpha) <= 1/alpha + 1/(1-alpha)``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("needs 0 < alpha < 1")
    return 1.0 / (math.gamma(alpha) * alpha * (1.0 - alpha))


def constant_envelope(spec: MajorantSpec) -> float:
    """Time-uniform bound for non-negative ``eta``: constant or power forcing."""
    if spec.phi_kind == "zero":
        return spec.eta0
    if spec.phi_kind == "constant":
        return spec.eta0 + spec.phi0 / spec.c0
    if spec.phi_kind == "power":
        return spec.eta0 + spec.phi0 * beta_envelope(spec.alpha)
    raise ValueError("constant envelope available for zero, constant and power forcing")


@dataclass
class BarrierReport:
    status: str  # "pass", "fail" or "premise_not_met"
    premise_value: float
    first_violation: int | None = None
    values: np.ndarray | None = None

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def barrier_implication(eta, Phi, c2: float, alpha: float, tgrid: TimeGrid) -> BarrierReport:
    """Barrier argument: if ``Phi(eta(0) + c2 B(alpha)) < 1`` then ``Phi(eta) <= 1`` throughout.

    ``Phi`` must be non-decreasing. When the premise fails the checker
    abstains with status ``premise_not_met``.
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (tgrid.N + 1,):
        raise ValueError("eta does not match the time grid")
    premise = float(Phi(eta[0] + c2 * beta_envelope(alpha)))
    if not premise < 1.0:
        return BarrierReport("premise_not_met", premise)
    vals = np.asarray([float(Phi(v)) for v in eta])
    bad = np.flatnonzero(vals > 1.0)
    if bad.size:
        return BarrierReport("fail", premise, int(bad[0]), vals)
    return BarrierReport("pass", premise, None, vals)


def integrated_form_check(eta, phi, c0: float, alpha: float, tgrid: TimeGrid, tol: float = 1e-10):
    """Both sides of ``eta(t) - eta(0) + c0 (k^{1-alpha} * eta)(t) <= (k^{1-alpha} * phi)(t)``.

    Returns ``(lhs, rhs, ok)``; the convolutions use :func:`subdiff.fracops.rl_convolve`.
    """
    eta = np.asarray(eta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    lhs = eta - eta[0] + c0 * rl_convolve(alpha, eta, tgrid)
    rhs = rl_convolve(alpha, phi, tgrid)
    return lhs, rhs, bool(np.all(lhs <= rhs + tol))


def _tail_slope(t, y, window):
    sel = (t >= window[0]) & (t <= window[1]) & (y > 0)
    if np.count_nonzero(sel) < 10:
        return math.nan
    return float(np.polyfit(np.log(t[sel]), np.log(y[sel]), 1)[0])


@dataclass
class Eta01Report:
    status: str  # "pass", "fail" or "abstain"
    rate: float
    slopes: tuple
    coefficients: tuple
    C_j: tuple
    premise_worst: float
    l1_control: tuple = ()
    notes: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"status = {self.status}", f"rate = {float(self.rate)!r}"]
        for j in (0, 1):
            lines.append(f"slope_{j} = {float(self.slopes[j])!r}")
            lines.append(f"coefficient_{j} = {float(self.coefficients[j])!r}")
            lines.append(f"C_{j} = {float(self.C_j[j])!r}")
        lines.append(f"premise_worst = {float(self.premise_worst)!r}")
        for j, v in enumerate(self.l1_control):
            lines.append(f"l1_control_{j} = {float(v)!r}")
        lines.extend(f"note = {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def eta01_rates(eta0, eta1, c0: float, c1: float, C: float, beta: float, alpha: float, tgrid: TimeGrid,
                premise_rtol: float = 1e-2, window: tuple | None = None) -> Eta01Report:
    """Rates for the pair ``D^alpha eta0 + c0 eta0 + c1 eta1 <= C t^-beta``.

    The premise is checked with the L1 derivative, allowing a discretization
    slack of ``premise_rtol`` times the size of the individual terms. For
    ``alpha < 1`` the tail slopes over ``window`` (default: the last decade)
    must not exceed ``-min(alpha, beta) + 0.2`` and ``sup eta_j t^m`` over the
    window must stay below ``1.5 C_j`` with ``C_j = (C Gamma(1-beta) + eta0(0)) / c_j``.
    For ``alpha = 1`` the exponential form ``eta0 <= (eta0(0) + C t) exp(-c0 t)`` is checked.
    ``l1_control`` reports ``sup_t t^m int_{t/2}^t eta_j ds / (t/2)`` over the window.
    """
    e0 = np.asarray(eta0, dtype=float)
    e1 = np.asarray(eta1, dtype=float)
    t = tgrid.nodes
    W = CaputoWeights(tgrid, alpha, cache=False)
    d0 = caputo_series(W, e0)
    lhs = d0[1:] + c0 * e0[1:] + c1 * e1[1:]
    with np.errstate(divide="ignore"):
        bound = C * t[1:] ** (-beta)
    slack = premise_rtol * (np.abs(d0[1:]) + c0 * np.abs(e0[1:]) + c1 * np.abs(e1[1:])) + 1e-12
    excess = lhs - bound - slack
    worst = float(np.max(excess))
    if worst > 0.0:
        return Eta01Report("abstain", math.nan, (math.nan, math.nan), (math.nan, math.nan), (math.nan, math.nan),
                           worst, notes=["premise violated on the grid"])
    if alpha == 1.0:
        env = (e0[0] + C * t) * np.exp(-c0 * t)
        ok = bool(np.all(e0 <= env * (1.0 + 1e-9) + 1e-14))
        return Eta01Report("pass" if ok else "fail", c0, (math.nan, math.nan), (float(np.max(e0 / np.maximum(env, 1e-300))), math.nan),
                           (math.nan, math.nan), worst, notes=["exponential form checked"])
    m = min(alpha, beta)
    if window is None:
        window = (t[-1] / 10.0, t[-1])
    Cj = tuple((C * math.gamma(1.0 - beta) + e0[0]) / cj for cj in (c0, c1))
    sel = (t >= window[0]) & (t <= window[1])
    slopes, coefs, l1 = [], [], []
    ok = True
    notes = []
    for j, e in enumerate((e0, e1)):
        if np.all(e[sel] == 0.0):
            slopes.append(-math.inf)
            coefs.append(0.0)
            l1.append(0.0)
            continue
        sl = _tail_slope(t, e, window)
        coef = float(np.max(e[sel] * t[sel] ** m))
        slopes.append(sl)
        coefs.append(coef)
        # averaged control over [t/2, t]
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (e[1:] + e[:-1]) * np.diff(t))])
        half = np.interp(t[sel] / 2.0, t, cum)
        avg = (cum[sel] - half) / (t[sel] / 2.0)
        l1.append(float(np.max(avg * t[sel] ** m)))
        if not (sl <= -m + 0.2):
            ok = False
            notes.append(f"eta_{j} tail slope {sl:.3f} above {-m + 0.2:.3f}")
        if not coef <= 1.5 * Cj[j]:
            ok = False
            notes.append(f"eta_{j} coefficient {coef:.3e} above 1.5 C_{j} = {1.5 * Cj[j]:.3e}")
    return Eta01Report("pass" if ok else "fail", m, tuple(slopes), tuple(coefs), Cj, worst, tuple(l1), notes)

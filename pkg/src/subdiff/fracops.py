"""Discrete Caputo derivative (L1 scheme) and Riemann-Liouville convolutions.

All panel integrals are written in terms of ``x = tau_j / (t_n - t_{j-1})``
and evaluated with ``expm1``/``log1p``, which keeps weights accurate on
strongly graded grids where early panels are many orders of magnitude
shorter than ``t_n``.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time nodes ``0 = t_0 < ... < t_N = T``."""

    nodes: np.ndarray
    kind: str = "custom"
    gamma: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.nodes, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a time grid needs at least two nodes (N >= 1)")
        if t[0] != 0.0:
            raise ValueError("time grid must start at t_0 = 0")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("time nodes must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "nodes", t)

    @classmethod
    def uniform(cls, T: float, N: int) -> "TimeGrid":
        return cls(np.linspace(0.0, float(T), int(N) + 1), kind="uniform", gamma=1.0)

    @classmethod
    def graded(cls, T: float, N: int, gamma: float) -> "TimeGrid":
        if gamma < 1.0:
            raise ValueError(f"grading exponent must be >= 1, got {gamma}")
        j = np.arange(int(N) + 1) / int(N)
        nodes = float(T) * j**gamma
        nodes[-1] = float(T)
        return cls(nodes, kind="uniform" if gamma == 1.0 else "graded", gamma=float(gamma))

    @classmethod
    def graded_then_uniform(cls, T: float, N: int, gamma: float, t_switch: float, n_graded: int | None = None) -> "TimeGrid":
        """Graded nodes on [0, t_switch] followed by uniform steps up to T.

        ``n_graded`` defaults to a split that makes the last graded step no
        longer than the uniform step.
        """
        N = int(N)
        if not 0.0 < t_switch < T:
            raise ValueError("t_switch must lie in (0, T)")
        if n_graded is None:
            # choose n_g so that gamma * t_switch / n_g ~ (T - t_switch) / (N - n_g)
            n_graded = int(round(N * gamma * t_switch / (T - t_switch + gamma * t_switch)))
            n_graded = min(max(n_graded, 2), N - 1)
        g = t_switch * (np.arange(n_graded + 1) / n_graded) ** gamma
        u = np.linspace(t_switch, T, N - n_graded + 1)[1:]
        return cls(np.concatenate([g, u]), kind="graded_uniform", gamma=float(gamma))

    @staticmethod
    def default_gamma(alpha: float) -> float:
        """Grading exponent ``(2 - alpha)/alpha`` capped at 4."""
        return 1.0 if alpha >= 1.0 else min((2.0 - alpha) / alpha, 4.0)

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)


def _l1_row(t: np.ndarray, n: int, alpha: float) -> np.ndarray:
    """Weights ``a_{n,j}``, j = 1..n, of the L1 Caputo formula at ``t_n``."""
    if alpha == 1.0:
        row = np.zeros(n)
        row[-1] = 1.0 / (t[n] - t[n - 1])
        return row
    A = t[n] - t[:n]  # t_n - t_{j-1}, j = 1..n
    x = (t[1 : n + 1] - t[:n]) / A
    x[-1] = 1.0
    # [A^{1-a} - (A - tau)^{1-a}] / tau  =  A^{-a} (1 - (1-x)^{1-a}) / x
    with np.errstate(divide="ignore"):
        frac = -np.expm1((1.0 - alpha) * np.log1p(-x)) / x
    frac[-1] = 1.0
    return A ** (-alpha) * frac / math.gamma(2.0 - alpha)


class CaputoWeights:
    """L1 weights on a :class:`TimeGrid`, generated row by row.

    ``row(n)`` returns ``a_{n,1..n}`` such that the discrete Caputo derivative
    is ``sum_j a_{n,j} (v_j - v_{j-1})``. Rows are cached on first use
    unless ``cache=False`` (long runs would otherwise hold O(N^2) numbers).
    """

    def __init__(self, grid: TimeGrid, alpha: float, cache: bool = True):
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
        self.grid = grid
        self.alpha = float(alpha)
        self._rows: dict[int, np.ndarray] = {}
        self._cache = cache

    def row(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.grid.N:
            raise IndexError(f"step index {n} outside 1..{self.grid.N}")
        r = self._rows.get(n)
        if r is None:
            r = _l1_row(self.grid.nodes, n, self.alpha)
            r.setflags(write=False)
            if self._cache:
                self._rows[n] = r
        return r

    def leading(self, n: int) -> float:
        return float(self.row(n)[-1])

    def to_csv(self, path, max_rows: int | None = None) -> None:
        """Dump rows as (n, j, weight) for debugging."""
        last = self.grid.N if max_rows is None else min(self.grid.N, max_rows)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "j", "weight"])
            for n in range(1, last + 1):
                for j, a in enumerate(self.row(n), start=1):
                    w.writerow([n, j, repr(float(a))])


def l1_weights(grid: TimeGrid, alpha: float) -> CaputoWeights:
    return CaputoWeights(grid, alpha)


def caputo_apply(weights: CaputoWeights, history, n: int):
    """Discrete Caputo derivative of ``history`` at step ``n`` (n >= 1).

    ``history`` has the time index first; trailing axes (e.g. space) are
    carried along, so fields can be differentiated node-wise.
    """
    v = np.asarray(history, dtype=float)
    if not 1 <= n <= weights.grid.N or v.shape[0] <= n:
        raise IndexError(f"step index {n} out of range for history of length {v.shape[0]}")
    dv = np.diff(v[: n + 1], axis=0)
    return np.tensordot(weights.row(n), dv, axes=(0, 0))


def caputo_series(weights: CaputoWeights, history) -> np.ndarray:
    """Discrete Caputo derivative at every node; entry 0 is set to NaN."""
    v = np.asarray(history, dtype=float)
    out = np.full(v.shape, np.nan)
    dv = np.diff(v, axis=0)
    for n in range(1, weights.grid.N + 1):
        out[n] = np.tensordot(weights.row(n), dv[:n], axes=(0, 0))
    return out


def _rl_hat_weights(t: np.ndarray, n: int, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Panel weights (left, right) for (k^{1-alpha} * v)(t_n), v piecewise linear.

    With ``A = t_n - t_{j-1}`` and ``x = tau_j / A`` the panel contributes
    ``A^alpha x / Gamma(alpha) * (v_{j-1} J0 + v_j J1)`` where
    ``J0 = int_0^1 (1-xu)^(alpha-1) (1-u) du`` and ``J1 = int_0^1 (1-xu)^(alpha-1) u du``.
    """
    A = t[n] - t[:n]
    x = (t[1 : n + 1] - t[:n]) / A
    x[-1] = 1.0
    a = alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        lg = np.log1p(-x)
        total = -np.expm1(a * lg) / (a * x)  # int (1-xu)^(a-1) du
        total_p = -np.expm1((a + 1.0) * lg) / ((a + 1.0) * x)  # int (1-xu)^a du
        j1 = (total - total_p) / x
    # small x: use the series sum_k c_k x^k/(k+2) to avoid cancellation in j1
    small = x < 1e-3
    if small.any():
        xs = x[small]
        ck = 1.0
        acc = np.zeros_like(xs)
        xp = np.ones_like(xs)
        for k in range(8):
            acc += ck * xp / (k + 2)
            ck *= (1.0 - a + k) / (k + 1)
            xp = xp * xs
        j1[small] = acc
    # x == 1 exactly on the final panel: closed forms
    last = x == 1.0
    if last.any():
        total[last] = 1.0 / a
        j1[last] = 1.0 / (a * (a + 1.0))
    j0 = total - j1
    scale = A**a * x / math.gamma(a)
    return scale * j0, scale * j1


def rl_convolve(alpha: float, series, grid: TimeGrid, singular_exponent: float | None = None) -> np.ndarray:
    """Product-integration values of ``(k^{1-alpha} * v)(t_n)`` for all n.

    ``k^{1-alpha}(s) = s^(alpha-1)/Gamma(alpha)``; ``v`` is interpolated
    linearly between nodes. With ``singular_exponent = sigma`` the first panel
    is instead integrated exactly against ``v_1 (s/t_1)^(-sigma)``, which
    suits data that blow up like ``s^(-sigma)`` at the origin (``v_0`` is
    then ignored). Entry 0 is 0. For ``alpha = 1`` this is the trapezoid rule.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    v = np.asarray(series, dtype=float)
    t = grid.nodes
    out = np.zeros(v.shape)
    for n in range(1, grid.N + 1):
        left, right = _rl_hat_weights(t, n, alpha)
        if singular_exponent is None:
            out[n] = np.tensordot(left, v[:n], axes=(0, 0)) + np.tensordot(right, v[1 : n + 1], axes=(0, 0))
        else:
            sig = float(singular_exponent)
            rest = np.tensordot(left[1:], v[1:n], axes=(0, 0)) + np.tensordot(right[1:], v[2 : n + 1], axes=(0, 0))
            # int_0^{t1} (t_n - s)^(a-1) s^(-sig) ds = t_n^(a-sig) B(1-sig, a) I_{t1/t_n}(1-sig, a)
            tn, t1 = t[n], t[1]
            first = tn ** (alpha - sig) * special.beta(1.0 - sig, alpha) * special.betainc(1.0 - sig, alpha, t1 / tn)
            out[n] = rest + v[1] * t1**sig * first / math.gamma(alpha)
    return out


def coercivity_check(weights: CaputoWeights, history, tol: float = 1e-12) -> tuple[np.ndarray, bool]:
    """Margins ``m_n = v_n (D v)_n - 0.5 (D v^2)_n`` for n = 1..N and pass flag."""
    v = np.asarray(history, dtype=float)
    dv = caputo_series(weights, v)[1:]
    dv2 = caputo_series(weights, v**2)[1:]
    margins = v[1:] * dv - 0.5 * dv2
    return margins, bool(np.all(margins >= -tol))


def max_principle_check(weights: CaputoWeights, history, tol: float = 1e-10) -> bool:
    """Discrete Caputo value is >= -tol at the (latest) argmax node, if n >= 1."""
    v = np.asarray(history, dtype=float)
    top = np.max(v)
    n = int(np.nonzero(v == top)[0][-1])
    if n == 0:
        return True
    return bool(caputo_apply(weights, v, n) >= -tol)


# ---------------------------------------------------------------------------
# sum-of-exponentials history


@dataclass
class SOEKernel:
    """``s^(-alpha)/Gamma(1-alpha) ~ sum_i w_i exp(-lam_i s)`` on [delta, T]."""

    alpha: float
    lam: np.ndarray
    w: np.ndarray
    max_rel_error: float
    delta: float
    T: float

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.exp(-np.multiply.outer(s, self.lam)) @ self.w

    @property
    def size(self) -> int:
        return self.lam.size


def soe_kernel(alpha: float, delta: float, T: float, tol: float = 1e-8) -> SOEKernel:
    """Sum-of-exponentials fit of the Caputo kernel by trapezoidal quadrature.

    Uses ``s^(-alpha) = (1/Gamma(alpha)) int exp(-s e^y + alpha y) dy`` and
    halves the step in ``y`` until the relative error on a dense log grid of
    [delta, T] is below ``tol``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("sum-of-exponentials is only used for alpha in (0, 1)")
    norm = 1.0 / (math.gamma(alpha) * math.gamma(1.0 - alpha))
    eps = tol * 1e-2
    y_hi = math.log((math.log(1.0 / eps) + 10.0) / delta)
    y_lo = math.log(eps * alpha * math.gamma(alpha) * T ** (-alpha)) / alpha
    s_test = np.geomspace(delta, T, 2000)
    exact = s_test ** (-alpha) / math.gamma(1.0 - alpha)
    h = 1.0
    for _ in range(12):
        y = np.arange(y_lo, y_hi + h, h)
        lam = np.exp(y)
        w = norm * h * np.exp(alpha * y)
        approx = np.exp(-np.multiply.outer(s_test, lam)) @ w
        err = float(np.max(np.abs(approx / exact - 1.0)))
        if err <= tol:
            return SOEKernel(alpha, lam, w, err, delta, T)
        h *= 0.5
    raise RuntimeError(f"sum-of-exponentials did not reach {tol} (best {err:.2e})")


class DirectHistory:
    """Naive O(n) evaluation of the L1 memory term ``sum_{j<n} a_{n,j} dv_j``."""

    def __init__(self, weights: CaputoWeights, shape):
        self.weights = weights
        self.increments = np.zeros((weights.grid.N,) + tuple(np.atleast_1d(shape)))
        self.count = 0

    def memory(self, n: int) -> np.ndarray:
        if n == 1:
            return np.zeros(self.increments.shape[1:])
        return np.tensordot(self.weights.row(n)[:-1], self.increments[: n - 1], axes=(0, 0))

    def push(self, dv) -> None:
        self.increments[self.count] = dv
        self.count += 1


class SOEHistory:
    """Same interface as :class:`DirectHistory` with a recursive SOE memory.

    The local panel keeps its exact L1 weight; older panels use the kernel
    approximation, updated in O(#exponentials) work per step.
    """

    def __init__(self, weights: CaputoWeights, shape, tol: float = 1e-8):
        self.weights = weights
        t = weights.grid.nodes
        self.t = t
        self.kernel = soe_kernel(weights.alpha, float(np.min(np.diff(t))), float(t[-1]), tol)
        self.state = np.zeros((self.kernel.size,) + tuple(np.atleast_1d(shape)))
        self.last = np.zeros(tuple(np.atleast_1d(shape)))
        self.count = 0

    def memory(self, n: int) -> np.ndarray:
        if n == 1:
            return np.zeros(self.state.shape[1:])
        lam = self.kernel.lam
        tau_n = self.t[n] - self.t[n - 1]
        tau_p = self.t[n - 1] - self.t[n - 2]
        decay = np.exp(-lam * tau_n)
        # int_{t_{n-2}}^{t_{n-1}} exp(-lam (t_n - s)) ds / tau_{n-1}
        panel = decay * (-np.expm1(-lam * tau_p)) / (lam * tau_p)
        expand = (slice(None),) + (None,) * (self.state.ndim - 1)
        self.state = decay[expand] * self.state + panel[expand] * self.last[None]
        return np.tensordot(self.kernel.w, self.state, axes=(0, 0))

    def push(self, dv) -> None:
        self.last = np.asarray(dv, dtype=float).copy()
        self.count += 1


def make_history(weights: CaputoWeights, shape, method: str = "direct", tol: float = 1e-8):
    if method == "direct" or weights.alpha == 1.0:
        return DirectHistory(weights, shape)
    if method == "soe":
        return SOEHistory(weights, shape, tol)
    raise ValueError(f"unknown history method {method!r}")

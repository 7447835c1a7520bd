"""Steady state ``A u = q u - p f(u) + r_inf`` by damped Newton iteration."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .model import Problem
from .space import norm_L2

logger = logging.getLogger(__name__)

RTOL = 1e-10
ATOL = 1e-12
MAX_ITER = 50
MAX_HALVINGS = 8


class SolverError(RuntimeError):
    pass


class NewtonDivergence(SolverError):
    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class Stagnation(NewtonDivergence):
    pass


class SingularJacobian(SolverError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


@dataclass
class SteadyResult:
    u: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)
    converged: bool = True
    method: str = "newton"


def _residual_norm(problem: Problem, u) -> float:
    return float(norm_L2(problem.steady_residual(u), problem.grid))


def _jacobian_shift(problem: Problem, u) -> np.ndarray:
    return problem.p * problem.nl.df(u) - problem.q


def _solve_linearized(problem: Problem, u, rhs) -> np.ndarray:
    shift = _jacobian_shift(problem, u)
    try:
        with np.errstate(all="raise"):
            return problem.A.solve(rhs, shift=shift)
    except (linalg.LinAlgError, FloatingPointError, ValueError):
        diag = problem.A.diag + shift
        node = int(np.argmin(np.abs(np.where(problem.A.free, diag, np.inf))))
        raise SingularJacobian(
            f"singular Jacobian; p f'(u) - q + diagonal degenerates near node {node}", node=node
        ) from None


def newton_step(current: np.ndarray, problem: Problem, residual_norm: float | None = None) -> tuple[np.ndarray, float]:
    """One damped Newton step; returns (new iterate, new residual norm).

    The full step is halved until the L2 residual decreases. Raises
    :class:`Stagnation` after ``MAX_HALVINGS`` halvings.
    """
    r0 = _residual_norm(problem, current) if residual_norm is None else residual_norm
    if r0 == 0.0:
        return current.copy(), 0.0
    res = problem.steady_residual(current)
    delta = _solve_linearized(problem, current, -res)
    lam = 1.0
    for _ in range(MAX_HALVINGS + 1):
        trial = current + lam * delta
        r1 = _residual_norm(problem, trial)
        if r1 < r0:
            return trial, r1
        lam *= 0.5
    raise Stagnation("line search exhausted", best=current, residual=r0)


def default_guess(problem: Problem) -> np.ndarray:
    """Solution of the linear problem with ``f`` frozen at zero (or a zero field)."""
    u = np.zeros(problem.grid.nx)
    bc = problem.bc
    if bc.dirichlet:
        u[0], u[-1] = bc.left, bc.right
    rhs = problem.r_inf + problem.A.b - problem.A.matvec(u)
    try:
        v = problem.A.solve(rhs, shift=-problem.q)
    except (linalg.LinAlgError, ValueError):
        return u
    if not np.all(np.isfinite(v)):
        return u
    return u + v


def solve_steady(problem: Problem, guess=None, rtol: float = RTOL, atol: float = ATOL,
                 max_iter: int = MAX_ITER, method: str = "newton") -> SteadyResult:
    """Solve the steady problem.

    Parameters
    ----------
    problem : Problem
        The steady data are ``A``, ``p``, ``q``, ``f`` and ``r_inf``.
    guess : array, optional
        Initial iterate; defaults to :func:`default_guess`.
    rtol, atol : float
        Stop when ``||residual||_L2 <= rtol ||r_inf||_L2 + atol``.
    method : {"newton", "monotone"}
        ``"monotone"`` runs a shifted fixed-point iteration, which is slower
        but robust when Newton stalls on stiff reactions.

    Raises
    ------
    NewtonDivergence
        No convergence within ``max_iter`` iterations or a stalled line search;
        ``best`` carries the best iterate.
    SingularJacobian
        The linearization cannot be inverted; ``node`` locates the problem.
    """
    u = default_guess(problem) if guess is None else np.array(guess, dtype=float)
    bc = problem.bc
    if bc.dirichlet:
        u[0], u[-1] = bc.left, bc.right
    target = rtol * float(norm_L2(problem.r_inf, problem.grid)) + atol
    res = _residual_norm(problem, u)
    history = [res]
    if method == "monotone":
        return _monotone(problem, u, target, max_iter * 20, history)
    if method != "newton":
        raise ValueError(f"unknown method {method!r}")
    for it in range(1, max_iter + 1):
        if res <= target:
            return SteadyResult(u, it - 1, history)
        try:
            u, res = newton_step(u, problem, res)
        except Stagnation as exc:
            if exc.residual is not None and exc.residual <= 10.0 * target:
                # stalled at round-off level just above the target
                return SteadyResult(u, it, history)
            raise NewtonDivergence(f"Newton stagnated at iteration {it} (residual {res:.3e})",
                                   best=u, residual=res) from None
        history.append(res)
        logger.debug("newton iteration %d residual %.3e", it, res)
    if res <= target:
        return SteadyResult(u, max_iter, history)
    raise NewtonDivergence(f"no convergence in {max_iter} iterations (residual {res:.3e})", best=u, residual=res)


def _monotone(problem: Problem, u, target, max_iter, history) -> SteadyResult:
    """Fixed-point iteration ``(A + sigma - q) u+ = sigma u - p f(u) + r_inf + b``."""
    for it in range(1, max_iter + 1):
        sigma = float(np.max(np.abs(problem.p * problem.nl.df(u)))) + 1.0
        rhs = sigma * u - problem.p * problem.nl.f(u) + problem.r_inf + problem.A.b
        shift = sigma - problem.q
        new = u.copy()
        free = problem.A.free
        lift = problem.A.matvec(np.where(free, 0.0, u))
        new[free] = problem.A.solve(rhs - lift, shift=shift)[free]
        u = new
        res = _residual_norm(problem, u)
        history.append(res)
        if res <= target:
            return SteadyResult(u, it, history, method="monotone")
    raise NewtonDivergence(f"monotone iteration did not converge in {max_iter} iterations", best=u, residual=history[-1])


def smallest_jacobian_eigenvalue(problem: Problem, u, iters: int = 200, tol: float = 1e-10) -> float:
    """Smallest eigenvalue of ``A + diag(p f'(u) - q)`` on free nodes by inverse iteration.

    The Jacobian is self-adjoint in the trapezoid inner product, so the
    Rayleigh quotient is formed with the grid weights.
    """
    shift = _jacobian_shift(problem, u)
    free = problem.A.free
    w = problem.grid.weights
    rng = np.random.default_rng(0)
    v = np.where(free, rng.random(problem.grid.nx) + 0.5, 0.0)
    lam_old = math.inf
    lam = lam_old
    for _ in range(iters):
        v = v / math.sqrt(float((v * v) @ w))
        y = problem.A.solve(v, shift=shift)
        lam = float((v * v) @ w) / float((v * y) @ w)
        v = y
        if abs(lam - lam_old) <= tol * abs(lam):
            break
        lam_old = lam
    return lam

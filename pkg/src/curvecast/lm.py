"""A small Levenberg-Marquardt solver with optional projection onto bounds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

INITIAL_DAMPING = 1e-3
DAMPING_UP = 10.0
DAMPING_DOWN = 10.0
MAX_ITER = 200
GRAD_TOL = 1e-10
STEP_TOL = 1e-15
MAX_DAMPING = 1e16


@dataclass
class LMResult:
    x: np.ndarray
    cost: float  # 0.5 * ||r||^2
    iterations: int
    converged: bool
    reason: str


def levenberg_marquardt(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    project: Callable[[np.ndarray], np.ndarray] | None = None,
    max_iter: int = MAX_ITER,
    grad_tol: float = GRAD_TOL,
) -> LMResult:
    """Minimise ``0.5 * ||residual(x)||^2``.

    Damped normal equations ``(J^T J + lam * diag(J^T J)) dx = -J^T r``, with
    ``lam`` starting at 1e-3 and moved by a factor 10 on rejected/accepted
    steps. ``project`` maps a trial point back into the feasible set. Only
    steps that strictly decrease the cost are accepted, so the returned cost
    never exceeds the cost at ``x0``.
    """
    proj = project or (lambda v: v)
    x = proj(np.asarray(x0, dtype=float).copy())
    r = residual(x)
    cost = 0.5 * float(r @ r)
    if not np.isfinite(cost):
        return LMResult(x, np.inf, 0, False, "non-finite start")
    lam = INITIAL_DAMPING
    J = jacobian(x)
    for it in range(1, max_iter + 1):
        g = J.T @ r
        if not np.all(np.isfinite(g)):
            return LMResult(x, cost, it, False, "non-finite gradient")
        if np.max(np.abs(g)) < grad_tol:
            return LMResult(x, cost, it, True, "gradient")
        H = J.T @ J
        diag = np.maximum(np.diag(H), 1e-12)
        while True:
            try:
                step = np.linalg.solve(H + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                x_new = proj(x + step)
                r_new = residual(x_new)
                with np.errstate(over="ignore", invalid="ignore"):
                    cost_new = 0.5 * float(r_new @ r_new)
                if np.isfinite(cost_new) and cost_new < cost:
                    moved = np.max(np.abs(x_new - x) / (np.abs(x) + 1e-12))
                    improvement = cost - cost_new
                    x, r, cost = x_new, r_new, cost_new
                    lam = max(lam / DAMPING_DOWN, 1e-12)
                    J = jacobian(x)
                    if moved < STEP_TOL or improvement <= STEP_TOL * max(cost, 1e-300):
                        return LMResult(x, cost, it, True, "stalled step")
                    break
            lam *= DAMPING_UP
            if lam > MAX_DAMPING:
                # no descent direction left at this point: a local minimum
                return LMResult(x, cost, it, True, "damping limit")
    return LMResult(x, cost, max_iter, False, "max iterations")

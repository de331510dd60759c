"""Damped least-squares solver with analytic Jacobians.

Levenberg-Marquardt with additive parameter updates: steps are accepted only
when they reduce the sum of squared residuals, so the recorded cost history
is non-increasing by construction. Tolerances follow the calibration
contract (gradient and step tolerance 1e-12, at most 200 iterations).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class LeastSquaresResult:
    x: np.ndarray
    cost: float
    cost_history: list[float]
    iterations: int
    converged: bool
    jacobian: np.ndarray


def levenberg_marquardt(residual, jacobian, x0, max_iter: int = 200,
                        gtol: float = 1e-12, xtol: float = 1e-12,
                        lam0: float = 1e-3) -> LeastSquaresResult:
    """Minimize sum(residual(x)**2) starting from x0.

    ``residual`` maps (p,) -> (m,), ``jacobian`` maps (p,) -> (m, p).
    Returns the best point found even when tolerances were not reached;
    callers decide whether non-convergence is an error.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = residual(x)
    cost = float(r @ r)
    history = [cost]
    lam = lam0
    converged = False
    j = jacobian(x)
    iterations = 0

    for iterations in range(1, max_iter + 1):
        g = 2.0 * j.T @ r
        if np.max(np.abs(g)) <= gtol:
            converged = True
            break
        jtj = j.T @ j
        accepted = False
        for _ in range(60):
            try:
                step = np.linalg.solve(jtj + lam * np.eye(len(x)), -(j.T @ r))
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_trial = x + step
            r_trial = residual(x_trial)
            cost_trial = float(r_trial @ r_trial)
            if cost_trial < cost:
                x, r, cost = x_trial, r_trial, cost_trial
                lam = max(lam / 10.0, 1e-15)
                accepted = True
                history.append(cost)
                break
            lam *= 10.0
        if not accepted:
            converged = True  # no descent step exists at damping limit
            break
        j = jacobian(x)
        if np.linalg.norm(step) <= xtol * (1.0 + np.linalg.norm(x)):
            converged = True
            break

    return LeastSquaresResult(x, cost, history, iterations, converged, j)

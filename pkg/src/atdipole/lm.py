"""Damped least squares (Levenberg-Marquardt) with a forward-difference Jacobian."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ConvergenceError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class LMResult:
    x: np.ndarray
    residuals: np.ndarray
    jac: np.ndarray
    cost: float
    n_iter: int
    n_eval: int
    converged: bool
    message: str
    trace: list

    def covariance(self, scale: float = 1.0) -> np.ndarray:
        """(J^T J)^-1 times ``scale``; pseudo-inverse when singular."""
        jtj = self.jac.T @ self.jac
        try:
            cov = np.linalg.inv(jtj)
            if not np.all(np.isfinite(cov)) or np.any(np.diag(cov) < 0):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            cov = np.linalg.pinv(jtj, rcond=1e-15)
        return cov * scale


def numeric_jacobian(fun, x, f0, rel_step=1e-6):
    J = np.empty((f0.size, x.size))
    for i in range(x.size):
        h = rel_step * max(abs(x[i]), 1.0)
        xp = x.copy()
        xp[i] += h
        J[:, i] = (fun(xp) - f0) / h
    return J


def levenberg_marquardt(
    fun,
    x0,
    *,
    rel_step: float = 1e-6,
    ftol: float = 1e-10,
    xtol: float = 1e-8,
    max_iter: int = 200,
    lam0: float = 1e-3,
    max_step=None,
) -> LMResult:
    """Minimize 0.5 * |fun(x)|^2.

    Stops when an accepted step lowers the cost by less than ``ftol``
    relative, or when the step norm falls below ``xtol`` relative to |x|.
    ``max_step`` (scalar or per-parameter) caps each component of a trial
    step, which keeps weakly constrained parameters from being thrown far
    away by the diagonal scaling.
    """
    x = np.array(x0, dtype=float)
    r = np.asarray(fun(x), dtype=float)
    n_eval = 1
    cost = 0.5 * float(r @ r)
    if not np.isfinite(cost):
        raise ConvergenceError("initial residuals are not finite")
    lam, nu = lam0, 2.0
    cap = None if max_step is None else np.broadcast_to(np.asarray(max_step, float), x.shape)
    J = numeric_jacobian(fun, x, r, rel_step)
    n_eval += x.size
    trace = [cost]
    message = "iteration cap reached"
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        if cost == 0.0:
            converged, message = True, "zero residual"
            break
        A = J.T @ J
        g = J.T @ r
        d = np.diag(A).copy()
        d[d <= 0] = 1e-30
        try:
            step = np.linalg.solve(A + lam * np.diag(d), -g)
        except np.linalg.LinAlgError:
            lam *= nu
            nu *= 2
            continue
        if max_step is not None:
            ratio = np.max(np.abs(step) / cap)
            if ratio > 1:
                step = step / ratio
        x_new = x + step
        r_new = np.asarray(fun(x_new), dtype=float)
        n_eval += 1
        cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
        predicted = -(step @ g) - 0.5 * step @ A @ step
        small_step = np.linalg.norm(step) < xtol * (np.linalg.norm(x) + xtol)
        if cost_new < cost:
            rho = (cost - cost_new) / predicted if predicted > 0 else 1.0
            rel_drop = (cost - cost_new) / cost
            x, r, cost = x_new, r_new, cost_new
            trace.append(cost)
            lam *= max(1 / 3, 1 - (2 * rho - 1) ** 3)
            nu = 2.0
            J = numeric_jacobian(fun, x, r, rel_step)
            n_eval += x.size
            if rel_drop < ftol:
                converged, message = True, "relative cost decrease below tolerance"
                break
            if small_step:
                converged, message = True, "step norm below tolerance"
                break
        else:
            if small_step:
                converged, message = True, "step norm below tolerance"
                break
            lam *= nu
            nu *= 2
            if lam > 1e16:
                converged, message = True, "no further decrease possible"
                break
    return LMResult(x, r, J, cost, it, n_eval, converged, message, trace)

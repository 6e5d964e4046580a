"""BFGS with a step-halving line search.

Infeasible trial points (objective ``inf``, e.g. a non-positive-definite
implied covariance) are treated like failed Armijo checks: the step is
halved, at most ``max_halvings`` times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OptimResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    converged: bool
    message: str

    @property
    def grad_norm(self) -> float:
        return float(np.max(np.abs(self.grad))) if len(self.grad) else 0.0


def _line_search(fun, grad, x, f, g, d, slope, max_halvings, armijo):
    """Step halving from a unit step.

    A step is taken on a sufficient (Armijo) decrease of ``fun``. Once the
    change in ``fun`` is at rounding level that test is meaningless, and a
    step that keeps ``fun`` within noise is taken if it shrinks the gradient.
    Infeasible points count as failures.
    """
    noise = 1e-13 * max(1.0, abs(f))
    gmax = float(np.max(np.abs(g)))
    alpha = 1.0
    for _ in range(max_halvings + 1):
        x_new = x + alpha * d
        f_new = fun(x_new)
        if math.isfinite(f_new):
            if f_new <= f + armijo * alpha * slope and f - f_new > noise:
                return x_new, f_new, True
            if f_new <= f + noise and float(np.max(np.abs(grad(x_new)))) < gmax:
                return x_new, f_new, True
        alpha *= 0.5
    return x, f, False


def _fd_hessian(grad, x, rel_step=1e-5):
    k = len(x)
    H = np.empty((k, k))
    for i in range(k):
        h = rel_step * max(1.0, abs(x[i]))
        e = np.zeros(k)
        e[i] = h
        H[:, i] = (grad(x + e) - grad(x - e)) / (2 * h)
    return (H + H.T) / 2.0


def bfgs(fun, grad, x0, gtol: float = 1e-8, max_iter: int = 500,
         max_halvings: int = 30, armijo: float = 1e-4) -> OptimResult:
    x = np.array(x0, dtype=float)
    f = fun(x)
    if not math.isfinite(f):
        return OptimResult(x, f, np.full(len(x), np.nan), 0, False, "infeasible start values")
    g = grad(x)
    k = len(x)
    H = np.eye(k)
    fresh = True
    for it in range(1, max_iter + 1):
        if np.max(np.abs(g), initial=0.0) < gtol:
            return OptimResult(x, f, g, it - 1, True, "gradient tolerance reached")
        d = -H @ g
        slope = float(g @ d)
        if not slope < 0:
            H = np.eye(k)
            fresh = True
            d = -g
            slope = float(g @ d)
        if fresh:
            # keep the first trial step of an unscaled direction modest
            d = d / max(1.0, float(np.linalg.norm(d)))
            slope = float(g @ d)
        x_new, f_new, accepted = _line_search(fun, grad, x, f, g, d, slope, max_halvings, armijo)
        if not accepted:
            if not fresh:
                H = np.eye(k)
                fresh = True
                continue
            # last resort near the optimum: a Newton step on a
            # finite-difference Hessian of the gradient
            d = -np.linalg.lstsq(_fd_hessian(grad, x), g, rcond=None)[0]
            x_new, f_new, accepted = _line_search(fun, grad, x, f, g, d, float(g @ d),
                                                  max_halvings, armijo)
            if not accepted:
                return OptimResult(x, f, g, it, False, "line search failed after step halving")
        g_new = grad(x_new)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-16 * float(np.linalg.norm(s)) * float(np.linalg.norm(y)) and sy > 0:
            if fresh:
                H = np.eye(k) * (sy / float(y @ y))
            rho = 1.0 / sy
            Hy = H @ y
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * float(y @ Hy) + rho) * np.outer(s, s)
            fresh = False
        x, f, g = x_new, f_new, g_new
    if np.max(np.abs(g), initial=0.0) < gtol:
        return OptimResult(x, f, g, max_iter, True, "gradient tolerance reached")
    return OptimResult(x, f, g, max_iter, False, f"no convergence in {max_iter} iterations")

"""Maximum-likelihood discrepancy and its gradient in RAM parameters."""

from __future__ import annotations

import math

import numpy as np

from .ram import RamSystem


def _logdet_pd(M: np.ndarray):
    """``(log det M, inverse)`` for positive definite M, else ``None``."""
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return None
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    Linv = np.linalg.inv(L)
    return logdet, Linv.T @ Linv


def ml_fit_value(S: np.ndarray, Sigma: np.ndarray) -> float:
    """``ln|Sigma| - ln|S| + tr(S Sigma^-1) - p``; ``inf`` if Sigma is not PD."""
    S = np.asarray(S, dtype=float)
    Sigma = np.asarray(Sigma, dtype=float)
    sig = _logdet_pd(Sigma)
    if sig is None:
        return math.inf
    ld_sig, sig_inv = sig
    sign, ld_s = np.linalg.slogdet(S)
    if sign <= 0:
        raise ValueError("sample covariance is not positive definite")
    return ld_sig - ld_s + float(np.sum(S * sig_inv)) - S.shape[0]


class Discrepancy:
    """ML discrepancy of a RAM system against a fixed sample covariance."""

    def __init__(self, ram: RamSystem, S: np.ndarray):
        self.ram = ram
        self.S = np.asarray(S, dtype=float)
        sign, self._ld_s = np.linalg.slogdet(self.S)
        if sign <= 0:
            raise ValueError("sample covariance is not positive definite")
        self.p = self.S.shape[0]
        m = len(ram.variables)
        self._eye = np.eye(m)
        self._a_cells = [(np.array([c[0] for c in q.cells]), np.array([c[1] for c in q.cells]))
                         for q in ram.params]
        self._is_a = np.array([q.matrix == "A" for q in ram.params], dtype=bool)

    def _parts(self, theta):
        A, Smat = self.ram.matrices(theta)
        B = np.linalg.solve(self._eye - A, self._eye)
        C = B @ Smat @ B.T
        C = (C + C.T) / 2.0
        p = self.p
        return B, C, C[:p, :p]

    def value(self, theta) -> float:
        _, _, Sigma = self._parts(theta)
        sig = _logdet_pd(Sigma)
        if sig is None:
            return math.inf
        ld_sig, sig_inv = sig
        return ld_sig - self._ld_s + float(np.sum(self.S * sig_inv)) - self.p

    def gradient(self, theta) -> np.ndarray:
        """Analytic gradient.

        With W = Sigma^-1 (Sigma - S) Sigma^-1 padded to all variables, the
        derivative is 2 (B^T W C) for A cells and B^T W B per S cell.
        """
        B, C, Sigma = self._parts(theta)
        sig = _logdet_pd(Sigma)
        if sig is None:
            return np.full(len(theta), np.nan)
        sig_inv = sig[1]
        W_m = sig_inv @ (Sigma - self.S) @ sig_inv
        m = len(C)
        W = np.zeros((m, m))
        W[: self.p, : self.p] = W_m
        BtW = B.T @ W
        gA = 2.0 * BtW @ C
        gS = BtW @ B
        g = np.empty(len(theta))
        for k, (rows, cols) in enumerate(self._a_cells):
            g[k] = (gA if self._is_a[k] else gS)[rows, cols].sum()
        return g

    def numerical_hessian(self, theta, rel_step: float = 1e-5, scale=None) -> np.ndarray:
        """Central differences of the analytic gradient, symmetrized.

        ``scale`` gives each parameter's natural unit; steps are
        ``rel_step * max(scale, |theta|)`` (unit scale by default).
        """
        theta = np.asarray(theta, dtype=float)
        k = len(theta)
        scale = np.ones(k) if scale is None else np.asarray(scale, dtype=float)
        H = np.empty((k, k))
        for i in range(k):
            h = rel_step * max(scale[i], abs(theta[i]))
            e = np.zeros(k)
            e[i] = h
            H[:, i] = (self.gradient(theta + e) - self.gradient(theta - e)) / (2 * h)
        return (H + H.T) / 2.0

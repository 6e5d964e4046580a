"""Central and noncentral chi-square CDFs.

The noncentral CDF is the Poisson mixture of central CDFs,

    P(X <= x) = sum_j Pois(j; lambda/2) * P(chi2_{df + 2j} <= x),

summed over the Poisson window holding all but ~1e-15 of the mass, so the
absolute truncation error stays far below 1e-9.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammainc, gammaincc, gammaln
from scipy.stats import poisson

_TAIL = 1e-16


def chisq_cdf(x: float, df: float) -> float:
    if x <= 0:
        return 0.0
    return float(gammainc(df / 2.0, x / 2.0))


def chisq_sf(x: float, df: float) -> float:
    if x <= 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def noncentral_chisq_cdf(x: float, df: float, lam: float) -> float:
    if df <= 0:
        raise ValueError("df must be positive")
    if lam < 0:
        raise ValueError("noncentrality must be >= 0")
    if x <= 0:
        return 0.0
    mu = lam / 2.0
    if mu == 0:  # also catches subnormal lambda underflowing here
        return chisq_cdf(x, df)
    lo = max(0, int(poisson.ppf(_TAIL, mu)) - 1)
    hi = int(poisson.isf(_TAIL, mu)) + 2
    j = np.arange(lo, hi + 1, dtype=float)
    log_w = -mu + j * math.log(mu) - gammaln(j + 1.0)
    terms = np.exp(log_w) * gammainc(df / 2.0 + j, x / 2.0)
    return float(min(1.0, max(0.0, np.sum(terms))))


def solve_noncentrality(x: float, df: float, target: float) -> float:
    """Smallest lambda >= 0 with ``CDF(x; df, lambda) <= target``.

    The CDF is nonincreasing in lambda, so this is 0 when the central CDF is
    already at or below ``target``.
    """
    f = lambda lam: noncentral_chisq_cdf(x, df, lam) - target  # noqa: E731
    if f(0.0) <= 0:
        return 0.0
    hi = max(1.0, x)
    while f(hi) > 0:
        hi *= 2.0
    return float(brentq(f, 0.0, hi, xtol=1e-10, rtol=1e-12))

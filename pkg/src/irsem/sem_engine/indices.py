"""Global fit indices for an ML fit: chi-square, RMSEA with CI and close-fit
p-value, CFI, TLI, SRMR, AIC and BIC."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import SpecificationError
from .noncentral import chisq_sf, noncentral_chisq_cdf, solve_noncentrality


@dataclass(frozen=True)
class Rmsea:
    point: float
    lo90: float
    hi90: float
    p_close: float | None


@dataclass(frozen=True)
class FitIndices:
    chisq: float
    df: int
    p_exact: float
    rmsea: Rmsea
    cfi: float
    tli: float | None
    srmr: float
    aic: float
    bic: float
    baseline_chisq: float
    baseline_df: int
    saturated: bool

    def as_dict(self):
        d = asdict(self)
        d["baseline"] = {"chisq": d.pop("baseline_chisq"), "df": d.pop("baseline_df")}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        base = d.pop("baseline")
        d["rmsea"] = Rmsea(**d["rmsea"])
        return cls(baseline_chisq=base["chisq"], baseline_df=base["df"], **d)


def rmsea(chisq: float, df: int, n: int, close: float = 0.05) -> Rmsea:
    """RMSEA point estimate, 90% CI from noncentrality bounds, close-fit p."""
    if df <= 0:
        return Rmsea(0.0, 0.0, 0.0, None)
    scale = df * (n - 1)
    point = math.sqrt(max(chisq - df, 0.0) / scale)
    lam_lo = solve_noncentrality(chisq, df, 0.95)
    lam_hi = solve_noncentrality(chisq, df, 0.05)
    lo = math.sqrt(lam_lo / scale)
    hi = math.sqrt(lam_hi / scale)
    lam0 = close * close * scale
    p_close = 1.0 - noncentral_chisq_cdf(chisq, df, lam0)
    return Rmsea(point, lo, hi, min(1.0, max(0.0, p_close)))


def srmr(S: np.ndarray, Sigma: np.ndarray) -> float:
    """Root mean square of (s_ij - sigma_ij) / sqrt(s_ii s_jj), lower triangle."""
    sd = np.sqrt(np.diag(S))
    resid = (S - Sigma) / np.outer(sd, sd)
    rows, cols = np.tril_indices(len(S))
    return float(math.sqrt(np.mean(resid[rows, cols] ** 2)))


def baseline_chisq(S: np.ndarray, n: int) -> tuple[float, int]:
    """Independence model: free variances, all covariances zero."""
    p = len(S)
    _, ld = np.linalg.slogdet(S)
    f = float(np.sum(np.log(np.diag(S))) - ld)
    return (n - 1) * max(f, 0.0), p * (p - 1) // 2


def fit_indices(fmin: float, S: np.ndarray, Sigma: np.ndarray, n: int, n_free: int) -> FitIndices:
    p = len(S)
    df = p * (p + 1) // 2 - n_free
    chisq = (n - 1) * max(fmin, 0.0)
    chisq_b, df_b = baseline_chisq(S, n)
    if df_b <= df:
        raise SpecificationError(
            f"baseline model df ({df_b}) must exceed model df ({df}); "
            "the model is no more constrained than the independence model")
    saturated = df == 0
    p_exact = 1.0 if saturated else chisq_sf(chisq, df)
    num = max(chisq - df, 0.0)
    den = max(chisq - df, chisq_b - df_b, 0.0)
    cfi = 1.0 if den == 0 else 1.0 - num / den
    if df > 0 and df_b > 0 and chisq_b / df_b != 1.0:
        tli = ((chisq_b / df_b) - (chisq / df)) / ((chisq_b / df_b) - 1.0)
    else:
        tli = None
    return FitIndices(
        chisq=chisq, df=df, p_exact=p_exact, rmsea=rmsea(chisq, df, n), cfi=cfi, tli=tli,
        srmr=srmr(S, Sigma), aic=chisq + 2 * n_free, bic=chisq + n_free * math.log(n),
        baseline_chisq=chisq_b, baseline_df=df_b, saturated=saturated,
    )

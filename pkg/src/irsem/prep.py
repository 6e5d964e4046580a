"""Data preparation: transforms, outliers, moments, collinearity, rescaling,
and the exploratory PCA / principal-axis factor diagnostics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.stats import norm

from .corpus_io import CovInput, VariableMatrix, covariance
from .errors import PrepError

log = logging.getLogger(__name__)

LOG_SHIFT_FORMULA = "log(x - min(x) + 1)"


def log_shift(m: VariableMatrix, targets: Iterable[str]) -> VariableMatrix:
    """Replace each target column x by ``log(x - min(x) + 1)``.

    The shift uses the column's own minimum, so the transformed minimum is
    exactly zero and the logarithm argument is never below one.
    """
    targets = list(targets)
    missing = [t for t in targets if t not in m.names]
    if missing:
        raise KeyError(f"log_shift targets not in matrix: {missing}")
    updates = {}
    for name in targets:
        x = m.column(name)
        updates[name] = np.log(x - x.min() + 1.0)
    return m.replace(updates)


def outliers_to_mean(m: VariableMatrix, z_threshold: float = 3.0,
                     columns: Iterable[str] | None = None):
    """Map values farther than ``z_threshold`` sample sd from the mean to the mean.

    One pass; mean and sd (divisor n-1) are computed before any replacement.

    Returns
    -------
    (VariableMatrix, dict)
        The cleaned matrix and the number of replaced values per column.
    """
    if z_threshold <= 0:
        raise ValueError("z_threshold must be positive")
    if m.n < 2:
        raise PrepError("outlier detection needs at least 2 rows")
    cols = list(m.names if columns is None else columns)
    counts = {}
    updates = {}
    for name in cols:
        x = m.column(name)
        mu = x.mean()
        sd = x.std(ddof=1)
        if sd == 0:
            counts[name] = 0
            continue
        hit = np.abs(x - mu) > z_threshold * sd
        counts[name] = int(hit.sum())
        if counts[name]:
            updates[name] = np.where(hit, mu, x)
    return m.replace(updates), counts


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    skewness: float | None
    kurtosis: float | None  # excess


def moments(m: VariableMatrix) -> dict[str, Moments]:
    """Mean, variance (n-1), skewness and excess kurtosis per column.

    Shape statistics use central moments with divisor n and are ``None``
    for constant columns.
    """
    if m.n < 2:
        raise PrepError("moments need at least 2 rows")
    out = {}
    for j, name in enumerate(m.names):
        x = m.data[:, j]
        mu = x.mean()
        d = x - mu
        m2 = np.mean(d**2)
        if m2 > 0:
            skew = float(np.mean(d**3) / m2**1.5)
            kurt = float(np.mean(d**4) / m2**2 - 3.0)
        else:
            skew = kurt = None
        out[name] = Moments(float(mu), float(x.var(ddof=1)), skew, kurt)
    return out


def qq_points(x) -> tuple[np.ndarray, np.ndarray]:
    """Theoretical normal quantiles against sorted standardized data."""
    x = np.sort(np.asarray(x, dtype=float))
    n = len(x)
    theo = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    sd = x.std(ddof=1)
    sample = (x - x.mean()) / sd if sd > 0 else np.zeros(n)
    return theo, sample


# ---------------------------------------------------------------------------
# collinearity


@dataclass(frozen=True)
class CollinearityReport:
    threshold: float
    components: tuple  # tuple of tuples of names
    kept: tuple
    ignored: tuple

    def as_dict(self):
        return {
            "threshold": self.threshold,
            "components": [list(c) for c in self.components],
            "kept": list(self.kept),
            "ignored": list(self.ignored),
        }


def read_keep_list(src) -> list[str]:
    """One variable name per line; ``#`` starts a comment."""
    lines = src.splitlines() if isinstance(src, str) else src
    out = []
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line)
    return out


def _corr_and_var(data) -> tuple[tuple, np.ndarray, np.ndarray]:
    if isinstance(data, CovInput):
        cov = data.cov
        names = data.names
    else:
        cov = covariance(data).cov
        names = data.names
    var = np.diag(cov).copy()
    sd = np.sqrt(var)
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = cov / np.outer(sd, sd)
    corr[~np.isfinite(corr)] = 0.0
    return names, corr, var


def collinearity(data, threshold: float, keep: Sequence[str] | None = None) -> CollinearityReport:
    """Group variables linked by ``|r| >= threshold`` into connected components.

    Each component keeps one representative: the first keep-list member if
    any, otherwise the largest-variance member (ties go to the
    alphabetically first name). Constant columns never form edges.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    names, corr, var = _corr_and_var(data)
    p = len(names)
    adj = np.abs(corr) >= threshold
    np.fill_diagonal(adj, False)
    n_comp, lab = connected_components(adj.astype(np.int8), directed=False)
    groups: dict[int, list[int]] = {}
    for i in range(p):
        groups.setdefault(int(lab[i]), []).append(i)
    keep = list(keep or [])
    comps, kept, ignored = [], [], []
    for members in sorted(groups.values(), key=lambda g: g[0]):
        if len(members) < 2:
            continue
        member_names = [names[i] for i in members]
        preferred = [k for k in member_names if k in keep]
        if preferred:
            rep = preferred[0]
        else:
            best = max(var[i] for i in members)
            rep = sorted(names[i] for i in members if var[i] == best)[0]
        comps.append(tuple(member_names))
        kept.append(rep)
        ignored.extend(k for k in member_names if k != rep)
    return CollinearityReport(float(threshold), tuple(comps), tuple(kept), tuple(ignored))


def collinearity_sweep(data, thresholds: Iterable[float], keep=None) -> list[CollinearityReport]:
    """Component structure across a grid of thresholds."""
    return [collinearity(data, t, keep) for t in thresholds]


# ---------------------------------------------------------------------------
# variance rescaling


def rescale_variances(m: VariableMatrix, max_ratio: float = 10.0,
                      columns: Iterable[str] | None = None):
    """Double the minimum-variance column until max/min variance <= max_ratio.

    Returns the rescaled matrix and the power-of-two multiplier of every
    column (1 for columns never touched or outside ``columns``).
    """
    cols = list(m.names if columns is None else columns)
    if len(cols) < 2:
        raise PrepError("rescaling needs at least two columns")
    if max_ratio < 4:
        # doubling a column quadruples its variance, so below 4 the smallest
        # column can overshoot the largest and the loop cycles forever
        raise ValueError("max_ratio must be >= 4")
    var = np.array([m.column(c).var(ddof=1) for c in cols])
    zero = [c for c, v in zip(cols, var) if not v > 0]
    if zero:
        raise PrepError(f"column {zero[0]!r} has zero variance; rescaling cannot terminate")
    mult = np.ones(len(cols), dtype=np.int64)
    while True:
        imax = int(np.argmax(var))
        imin = int(np.argmin(var))
        if var[imax] / var[imin] <= max_ratio:
            break
        mult[imin] *= 2
        var[imin] *= 4.0
    multipliers = {name: 1 for name in m.names}
    updates = {}
    for c, k in zip(cols, mult):
        multipliers[c] = int(k)
        if k != 1:
            updates[c] = m.column(c) * float(k)
    return m.replace(updates), multipliers


# ---------------------------------------------------------------------------
# exploratory factor diagnostics


@dataclass(frozen=True)
class FactorSolution:
    names: tuple
    loadings: np.ndarray
    proportion: np.ndarray
    cumulative: np.ndarray
    kind: str
    eigenvalues: np.ndarray | None = None
    signs: np.ndarray | None = None
    suppress_below: float = 0.0
    communalities: np.ndarray | None = None
    heywood: tuple = ()
    iterations: int = 0
    warnings: tuple = field(default=())

    def table(self):
        """Loadings as nested lists, ``None`` where suppressed."""
        out = []
        for row in self.loadings:
            out.append([None if abs(v) < self.suppress_below else float(v) for v in row])
        return out

    def as_dict(self):
        d = {
            "kind": self.kind,
            "variables": list(self.names),
            "loadings": self.table(),
            "proportion": [float(v) for v in self.proportion],
            "cumulative": [float(v) for v in self.cumulative],
        }
        if self.eigenvalues is not None:
            d["eigenvalues"] = [float(v) for v in self.eigenvalues]
        if self.signs is not None:
            d["signs"] = self.signs.astype(int).tolist()
        if self.communalities is not None:
            d["communalities"] = [float(v) for v in self.communalities]
            d["heywood"] = list(self.heywood)
            d["iterations"] = self.iterations
        return d


def _as_correlation(c: CovInput) -> np.ndarray:
    sd = np.sqrt(np.diag(c.cov))
    r = c.cov / np.outer(sd, sd)
    np.fill_diagonal(r, 1.0)
    return r


def _orient(vecs: np.ndarray) -> np.ndarray:
    vecs = vecs.copy()
    for j in range(vecs.shape[1]):
        s = vecs[:, j].sum()
        if abs(s) < 1e-12:
            s = vecs[np.argmax(np.abs(vecs[:, j])), j]
        if s < 0:
            vecs[:, j] = -vecs[:, j]
    return vecs


def pca(c: CovInput, n_components: int, sign_threshold: float = 0.1) -> FactorSolution:
    """Principal components of the correlation matrix.

    Loadings are eigenvectors scaled by the square root of their
    eigenvalue; ``signs`` discretizes each loading to -1/0/+1 depending on
    whether its magnitude exceeds ``sign_threshold``.
    """
    p = len(c.names)
    if not 1 <= n_components <= p:
        raise ValueError(f"n_components must be in [1, {p}]")
    if sign_threshold < 0:
        raise ValueError("sign_threshold must be >= 0")
    r = _as_correlation(c)
    vals, vecs = np.linalg.eigh(r)
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    if vals[-1] < -1e-8:
        raise PrepError(f"correlation matrix is not positive semidefinite (eigenvalue {vals[-1]:.3g})")
    vals = np.clip(vals, 0.0, None)
    vecs = _orient(vecs)
    loadings = vecs[:, :n_components] * np.sqrt(vals[:n_components])
    prop = vals / p
    signs = np.where(np.abs(loadings) > sign_threshold, np.sign(loadings), 0).astype(int)
    return FactorSolution(tuple(c.names), loadings, prop[:n_components],
                          np.cumsum(prop)[:n_components], "pca", eigenvalues=vals, signs=signs)


def _smc(r: np.ndarray) -> np.ndarray:
    try:
        inv = np.linalg.inv(r)
        smc = 1.0 - 1.0 / np.diag(inv)
        if np.all(np.isfinite(smc)) and np.all(smc >= -1e-12):
            return np.clip(smc, 0.0, 1.0)
    except np.linalg.LinAlgError:
        pass
    off = np.abs(r - np.eye(len(r)))
    return off.max(axis=1) ** 2


def efa(c: CovInput, n_factors: int, suppress_below: float = 0.0,
        tol: float = 1e-6, max_iter: int = 200) -> FactorSolution:
    """Principal-axis factoring of the correlation matrix.

    Communalities start at the squared multiple correlations and are
    iterated until their largest change drops below ``tol``. Communalities
    above one (Heywood cases) are flagged and clipped to one.
    """
    p = len(c.names)
    if not 1 <= n_factors < p:
        raise ValueError(f"n_factors must be in [1, {p - 1}]")
    r = _as_correlation(c)
    h2 = _smc(r)
    heywood: set[str] = set()
    loadings = np.zeros((p, n_factors))
    it = 0
    for it in range(1, max_iter + 1):
        reduced = r.copy()
        np.fill_diagonal(reduced, h2)
        vals, vecs = np.linalg.eigh(reduced)
        order = np.argsort(vals)[::-1][:n_factors]
        vals, vecs = vals[order], _orient(vecs[:, order])
        loadings = vecs * np.sqrt(np.clip(vals, 0.0, None))
        new = np.sum(loadings**2, axis=1)
        over = new > 1.0
        for i in np.flatnonzero(over):
            heywood.add(c.names[i])
        new = np.minimum(new, 1.0)
        delta = np.max(np.abs(new - h2))
        h2 = new
        if delta < tol:
            break
    warn = ()
    if heywood:
        warn = (f"Heywood case (communality > 1) for {sorted(heywood)}; clipped to 1",)
        log.warning(warn[0])
    prop = np.sum(loadings**2, axis=0) / p
    return FactorSolution(tuple(c.names), loadings, prop, np.cumsum(prop), "efa",
                          suppress_below=suppress_below, communalities=h2,
                          heywood=tuple(k for k in c.names if k in heywood),
                          iterations=it, warnings=warn)

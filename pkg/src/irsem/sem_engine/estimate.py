"""Maximum-likelihood estimation of a RAM system on a sample covariance."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from ..corpus_io import CovInput
from ..errors import EstimationError, NotNestedError, SpecificationError
from ..model_dsl import scale_setting
from .indices import FitIndices, fit_indices
from .ml import Discrepancy, ml_fit_value
from .noncentral import chisq_sf
from .optimize import bfgs
from .ram import RamSystem, implied_full

log = logging.getLogger(__name__)

CORRELATION_BANNER = ("input is a correlation matrix treated as the covariance of "
                      "standardized variables; standard errors are approximate")


@dataclass(frozen=True)
class EstimateOptions:
    max_iter: int = 500
    gtol: float = 1e-8
    max_halvings: int = 30
    hessian_step: float = 1e-5

    def as_dict(self):
        return {"max_iter": self.max_iter, "gtol": self.gtol,
                "max_halvings": self.max_halvings, "hessian_step": self.hessian_step}


@dataclass(frozen=True)
class ParamEstimate:
    id: str
    kind: str
    estimate: float
    se: float | None
    z: float | None
    p: float | None
    std: float


@dataclass(frozen=True)
class FitResult:
    variables: tuple  # manifests in Sigma order
    params: tuple  # ParamEstimate per free parameter
    r_squared: dict
    indices: FitIndices | None
    converged: bool
    iterations: int
    grad_norm: float
    fmin: float
    n: int
    sample_cov: np.ndarray = field(repr=False)
    implied_cov: np.ndarray = field(repr=False)
    warnings: tuple = ()

    @property
    def param_ids(self) -> tuple:
        return tuple(q.id for q in self.params)

    @property
    def estimates(self) -> dict:
        return {q.id: q.estimate for q in self.params}

    @property
    def std_estimates(self) -> dict:
        return {q.id: q.std for q in self.params}

    def __getitem__(self, pid) -> ParamEstimate:
        for q in self.params:
            if q.id == pid:
                return q
        raise KeyError(pid)

    def as_dict(self) -> dict:
        return {
            "variables": list(self.variables),
            "n": self.n,
            "parameters": [
                {"id": q.id, "kind": q.kind, "B": q.estimate, "se": q.se, "z": q.z,
                 "p": q.p, "beta": q.std}
                for q in self.params
            ],
            "r_squared": dict(self.r_squared),
            "indices": None if self.indices is None else self.indices.as_dict(),
            "convergence": {"converged": self.converged, "iterations": self.iterations,
                            "grad_norm": self.grad_norm, "fmin": self.fmin},
            "sample_cov": self.sample_cov.tolist(),
            "implied_cov": self.implied_cov.tolist(),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        params = tuple(ParamEstimate(q["id"], q["kind"], q["B"], q["se"], q["z"], q["p"], q["beta"])
                       for q in d["parameters"])
        conv = d["convergence"]
        return cls(
            variables=tuple(d["variables"]), params=params, r_squared=dict(d["r_squared"]),
            indices=None if d["indices"] is None else FitIndices.from_dict(d["indices"]),
            converged=conv["converged"], iterations=conv["iterations"],
            grad_norm=conv["grad_norm"], fmin=conv["fmin"], n=d["n"],
            sample_cov=np.array(d["sample_cov"]), implied_cov=np.array(d["implied_cov"]),
            warnings=tuple(d.get("warnings", ())),
        )


def _proxies(ram: RamSystem) -> dict:
    """Manifest stand-in for each variable: itself, or a latent's scaling indicator."""
    model = ram.model
    proxy = {v: v for v in ram.manifests}
    scale = scale_setting(model)
    for meas in model.measurements:
        how = scale[meas.latent]
        if how[0] == "default":
            proxy[meas.latent] = how[1]
        else:
            fixed = [t.name for t in meas.indicators if t.value]
            proxy[meas.latent] = fixed[0] if fixed else meas.indicators[0].name
    # latents measured only by latents: follow the chain
    for _ in range(len(proxy)):
        changed = False
        for k, v in proxy.items():
            if v not in ram.manifests and v in proxy and proxy[v] != v:
                proxy[k] = proxy[v]
                changed = True
        if not changed:
            break
    return {k: v for k, v in proxy.items() if v in ram.manifests}


def start_values(ram: RamSystem, S: np.ndarray) -> np.ndarray:
    """Data-based starting point.

    Paths: least squares on S with latents replaced by their scaling
    indicator, 0.5 where that is undefined. Exogenous manifest variances and
    covariances: sample values. Other variances: half the sample variance of
    the variable (or of a latent's scaling indicator). Other covariances: 0.
    """
    pos = {v: i for i, v in enumerate(ram.manifests)}
    proxy = _proxies(ram)
    exo = set(ram.manifests) - set(ram.endogenous)
    theta = np.empty(ram.n_free)
    ols: dict[str, dict] = {}
    for reg in ram.model.regressions:
        y = proxy.get(reg.outcome)
        xs = [proxy.get(t.name) for t in reg.predictors]
        coef = {}
        if y is not None and all(x is not None for x in xs) and len(set(xs)) == len(xs) and y not in xs:
            ix = [pos[x] for x in xs]
            try:
                b = np.linalg.solve(S[np.ix_(ix, ix)], S[ix, pos[y]])
                coef = {t.name: float(v) for t, v in zip(reg.predictors, b)}
            except np.linalg.LinAlgError:
                coef = {}
        ols[reg.outcome] = coef
    for k, q in enumerate(ram.params):
        if q.kind == "regression":
            outcome, pred = q.id.split("~", 1)
            theta[k] = ols.get(outcome, {}).get(pred, 0.5)
        elif q.kind == "loading":
            lat, ind = q.id.split("=~", 1)
            ref = proxy.get(lat)
            if ref is None:
                theta[k] = 0.5
            else:
                phi = 0.5 * S[pos[ref], pos[ref]]
                theta[k] = S[pos[ind], pos[ref]] / phi if ind != ref else 1.0
        elif q.kind == "variance":
            v = q.id.split("~~", 1)[0]
            ref = proxy.get(v)
            if ref is None:
                theta[k] = 1.0
            elif v in exo:
                theta[k] = S[pos[v], pos[v]]
            else:
                theta[k] = 0.5 * S[pos[ref], pos[ref]]
        else:
            a, b = q.id.split("~~", 1)
            theta[k] = S[pos[a], pos[b]] if a in exo and b in exo else 0.0
    return theta


def parameter_scales(ram: RamSystem, S: np.ndarray) -> np.ndarray:
    """Natural unit of each free parameter implied by the sample variances.

    A path from ``c`` to ``r`` is measured in sd(r)/sd(c), a (co)variance in
    sd(r)*sd(c), with a latent borrowing its scaling indicator's sd. The
    optimizer works in these units so its path and stopping rule do not
    depend on how the data were scaled.
    """
    pos = {v: i for i, v in enumerate(ram.manifests)}
    proxy = _proxies(ram)
    sd = np.array([math.sqrt(S[pos[proxy[v]], pos[proxy[v]]]) if v in proxy else 1.0
                   for v in ram.variables])
    d = np.empty(ram.n_free)
    for k, q in enumerate(ram.params):
        r, c = q.cells[0]
        d[k] = sd[r] / sd[c] if q.matrix == "A" else sd[r] * sd[c]
    return d


def estimate(ram: RamSystem, data: CovInput, options: EstimateOptions | None = None,
             start=None) -> FitResult:
    """Fit ``ram`` to the sample covariance in ``data`` by maximum likelihood.

    Raises
    ------
    SpecificationError
        When the model has more free parameters than sample moments.
    EstimationError
        When the sample covariance over the model's manifests is not
        positive definite.
    """
    options = options or EstimateOptions()
    warnings: list[str] = []
    missing = [v for v in ram.manifests if v not in data.names]
    if missing:
        raise SpecificationError(f"data lack model variables {missing}", missing)
    S = data.sub(ram.manifests).cov
    p = ram.n_manifest
    n = data.n
    t = ram.n_free
    if ram.df < 0:
        raise SpecificationError(
            f"model is not identified: {t} free parameters but only {p * (p + 1) // 2} sample moments")
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise EstimationError(
            "sample covariance of the model variables is not positive definite; "
            "remove collinear variables (see the prep collinearity report)") from None
    if n <= t:
        warnings.append(f"sample size {n} does not exceed the {t} free parameters")
    if data.is_correlation:
        warnings.append(CORRELATION_BANNER)

    disc = Discrepancy(ram, S)
    x0 = np.asarray(start, dtype=float) if start is not None else start_values(ram, S)
    if not math.isfinite(disc.value(x0)):
        x0 = ram.default_start()
        for k, q in enumerate(ram.params):
            if q.kind == "variance":
                v = q.id.split("~~", 1)[0]
                if v in ram.manifests:
                    x0[k] = S[ram.manifests.index(v), ram.manifests.index(v)]
    d = parameter_scales(ram, S)
    res = bfgs(lambda u: disc.value(u * d), lambda u: disc.gradient(u * d) * d, x0 / d,
               gtol=options.gtol, max_iter=options.max_iter, max_halvings=options.max_halvings)
    theta = res.x * d
    A, Smat = ram.matrices(theta)
    C = implied_full(A, Smat)
    Sigma = C[:p, :p]
    if not res.converged:
        warnings.append(f"estimation did not converge: {res.message}")

    se = np.full(t, np.nan)
    if res.converged and t:
        H = disc.numerical_hessian(theta, options.hessian_step, d)
        try:
            cov_theta = np.linalg.inv(H) * 2.0 / (n - 1)
            diag = np.diag(cov_theta)
            if np.any(diag <= 0):
                warnings.append("information matrix is not positive definite; "
                                "some standard errors are undefined")
            se = np.sqrt(np.where(diag > 0, diag, np.nan))
        except np.linalg.LinAlgError:
            warnings.append("information matrix is singular; standard errors undefined")

    sd = np.sqrt(np.clip(np.diag(C), 0.0, None))
    params = []
    for k, q in enumerate(ram.params):
        r, c = q.cells[0]
        est = float(theta[k])
        if q.matrix == "A":
            std = est * sd[c] / sd[r] if sd[r] > 0 else math.nan
        else:
            std = est / (sd[r] * sd[c]) if sd[r] > 0 and sd[c] > 0 else math.nan
        s = float(se[k])
        if math.isfinite(s) and s > 0:
            z = est / s
            pv = float(2.0 * norm.sf(abs(z)))
        else:
            s = z = pv = None
        params.append(ParamEstimate(q.id, q.kind, est, s, z, pv, float(std)))

    r2 = {}
    idx = {v: i for i, v in enumerate(ram.variables)}
    for v in ram.endogenous:
        i = idx[v]
        r2[v] = float(1.0 - Smat[i, i] / C[i, i]) if C[i, i] > 0 else math.nan

    indices = None
    if res.converged:
        indices = fit_indices(res.fun, S, Sigma, n, t)
    for w in warnings:
        log.warning(w)
    return FitResult(
        variables=ram.manifests, params=tuple(params), r_squared=r2, indices=indices,
        converged=res.converged, iterations=res.iterations, grad_norm=res.grad_norm,
        fmin=float(res.fun), n=n, sample_cov=S, implied_cov=Sigma, warnings=tuple(warnings),
    )


def fit_model(model, data: CovInput, options: EstimateOptions | None = None) -> FitResult:
    """Convenience wrapper: build the RAM system over ``data`` and estimate."""
    from .ram import build_ram

    return estimate(build_ram(model, data.names), data, options)


@dataclass(frozen=True)
class NestedComparison:
    delta_chisq: float
    delta_df: int
    p: float
    warnings: tuple = ()

    def as_dict(self):
        return {"delta_chisq": self.delta_chisq, "delta_df": self.delta_df, "p": self.p,
                "warnings": list(self.warnings)}


def information_comparison(a: FitResult, b: FitResult) -> dict:
    """AIC/BIC side by side; lower is preferred."""
    if a.indices is None or b.indices is None:
        raise EstimationError("both fits must have converged")
    out = {
        "aic": [a.indices.aic, b.indices.aic],
        "bic": [a.indices.bic, b.indices.bic],
        "delta_aic": b.indices.aic - a.indices.aic,
        "delta_bic": b.indices.bic - a.indices.bic,
    }
    out["preferred_aic"] = 0 if a.indices.aic <= b.indices.aic else 1
    out["preferred_bic"] = 0 if a.indices.bic <= b.indices.bic else 1
    return out


def compare_nested(full: FitResult, restricted: FitResult) -> NestedComparison:
    """Chi-square difference test of ``restricted`` against ``full``.

    Raises :class:`NotNestedError` when the restricted free parameters are
    not a subset of the full model's; compare AIC/BIC instead.
    """
    if full.indices is None or restricted.indices is None:
        raise EstimationError("both fits must have converged")
    if (full.n != restricted.n or full.variables != restricted.variables
            or not np.array_equal(full.sample_cov, restricted.sample_cov)):
        raise NotNestedError("fits were computed on different data")
    extra = set(restricted.param_ids) - set(full.param_ids)
    if extra:
        raise NotNestedError(f"restricted model has parameters absent from the full model: "
                             f"{sorted(extra)}; compare AIC/BIC instead")
    warnings = []
    d_chi = restricted.indices.chisq - full.indices.chisq
    if d_chi < 0:
        warnings.append(f"negative chi-square difference {d_chi:.3g} floored at 0")
        log.warning(warnings[-1])
        d_chi = 0.0
    d_df = restricted.indices.df - full.indices.df
    p = 1.0 if d_df <= 0 else chisq_sf(d_chi, d_df)
    return NestedComparison(float(d_chi), int(d_df), float(p), tuple(warnings))


__all__ = [
    "CORRELATION_BANNER", "EstimateOptions", "FitResult", "NestedComparison", "ParamEstimate",
    "compare_nested", "estimate", "fit_model", "information_comparison", "ml_fit_value",
    "start_values",
]

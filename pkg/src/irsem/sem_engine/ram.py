"""Reticular action model (RAM) form of a :class:`~irsem.model_dsl.SemModel`.

Variables are ordered manifest-first (in data column order) then latent
(in order of first appearance). ``A[i, j]`` holds the directed effect of
variable j on variable i; ``S`` holds (residual) variances and covariances.
The implied manifest covariance is ``F (I - A)^-1 S (I - A)^-T F^T``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SpecificationError
from ..model_dsl import SemModel, scale_setting, validate


@dataclass(frozen=True)
class Param:
    id: str
    matrix: str  # "A" or "S"
    cells: tuple  # ((row, col), ...); symmetric S entries list both cells
    kind: str  # loading | regression | variance | covariance


@dataclass(frozen=True)
class RamSystem:
    variables: tuple
    n_manifest: int
    A_fixed: np.ndarray
    S_fixed: np.ndarray
    params: tuple
    model: SemModel

    @property
    def manifests(self) -> tuple:
        return self.variables[: self.n_manifest]

    @property
    def latents(self) -> tuple:
        return self.variables[self.n_manifest:]

    @property
    def n_free(self) -> int:
        return len(self.params)

    @property
    def df(self) -> int:
        p = self.n_manifest
        return p * (p + 1) // 2 - self.n_free

    @property
    def param_ids(self) -> tuple:
        return tuple(q.id for q in self.params)

    @property
    def F(self) -> np.ndarray:
        m = len(self.variables)
        return np.eye(m)[: self.n_manifest]

    @property
    def endogenous(self) -> tuple:
        rows = np.flatnonzero(np.any(self._a_pattern(), axis=1))
        return tuple(self.variables[i] for i in rows)

    def _a_pattern(self) -> np.ndarray:
        pat = self.A_fixed != 0
        for q in self.params:
            if q.matrix == "A":
                for r, c in q.cells:
                    pat[r, c] = True
        return pat

    def matrices(self, theta) -> tuple[np.ndarray, np.ndarray]:
        A = self.A_fixed.copy()
        S = self.S_fixed.copy()
        for q, v in zip(self.params, theta):
            target = A if q.matrix == "A" else S
            for r, c in q.cells:
                target[r, c] = v
        return A, S

    def theta_map(self) -> dict:
        return {q.id: tuple((q.matrix, r, c) for r, c in q.cells) for q in self.params}

    def default_start(self) -> np.ndarray:
        """Data-free start values: unit loadings and variances, zero paths."""
        out = []
        for q in self.params:
            out.append({"loading": 1.0, "regression": 0.0, "variance": 1.0, "covariance": 0.0}[q.kind])
        return np.array(out)


def build_ram(model: SemModel, data_names) -> RamSystem:
    """Lay out the free and fixed parameters of ``model`` in RAM matrices.

    Defaults: every variance is free; covariances among exogenous manifest
    variables are free (saturating their block); declared ``<->`` pairs are
    free or fixed as written; every other covariance is zero. Each latent
    without a user-fixed loading or variance has its first loading fixed to 1.
    """
    data_names = list(data_names)
    problems = validate(model, data_names)
    if problems:
        raise SpecificationError("model does not validate against the data", problems)
    model_manifests = set(model.manifests)
    manifests = [k for k in data_names if k in model_manifests]
    latents = list(model.latents)
    variables = tuple(manifests + latents)
    idx = {k: i for i, k in enumerate(variables)}
    m = len(variables)
    A = np.zeros((m, m))
    S = np.zeros((m, m))
    params: list[Param] = []
    scale = scale_setting(model)

    for meas in model.measurements:
        how = scale[meas.latent]
        for t in meas.indicators:
            r, c = idx[t.name], idx[meas.latent]
            value = t.value
            if value is None and how[0] == "default" and t.name == how[1]:
                value = 1.0
            if value is None:
                params.append(Param(f"{meas.latent}=~{t.name}", "A", ((r, c),), "loading"))
            else:
                A[r, c] = value
    for reg in model.regressions:
        for t in reg.predictors:
            r, c = idx[reg.outcome], idx[t.name]
            if t.value is None:
                params.append(Param(f"{reg.outcome}~{t.name}", "A", ((r, c),), "regression"))
            else:
                A[r, c] = t.value

    for v in variables:
        i = idx[v]
        fixed = model.fixed_variance(v)
        if fixed is None:
            params.append(Param(f"{v}~~{v}", "S", ((i, i),), "variance"))
        else:
            S[i, i] = fixed

    endog = {dst for _, dst, _ in model.edges()}
    exo_manifest = [k for k in manifests if k not in endog]
    declared = {}
    for cv in model.covariances:
        a, b = sorted((cv.left, cv.right), key=idx.__getitem__)
        declared[(a, b)] = cv.value
    pairs = []
    for ii, a in enumerate(exo_manifest):
        for b in exo_manifest[ii + 1:]:
            pairs.append((a, b))
    for key in declared:
        if key not in pairs:
            pairs.append(key)
    for a, b in pairs:
        i, j = idx[a], idx[b]
        value = declared.get((a, b))
        if value is None:
            params.append(Param(f"{a}~~{b}", "S", ((i, j), (j, i)), "covariance"))
        else:
            S[i, j] = S[j, i] = value

    return RamSystem(variables, len(manifests), A, S, tuple(params), model)


def implied_full(A: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Model-implied covariance of all variables, latent included."""
    B = np.linalg.inv(np.eye(len(A)) - A)
    C = B @ S @ B.T
    return (C + C.T) / 2.0


def implied_cov(ram: RamSystem, theta) -> np.ndarray:
    A, S = ram.matrices(theta)
    p = ram.n_manifest
    return implied_full(A, S)[:p, :p]

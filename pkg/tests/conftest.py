from pathlib import Path

import numpy as np
import pytest

from irsem.corpus_io import CovInput

FIXTURES = Path(__file__).resolve().parent / "fixtures"


@pytest.fixture
def fixtures():
    return FIXTURES


def sample_cov(x: np.ndarray) -> np.ndarray:
    """Unbiased covariance of the rows of x, computed without the library."""
    xc = x - x.mean(axis=0)
    return xc.T @ xc / (len(x) - 1)


def cov_input(x: np.ndarray, names) -> CovInput:
    return CovInput(tuple(names), sample_cov(x), len(x))


def one_factor_data(rng, n, loadings=(1.0, 0.8, 0.6), latent_var=1.0, resid_var=0.5):
    f = rng.normal(scale=np.sqrt(latent_var), size=n)
    e = rng.normal(scale=np.sqrt(resid_var), size=(n, len(loadings)))
    return f[:, None] * np.asarray(loadings) + e


def regression_data(rng, n, k):
    """Correlated predictors and one outcome; returns (X, y, names)."""
    mix = rng.normal(size=(k, k)) * 0.5 + np.eye(k)
    x = rng.normal(size=(n, k)) @ mix
    beta = rng.uniform(-1.0, 1.0, size=k)
    y = x @ beta + rng.normal(scale=rng.uniform(0.5, 2.0), size=n)
    return x, y, [f"X{i + 1}" for i in range(k)]


def random_sem_case(rng):
    """A random identified model with data drawn from it.

    Alternates between path models, one- and two-factor measurement models
    and a latent regression. Returns (model text, CovInput).
    """
    kind = rng.integers(0, 4)
    n = 400
    if kind == 0:
        k = int(rng.integers(2, 5))
        x, y, names = regression_data(rng, n, k)
        z = 0.7 * y + rng.normal(size=n)
        data = np.column_stack([x, y, z])
        text = f"Y <- {' + '.join(names)}\nZ <- Y + X1"
        return text, cov_input(data, names + ["Y", "Z"])
    if kind == 1:
        lam = rng.uniform(0.5, 1.5, size=int(rng.integers(3, 6)))
        data = one_factor_data(rng, n, lam, resid_var=rng.uniform(0.2, 1.0))
        names = [f"x{i}" for i in range(len(lam))]
        return f"F -> {' + '.join(names)}", cov_input(data, names)
    if kind == 2:
        f = rng.multivariate_normal([0, 0], [[1, 0.4], [0.4, 1]], size=n)
        lam = rng.uniform(0.5, 1.5, size=6)
        data = np.column_stack([f[:, i // 3] * lam[i] for i in range(6)]) + rng.normal(size=(n, 6)) * 0.6
        names = [f"x{i}" for i in range(6)]
        return "A -> x0 + x1 + x2\nB -> x3 + x4 + x5\nA <-> B", cov_input(data, names)
    f = rng.normal(size=n)
    g = 0.6 * f + rng.normal(size=n) * 0.8
    lam = rng.uniform(0.6, 1.4, size=6)
    data = np.column_stack([(f if i < 3 else g) * lam[i] for i in range(6)]) + rng.normal(size=(n, 6)) * 0.5
    names = [f"x{i}" for i in range(6)]
    return "A -> x0 + x1 + x2\nB -> x3 + x4 + x5\nB <- A", cov_input(data, names)

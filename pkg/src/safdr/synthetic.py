"""Synthetic binary datasets with a known informative support."""
import numpy as np

from .dataset import Dataset


def _names(K):
    return [f"x{j}" for j in range(K)]


def planted_triple(n_samples=500, n_features=12, support=(2, 7, 9), seed=0):
    """Three informative features, two of which only help together.

    ``support[0]`` carries the class signal buried under a shared nuisance
    that ``support[1]`` measures almost exactly, so neither is useful alone
    but their difference is. ``support[2]`` is a plain marginal signal; the
    remaining features are independent noise.
    """
    rng = np.random.default_rng(seed)
    y = np.zeros(n_samples, np.int64)
    y[rng.permutation(n_samples)[: n_samples // 2]] = 1
    s = 2.0 * y - 1.0
    X = rng.normal(size=(n_samples, n_features))
    nuisance = 3.0 * rng.normal(size=n_samples)
    a, b, c = support
    X[:, a] = 0.6 * s + nuisance + 0.3 * rng.normal(size=n_samples)
    X[:, b] = nuisance + 0.3 * rng.normal(size=n_samples)
    X[:, c] = 0.8 * s + rng.normal(size=n_samples)
    return Dataset(X, y, _names(n_features))


def sparse_signal(n_samples=400, n_features=20, support=(0, 1, 2), weight=1.0, seed=0):
    """Labels drawn from a logistic model on ``support``; other features are noise."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_samples, n_features))
    z = weight * X[:, list(support)].sum(axis=1)
    y = (rng.random(n_samples) < 1.0 / (1.0 + np.exp(-z))).astype(np.int64)
    return Dataset(X, y, _names(n_features))


def redundant_correlated(n_samples=600, n_features=16, n_views=5, seed=0):
    """A latent risk score seen through several redundant, correlated features.

    ``x0`` measures the score almost directly. ``x1`` carries the score
    under a large shared nuisance that ``x2`` measures, so the pair recovers
    the score about as well as ``x0`` but neither member helps alone. In a
    model on all features the pair carries large standardised weights and
    ``x0`` a small one. ``x3 .. x(2 + n_views)`` are weak noisy views of the
    score; the rest are independent noise.
    """
    if n_features < 3 + n_views:
        raise ValueError("n_features too small for the requested views")
    rng = np.random.default_rng(seed)
    y = np.zeros(n_samples, np.int64)
    y[rng.permutation(n_samples)[: n_samples // 2]] = 1
    score = 0.5 * (2.0 * y - 1.0) + rng.normal(size=n_samples)
    nuisance = 3.0 * rng.normal(size=n_samples)
    X = rng.normal(size=(n_samples, n_features))
    X[:, 0] = score + 0.2 * rng.normal(size=n_samples)
    X[:, 1] = score + nuisance + 0.2 * rng.normal(size=n_samples)
    X[:, 2] = nuisance + 0.2 * rng.normal(size=n_samples)
    for j in range(3, 3 + n_views):
        X[:, j] = score + rng.normal(size=n_samples)
    return Dataset(X, y, _names(n_features))

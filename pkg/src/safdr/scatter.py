"""Class statistics, within-class scatter and the Fisher discriminant ratio."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import kernels
from .dataset import DatasetError

RIDGE_REL = 1e-8


class SingularScatterError(FloatingPointError):
    """The regularised within-class scatter of a subset is not positive definite."""


@dataclass(frozen=True, eq=False)
class ScatterSet:
    """Class means and within-class scatter ``sw = Sigma0 + Sigma1`` over some rows.

    Covariances use the population convention (divide by the class count).
    The between-class scatter is the outer product of :attr:`delta` and is
    never stored.
    """

    mu0: np.ndarray
    mu1: np.ndarray
    sw: np.ndarray
    batch_id: int = -1
    n0: int = 0
    n1: int = 0

    @property
    def delta(self):
        return self.mu1 - self.mu0

    def between(self, subset=None):
        d = self.delta if subset is None else self.delta[np.asarray(subset)]
        return np.outer(d, d)


@dataclass(frozen=True)
class FeatureSubset:
    """Sorted, duplicate-free feature indices."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) == 0:
            raise ValueError("a feature subset needs at least one feature")
        if len(set(idx)) != len(idx):
            raise ValueError(f"duplicate feature indices in {self.indices}")
        idx = tuple(sorted(idx))
        if idx[0] < 0:
            raise ValueError("negative feature index")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def of(cls, indices, n_features=None):
        s = indices if isinstance(indices, cls) else cls(tuple(indices))
        if n_features is not None and s.indices[-1] >= n_features:
            raise ValueError(f"feature index {s.indices[-1]} out of range for K={n_features}")
        return s

    @property
    def k(self):
        return len(self.indices)

    def array(self):
        return np.array(self.indices, dtype=np.int64)

    def __iter__(self):
        return iter(self.indices)

    def __len__(self):
        return len(self.indices)


def _scatter_of(X, y, batch_id=-1):
    X0, X1 = X[y == 0], X[y == 1]
    if X0.shape[0] == 0 or X1.shape[0] == 0:
        raise DatasetError("both classes must be present to compute scatter")
    mu0, mu1 = X0.mean(axis=0), X1.mean(axis=0)
    C0, C1 = X0 - mu0, X1 - mu1
    sw = C0.T @ C0 / X0.shape[0] + C1.T @ C1 / X1.shape[0]
    sw = 0.5 * (sw + sw.T)
    return ScatterSet(mu0, mu1, sw, batch_id, X0.shape[0], X1.shape[0])


def compute_scatter(data, row_idx):
    rows = np.asarray(row_idx, dtype=np.int64)
    return _scatter_of(data.samples[rows], data.labels[rows])


def make_batches(data, row_idx, n_batches, seed):
    """Partition ``row_idx`` into ``n_batches`` stratified random batches and
    return one :class:`ScatterSet` per batch."""
    rows = np.asarray(row_idx, dtype=np.int64)
    if n_batches < 1:
        raise ValueError("n_batches must be positive")
    y = data.labels[rows]
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    per_class = []
    for c in (0, 1):
        members = rows[y == c]
        if members.size < 2 * n_batches:
            raise DatasetError(
                f"{n_batches} batches need at least {2 * n_batches} samples of class {c}, "
                f"have {members.size}")
        per_class.append(np.array_split(members[rng.permutation(members.size)], n_batches))
    out = []
    for b in range(n_batches):
        batch = np.sort(np.concatenate([per_class[0][b], per_class[1][b]]))
        out.append(_scatter_of(data.samples[batch], data.labels[batch], b))
    return out


def _fdr_value(delta, sw, idx):
    k = idx.shape[0]
    return kernels.get("fdr")(delta, sw, idx, RIDGE_REL, np.empty((k, k)), np.empty(k))


def fdr(scatter, subset):
    """Fisher discriminant ratio ``d' S_W^-1 d`` restricted to ``subset``.

    The solve goes through a Cholesky factor of the k x k submatrix. A ridge
    of ``1e-8 * trace / k`` is added only when that submatrix is numerically
    singular.
    """
    idx = FeatureSubset.of(subset, scatter.sw.shape[0]).array()
    value = _fdr_value(scatter.delta, scatter.sw, idx)
    if np.isnan(value):
        raise SingularScatterError(f"within-class scatter singular on subset {idx.tolist()}")
    return value


def regularised_submatrix(scatter, subset):
    """The k x k block of S_W that :func:`fdr` actually solves with."""
    idx = FeatureSubset.of(subset, scatter.sw.shape[0]).array()
    sub = scatter.sw[np.ix_(idx, idx)]
    _, lam = kernels.regularised_cholesky(sub, RIDGE_REL)
    return sub + lam * np.eye(idx.size)


def fisher_direction(scatter, subset):
    """Unit vector maximising the Rayleigh quotient of (S_B, S_W) on ``subset``."""
    idx = FeatureSubset.of(subset, scatter.sw.shape[0]).array()
    L, _ = kernels.regularised_cholesky(scatter.sw[np.ix_(idx, idx)], RIDGE_REL)
    if L is None:
        raise SingularScatterError(f"within-class scatter singular on subset {idx.tolist()}")
    w = solve_triangular(L.T, solve_triangular(L, scatter.delta[idx], lower=True), lower=False)
    norm = np.linalg.norm(w)
    return w / norm if norm > 0 else w


def rayleigh_quotient(scatter, subset, w):
    idx = FeatureSubset.of(subset, scatter.sw.shape[0]).array()
    d = scatter.delta[idx]
    return float((w @ d) ** 2 / (w @ regularised_submatrix(scatter, idx) @ w))

"""Reference selectors: recursive feature elimination and an L1 logistic path."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels, logistic
from .dataset import DatasetError

L1_MAX_ITER = 2000
L1_TOL = 1e-6
SUPPORT_EPS = 1e-8
DEFAULT_C_GRID = tuple(np.logspace(-3, 3, 30).tolist())

soft_threshold = kernels.soft_threshold


@dataclass(frozen=True)
class RfeResult:
    """Features in the order they were eliminated (first out first)."""

    elimination_order: tuple

    def subset_for(self, k):
        K = len(self.elimination_order)
        if not 1 <= k <= K:
            raise ValueError(f"k={k} outside [1, {K}]")
        return tuple(sorted(self.elimination_order[K - k:]))


def rfe(data, rows):
    """Drop the feature with the smallest |coefficient| one at a time.

    Ties go to the lower feature index.
    """
    rows = np.asarray(rows, dtype=np.int64)
    y = data.labels[rows]
    if y.min() == y.max():
        raise DatasetError("RFE needs both classes")
    X = data.samples[rows]
    remaining = list(range(data.n_features))
    order = []
    while len(remaining) > 1:
        beta, _, _, _ = logistic.fit_arrays(logistic.design_matrix(X, remaining), y)
        worst = int(np.argmin(np.abs(beta[1:])))
        order.append(remaining.pop(worst))
    order.append(remaining[0])
    return RfeResult(tuple(order))


@dataclass(frozen=True, eq=False)
class L1PathResult:
    c_grid: tuple
    intercepts: np.ndarray
    coefficients: np.ndarray
    converged: np.ndarray
    val_auc: np.ndarray | None = None

    def support(self, i):
        return tuple(np.flatnonzero(np.abs(self.coefficients[i]) > SUPPORT_EPS).tolist())

    @property
    def support_sizes(self):
        return (np.abs(self.coefficients) > SUPPORT_EPS).sum(axis=1)


def l1_fit_arrays(X, y, c, beta0=None, max_iter=L1_MAX_ITER, tol=L1_TOL):
    """Minimise cross-entropy + |beta[1:]|_1 / c on a design matrix with intercept column."""
    X = np.ascontiguousarray(X, float)
    beta0 = np.zeros(X.shape[1]) if beta0 is None else np.array(beta0, float)
    beta, converged, _, _ = kernels.get("fista")(X, np.asarray(y, float), 1.0 / c, beta0,
                                                  max_iter, tol)
    return np.asarray(beta), bool(converged)


def l1_path(data, rows, c_grid=DEFAULT_C_GRID, val_rows=None):
    """L1-penalised logistic fits over an increasing grid of inverse penalties ``C``.

    Each fit warm-starts from the previous one. With ``val_rows`` the
    validation AUC of every fitted model is recorded too.
    """
    c_grid = tuple(float(c) for c in c_grid)
    if not c_grid or min(c_grid) <= 0 or any(b <= a for a, b in zip(c_grid, c_grid[1:])):
        raise ValueError("c_grid must be positive and strictly increasing")
    rows = np.asarray(rows, dtype=np.int64)
    y = data.labels[rows]
    if y.min() == y.max():
        raise DatasetError("L1 path needs both classes")
    X = logistic.design_matrix(data.samples[rows], range(data.n_features))
    betas, conv = [], []
    beta = None
    for c in c_grid:
        beta, ok = l1_fit_arrays(X, y, c, beta)
        betas.append(beta.copy())
        conv.append(ok)
    betas = np.array(betas)
    aucs = None
    if val_rows is not None:
        val_rows = np.asarray(val_rows, dtype=np.int64)
        Xv = logistic.design_matrix(data.samples[val_rows], range(data.n_features))
        yv = data.labels[val_rows]
        aucs = np.array([logistic.auc(logistic.ScoredPredictions(kernels.sigmoid(Xv @ b), yv))
                         for b in betas])
    return L1PathResult(c_grid, betas[:, 0].copy(), betas[:, 1:].copy(), np.array(conv), aucs)

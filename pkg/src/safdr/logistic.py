"""Binary logistic regression fitted by BFGS, plus cross-entropy and ROC AUC."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import kernels
from .dataset import DatasetError

MAX_ITER = 500
GTOL = 1e-6


@dataclass(frozen=True, eq=False)
class LogisticModel:
    """``intercept`` + ``coefficients`` over the features listed in ``subset``.

    ``final_cross_entropy`` is the summed (not averaged) loss on the rows the
    model was fitted on.
    """

    intercept: float
    coefficients: np.ndarray
    subset: tuple
    converged: bool
    iterations: int
    final_cross_entropy: float

    @property
    def params(self):
        return np.concatenate([[self.intercept], self.coefficients])


@dataclass(frozen=True, eq=False)
class ScoredPredictions:
    probabilities: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, float)
        y = np.asarray(self.labels, np.int64)
        if p.shape != y.shape:
            raise ValueError("probabilities and labels differ in length")
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "labels", y)


def design_matrix(X, subset):
    """Intercept column followed by the ``subset`` columns, C-contiguous."""
    cols = np.asarray(subset, dtype=np.int64)
    out = np.empty((X.shape[0], cols.size + 1))
    out[:, 0] = 1.0
    out[:, 1:] = X[:, cols]
    return out


def loss_and_gradient(params, X, y):
    """Summed cross-entropy at ``params`` for a design matrix ``X`` and its gradient."""
    grad = np.empty(X.shape[1])
    f = kernels.get("loss_grad")(np.ascontiguousarray(X, float), np.asarray(y, float),
                                 np.asarray(params, float), grad)
    return f, grad


def fit_arrays(X, y, max_iter=MAX_ITER, gtol=GTOL):
    """BFGS from zero on a design matrix that already contains the intercept column."""
    beta, converged, iters, f = kernels.get("bfgs")(
        np.ascontiguousarray(X, float), np.asarray(y, float), max_iter, gtol)
    return np.asarray(beta), bool(converged), int(iters), float(f)


def fit(data, rows, subset, max_iter=MAX_ITER, gtol=GTOL):
    """Minimise the summed cross-entropy of a logistic model on ``rows``.

    ``subset`` may be empty, giving an intercept-only model. The fit stops
    once the gradient max-norm drops to ``gtol`` or after ``max_iter``
    iterations; ``converged`` says which.
    """
    rows = np.asarray(rows, dtype=np.int64)
    y = data.labels[rows]
    if y.min() == y.max():
        raise DatasetError("logistic fit needs both classes in the training rows")
    subset = tuple(int(j) for j in subset)
    X = design_matrix(data.samples[rows], subset)
    beta, converged, iters, _ = fit_arrays(X, y, max_iter, gtol)
    # recompute with the reporting path so the stored loss matches cross_entropy()
    f = _cross_entropy_params(beta, X, y)
    return LogisticModel(float(beta[0]), beta[1:].copy(), subset, converged, iters, f)


def _probabilities(params, X):
    return kernels.sigmoid(X @ params)


def _cross_entropy_params(params, X, y):
    p = np.clip(_probabilities(params, X), kernels.PROB_CLAMP, 1.0 - kernels.PROB_CLAMP)
    return float(-np.sum(y * np.log(p) + (1 - y) * np.log(1.0 - p)))


def predict_proba(model, data, rows):
    rows = np.asarray(rows, dtype=np.int64)
    return _probabilities(model.params, design_matrix(data.samples[rows], model.subset))


def score(model, data, rows):
    rows = np.asarray(rows, dtype=np.int64)
    return ScoredPredictions(predict_proba(model, data, rows), data.labels[rows])


def cross_entropy(model, data, rows):
    """Summed negative log-likelihood over ``rows`` (probabilities clamped to [1e-12, 1-1e-12])."""
    rows = np.asarray(rows, dtype=np.int64)
    if model.subset and max(model.subset) >= data.n_features:
        raise DatasetError("model uses features the data does not have")
    X = design_matrix(data.samples[rows], model.subset)
    return _cross_entropy_params(model.params, X, data.labels[rows])


def auc(preds):
    """Area under the ROC curve as the Mann-Whitney pair statistic (ties count 1/2)."""
    y = preds.labels
    n1 = int(y.sum())
    n0 = y.size - n1
    if n0 == 0 or n1 == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(preds.probabilities)
    u = ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n0 * n1))

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safdr import logistic
from safdr.dataset import Dataset, DatasetError
from safdr.logistic import (
    LogisticModel,
    ScoredPredictions,
    auc,
    cross_entropy,
    design_matrix,
    fit,
    loss_and_gradient,
)


def trapezoid_roc_auc(scores, labels):
    """Area under the empirical ROC curve by the trapezoid rule over distinct thresholds."""
    scores = np.asarray(scores, float)
    labels = np.asarray(labels)
    P, N = labels.sum(), (1 - labels).sum()
    tpr, fpr = [0.0], [0.0]
    for thr in np.unique(scores)[::-1]:
        tpr.append(((scores >= thr) & (labels == 1)).sum() / P)
        fpr.append(((scores >= thr) & (labels == 0)).sum() / N)
    return float(np.trapezoid(tpr, fpr))


def pair_count_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


def model_with(intercept, coefs=(), subset=()):
    return LogisticModel(intercept, np.array(coefs, float), tuple(subset), True, 0, 0.0)


def noisy_dataset(seed, n=120, K=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, K))
    z = X @ rng.normal(size=K) * 0.8 + 0.3
    y = (rng.random(n) < 1 / (1 + np.exp(-z))).astype(int)
    if y.sum() < 2 or y.sum() > n - 2:
        y[:2], y[2:4] = 0, 1
    return Dataset(X, y, [f"f{j}" for j in range(K)])


class TestFit:
    def test_symmetric_data_gives_zero(self, backend):
        d = Dataset(np.array([[-1.0], [1.0], [-1.0], [1.0]]), [0, 1, 1, 0], ["x"])
        m = fit(d, range(4), [0])
        assert m.intercept == pytest.approx(0.0, abs=1e-10)
        assert m.coefficients[0] == pytest.approx(0.0, abs=1e-10)
        assert m.final_cross_entropy == pytest.approx(4 * math.log(2), rel=1e-12)
        assert m.converged

    def test_intercept_only_balanced(self, backend):
        d = noisy_dataset(0)
        rows = np.concatenate([np.flatnonzero(d.labels == 0)[:20], np.flatnonzero(d.labels == 1)[:20]])
        m = fit(d, rows, [])
        assert m.intercept == pytest.approx(0.0, abs=1e-10)
        assert m.coefficients.size == 0
        assert m.final_cross_entropy / rows.size == pytest.approx(math.log(2), rel=1e-12)

    def test_intercept_only_matches_log_odds(self):
        d = noisy_dataset(1)
        m = fit(d, range(d.n_samples), [])
        p = d.labels.mean()
        assert m.intercept == pytest.approx(math.log(p / (1 - p)), abs=1e-7)

    def test_separable(self, backend):
        x = np.array([-3.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 3.0])
        d = Dataset(x[:, None], (x > 0).astype(int), ["x"])
        m = fit(d, range(8), [0])
        assert m.final_cross_entropy < 0.01
        assert m.coefficients[0] > 5
        assert m.converged or m.iterations == logistic.MAX_ITER

    def test_single_class_rows(self):
        d = noisy_dataset(2)
        with pytest.raises(DatasetError):
            fit(d, np.flatnonzero(d.labels == 1), [0])

    def test_deterministic(self):
        d = noisy_dataset(3)
        a, b = fit(d, range(100), [0, 2]), fit(d, range(100), [0, 2])
        assert a.intercept == b.intercept
        np.testing.assert_array_equal(a.coefficients, b.coefficients)

    def test_stored_loss_matches(self):
        for seed in range(10):
            d = noisy_dataset(seed)
            m = fit(d, range(d.n_samples), [1, 3])
            assert m.coefficients.size == len(m.subset) == 2
            assert abs(m.final_cross_entropy - cross_entropy(m, d, range(d.n_samples))) < 1e-10

    def test_backends_agree(self):
        from safdr import kernels
        d = noisy_dataset(4, K=6)
        prev = kernels.set_backend("numpy")
        try:
            a = fit(d, range(d.n_samples), range(6))
        finally:
            kernels.set_backend(prev)
        b = fit(d, range(d.n_samples), range(6))
        np.testing.assert_allclose(a.params, b.params, rtol=1e-6, atol=1e-8)


class TestOptimality:
    def test_gradient_small_and_local_min(self, backend):
        for seed in range(10):
            d = noisy_dataset(seed, K=3)
            rows = np.arange(d.n_samples)
            m = fit(d, rows, [0, 1, 2])
            assert m.converged
            X = design_matrix(d.samples, m.subset)
            f0, g = loss_and_gradient(m.params, X, d.labels)
            assert np.max(np.abs(g)) <= 1e-6
            for j in range(4):
                for h in (-1e-3, 1e-3):
                    p = m.params.copy()
                    p[j] += h
                    f1, _ = loss_and_gradient(p, X, d.labels)
                    assert f1 >= f0 - 1e-8

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.1, 10.0))
    def test_rescaling_feature(self, seed, c):
        d = noisy_dataset(seed, K=3)
        X = d.samples.copy()
        X[:, 1] *= c
        rows = np.arange(d.n_samples)
        a = fit(d, rows, [0, 1, 2])
        b = fit(d.replace(samples=X), rows, [0, 1, 2])
        assert b.final_cross_entropy == pytest.approx(a.final_cross_entropy, abs=1e-8)
        assert b.coefficients[1] == pytest.approx(a.coefficients[1] / c, rel=1e-6, abs=1e-9)


class TestGradient:
    def test_central_differences(self, backend):
        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(100):
            n, p = int(rng.integers(5, 40)), int(rng.integers(1, 6))
            X = np.column_stack([np.ones(n), rng.normal(size=(n, p))])
            y = rng.integers(0, 2, n).astype(float)
            beta = rng.normal(size=p + 1)
            _, g = loss_and_gradient(beta, X, y)
            fd = np.empty_like(g)
            for j in range(p + 1):
                e = np.zeros(p + 1)
                e[j] = 1e-5
                fd[j] = (loss_and_gradient(beta + e, X, y)[0] - loss_and_gradient(beta - e, X, y)[0]) / 2e-5
            worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(g))
        assert worst < 1e-6


class TestCrossEntropy:
    def test_zero_params(self):
        d = noisy_dataset(5)
        m = model_with(0.0, [0.0, 0.0], [0, 1])
        assert cross_entropy(m, d, range(50)) == pytest.approx(50 * math.log(2), rel=1e-12)

    def test_single_sample(self):
        d = Dataset(np.zeros((4, 1)), [1, 0, 0, 1], ["x"])
        m = model_with(math.log(1 / 3))  # p = 0.25
        assert cross_entropy(m, d, [0]) == pytest.approx(math.log(4), rel=1e-12)

    def test_confident_predictions_clamped(self):
        d = Dataset(np.array([[1.0], [1.0], [-1.0], [-1.0]]), [1, 1, 0, 0], ["x"])
        m = model_with(0.0, [1e4], [0])
        ce = cross_entropy(m, d, range(4))
        assert 0 < ce < 4 * 1.1e-12

    def test_wrong_confident_is_finite(self):
        d = Dataset(np.array([[1.0], [1.0], [-1.0], [-1.0]]), [0, 0, 1, 1], ["x"])
        ce = cross_entropy(model_with(0.0, [1e4], [0]), d, range(4))
        # two rows hit the lower clamp, two the upper; 1 - (1 - 1e-12) != 1e-12 in floats
        expected = -2 * math.log(1e-12) - 2 * math.log(1.0 - (1.0 - 1e-12))
        assert ce == pytest.approx(expected, rel=1e-12)

    def test_dimension_mismatch(self):
        d = Dataset(np.zeros((4, 1)), [1, 0, 0, 1], ["x"])
        with pytest.raises(DatasetError):
            cross_entropy(model_with(0.0, [1.0], [3]), d, range(4))


class TestAuc:
    def test_perfect(self):
        assert auc(ScoredPredictions([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])) == 1.0

    def test_pair_counting_example(self):
        assert auc(ScoredPredictions([0.1, 0.4, 0.4, 0.8], [0, 0, 1, 1])) == 0.875

    def test_all_ties(self):
        assert auc(ScoredPredictions([0.3] * 6, [0, 1, 0, 1, 1, 0])) == 0.5

    def test_single_class(self):
        with pytest.raises(ValueError):
            auc(ScoredPredictions([0.1, 0.2], [1, 1]))

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 1)), min_size=2, max_size=40))
    def test_matches_pairs_and_trapezoid(self, pairs):
        scores = [s / 6 for s, _ in pairs]
        labels = [l for _, l in pairs]
        if len(set(labels)) < 2:
            return
        a = auc(ScoredPredictions(scores, labels))
        assert a == pytest.approx(pair_count_auc(scores, labels), abs=1e-12)
        assert a == pytest.approx(trapezoid_roc_auc(scores, labels), abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        s = np.round(rng.random(30), 1)
        y = np.arange(30) % 2
        a = auc(ScoredPredictions(s, y))
        assert auc(ScoredPredictions(np.exp(3 * s) - 7, y)) == a
        assert auc(ScoredPredictions(s ** 3, y)) == a

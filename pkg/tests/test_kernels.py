"""The numba and numpy backends must agree; the loop kernels are also run uncompiled."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safdr import kernels

needs_numba = pytest.mark.skipif(kernels._NUMBA is None, reason="numba unavailable")


def random_problem(rng, K=8, k=4):
    A = rng.normal(size=(K + 3, K))
    sw = A.T @ A / (K + 3)
    return rng.normal(size=K), sw, np.sort(rng.choice(K, k, replace=False))


class TestFdrKernels:
    def test_loop_matches_lapack(self):
        rng = np.random.default_rng(0)
        L, z = np.empty((10, 10)), np.empty(10)
        for _ in range(200):
            K = int(rng.integers(1, 11))
            delta, sw, idx = random_problem(rng, K, int(rng.integers(1, K + 1)))
            a = kernels._fdr_loop(delta, sw, idx, 1e-8, L, z)
            b = kernels._fdr_lapack(delta, sw, idx, 1e-8, L, z)
            assert a == pytest.approx(b, rel=1e-10)

    @needs_numba
    def test_compiled_matches_python(self):
        rng = np.random.default_rng(1)
        L, z = np.empty((8, 8)), np.empty(8)
        for _ in range(100):
            delta, sw, idx = random_problem(rng)
            assert kernels._NUMBA["fdr"](delta, sw, idx, 1e-8, L, z) == pytest.approx(
                kernels._fdr_loop(delta, sw, idx, 1e-8, L, z), rel=1e-12)

    def test_ridge_only_when_needed(self):
        sw = np.array([[1.0, 1.0], [1.0, 1.0]])
        idx = np.array([0, 1])
        L, z = np.empty((2, 2)), np.empty(2)
        for fn in (kernels._fdr_loop, kernels._fdr_lapack):
            assert np.isfinite(fn(np.array([1.0, 1.0]), sw, idx, 1e-8, L, z))
            assert np.isnan(fn(np.ones(2), np.zeros((2, 2)), idx, 1e-8, L, z))
        chol, lam = kernels.regularised_cholesky(np.eye(3), 1e-8)
        assert lam == 0.0 and np.array_equal(chol, np.eye(3))
        chol, lam = kernels.regularised_cholesky(sw, 1e-8)
        assert lam == pytest.approx(1e-8)
        np.testing.assert_allclose(chol @ chol.T, sw + lam * np.eye(2), atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=12, unique=True).map(sorted),
       st.data())
def test_replace_sorted(src, data):
    value = data.draw(st.integers(0, 50).filter(lambda v: v not in src))
    pos = data.draw(st.integers(0, len(src) - 1))
    out = np.empty(len(src), np.int64)
    kernels._replace_sorted(np.array(src), pos, value, out)
    assert out.tolist() == sorted(src[:pos] + src[pos + 1:] + [value])


class TestLogisticKernels:
    def test_loss_grad_loop_matches_vectorised(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n, p = int(rng.integers(2, 60)), int(rng.integers(1, 8))
            X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))]) if p > 1 \
                else np.ones((n, 1))
            y = rng.integers(0, 2, n).astype(float)
            beta = 3 * rng.normal(size=p)
            g1, g2 = np.empty(p), np.empty(p)
            f1 = kernels._loss_grad_loop(X, y, beta, g1)
            f2 = kernels._loss_grad_vec(X, y, beta, g2)
            assert f1 == pytest.approx(f2, rel=1e-12)
            np.testing.assert_allclose(g1, g2, rtol=1e-10, atol=1e-12)

    def test_extreme_margins_finite(self):
        X = np.array([[1.0, 1000.0], [1.0, -1000.0]])
        y = np.array([0.0, 1.0])
        g = np.empty(2)
        for fn in (kernels._loss_grad_loop, kernels._loss_grad_vec):
            f = fn(X, y, np.array([0.0, 1.0]), g)
            assert np.isfinite(f) and np.all(np.isfinite(g))

    def test_sigmoid_stable(self):
        s = kernels.sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        np.testing.assert_array_equal(s, [0.0, 0.5, 1.0])

    @needs_numba
    @pytest.mark.parametrize("name", ["bfgs", "fista"])
    def test_solvers_agree(self, name):
        rng = np.random.default_rng(3)
        X = np.column_stack([np.ones(150), rng.normal(size=(150, 5))])
        y = (X @ rng.normal(size=6) + rng.normal(size=150) > 0).astype(float)
        if name == "bfgs":
            args = (X, y, 500, 1e-8)
        else:
            args = (X, y, 0.5, np.zeros(6), 5000, 1e-9)
        a = kernels._NUMBA[name](*args)
        b = kernels._NUMPY[name](*args)
        assert a[1] and b[1]
        np.testing.assert_allclose(a[0], b[0], rtol=1e-6, atol=1e-7)


class TestBackendSwitch:
    def test_set_and_restore(self):
        prev = kernels.set_backend("numpy")
        try:
            assert kernels.BACKEND == "numpy"
            assert kernels.get("fdr") is kernels._fdr_lapack
        finally:
            kernels.set_backend(prev)

    def test_unknown(self):
        with pytest.raises(ValueError):
            kernels.set_backend("cuda")

    def test_env_flag(self):
        env = dict(os.environ, SAFDR_NO_NUMBA="1")
        code = "from safdr import kernels, _numba; print(kernels.BACKEND, _numba.HAVE_NUMBA)"
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        assert out == ["numpy", "False"]


def test_benchmark_cases_run():
    import importlib.util
    from pathlib import Path
    path = Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    bench = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(bench)
    prev = kernels.BACKEND
    try:
        for backend in ("numpy", "numba") if kernels._NUMBA is not None else ("numpy",):
            kernels.set_backend(backend)
            cases = bench.make_cases(np.random.default_rng(0))
            assert len(cases) == 7
            for fn in cases.values():
                fn()
    finally:
        kernels.set_backend(prev)

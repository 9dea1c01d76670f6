"""Time every hot kernel under the numba and numpy backends.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Problem sizes mirror the bundled SPECTF Heart data (44 features, ~160
fold-train rows) and the default annealer settings.
"""
import argparse
import json
import timeit

import numpy as np

from safdr import kernels
from safdr.annealer import AnnealConfig
from safdr.scatter import RIDGE_REL


def make_cases(rng):
    K, n, R, B = 44, 160, 50, 8
    X = rng.normal(size=(n, K))
    y = (X[:, :3].sum(axis=1) + rng.normal(size=n) > 0).astype(float)
    design = np.column_stack([np.ones(n), X[:, :10]])
    A = rng.normal(size=(B, K + 20, K))
    sw = np.einsum("bij,bik->bjk", A, A) / (K + 20)
    mu = rng.normal(size=(B, K))
    L, z = np.empty((K, K)), np.empty(K)
    P = AnnealConfig().proposals_per_temp(K)

    def fdr(k):
        idx = np.sort(rng.choice(K, k, replace=False))
        return lambda: kernels.get("fdr")(mu[0], sw[0], idx, RIDGE_REL, L, z)

    def temperature(k):
        members = np.array([np.sort(rng.choice(K, k, replace=False)) for _ in range(R)])
        nonmembers = np.array([np.setdiff1d(np.arange(K), m) for m in members])
        draws = (rng.integers(0, k, (R, P)), rng.integers(0, K - k, (R, P)),
                 rng.integers(0, B, (R, P)), rng.random((R, P)))

        def run():
            kernels.get("temperature_step")(
                members.copy(), nonmembers.copy(), np.full((R, B), np.nan), np.zeros(R),
                np.zeros(R, np.int64), 1.0, *draws, mu, sw, RIDGE_REL, np.zeros(R, np.int64))
        return run

    grad = np.empty(design.shape[1])
    return {
        "fdr k=5": fdr(5),
        "fdr k=30": fdr(30),
        "temperature k=5 (50 replicas)": temperature(5),
        "temperature k=30 (50 replicas)": temperature(30),
        "loss_grad p=11": lambda: kernels.get("loss_grad")(design, y, np.zeros(11), grad),
        "bfgs p=11": lambda: kernels.get("bfgs")(design, y, 500, 1e-6),
        "fista p=11": lambda: kernels.get("fista")(design, y, 2.0, np.zeros(11), 2000, 1e-6),
    }


def bench(repeat):
    results = {}
    for backend in ("numba", "numpy"):
        if backend == "numba" and kernels._NUMBA is None:
            continue
        kernels.set_backend(backend)
        for name, fn in make_cases(np.random.default_rng(0)).items():
            fn()  # compile / warm caches
            timer = timeit.Timer(fn)
            number, _ = timer.autorange()
            best = min(timer.repeat(repeat, number)) / number
            results.setdefault(name, {})[backend] = best
    return results


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args()
    results = bench(args.repeat)
    print(f"{'kernel':<32} {'numba':>12} {'numpy':>12} {'speed-up':>9}")
    for name, t in results.items():
        nb, npy = t.get("numba", float("nan")), t["numpy"]
        print(f"{name:<32} {nb * 1e6:>10.1f}us {npy * 1e6:>10.1f}us {npy / nb:>8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()

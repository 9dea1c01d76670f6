"""Cross-validated choice of the subset size and the repeated benchmark driver.

For every repetition the data are split 80/20 into train and test, the train
part is split five times 75/25 into fold-train and validation, and every
selector is scanned over k (or C for the L1 path) on each fold. The smallest
k whose mean validation AUC lies within one standard deviation of the best
mean is taken as k*, the selector is rerun on the whole train part, and the
resulting logistic model is scored on the test part.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, logistic
from .annealer import AnnealConfig, anneal
from .dataset import N_FOLDS, apply_standardiser, fit_standardiser, stratified_split

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
METHODS = ("sa-fdr", "rfe", "lasso")
_METHOD_CODE = {m: i for i, m in enumerate(METHODS)}
FINAL_FOLD = N_FOLDS  # seed slot of the refit on the whole train partition


@dataclass(frozen=True)
class CvConfig:
    anneal: AnnealConfig = field(default_factory=AnnealConfig)
    c_grid: tuple = baselines.DEFAULT_C_GRID
    standardise_on: str = "train"
    std_rule: str = "argmax"
    threads: int = 1

    def __post_init__(self):
        if self.standardise_on not in ("train", "test", "all"):
            raise ValueError("standardise_on must be train, test or all")
        if self.std_rule not in ("argmax", "per_k"):
            raise ValueError("std_rule must be argmax or per_k")
        if self.threads < 1:
            raise ValueError("threads must be positive")


def one_std_index(means, stds, rule="argmax"):
    """Index of the first entry within one standard deviation of the best mean.

    ``rule="argmax"`` uses the spread at the best entry, ``"per_k"`` the spread
    of each candidate. Ties for the best mean go to the first entry.
    """
    means = np.asarray(means, float)
    stds = np.asarray(stds, float)
    if means.size == 0:
        raise ValueError("empty scan")
    best = int(np.argmax(means))
    if rule == "argmax":
        ok = means >= means[best] - stds[best]
    else:
        ok = means >= means[best] - stds
    return int(np.flatnonzero(ok)[0])


@dataclass(eq=False)
class CvScan:
    """Validation AUC for every (scan value, fold).

    ``axis`` is ``"k"`` for fixed-size selectors and ``"C"`` for the L1
    path, in which case ``support_sizes`` holds the selected-feature counts
    and k* is their fold mean at the chosen C.
    """

    axis: str
    values: tuple
    fold_auc: np.ndarray
    failed: np.ndarray
    support_sizes: np.ndarray | None = None
    std_rule: str = "argmax"

    @property
    def mean_auc(self):
        return self.fold_auc.mean(axis=1)

    @property
    def std_auc(self):
        return self.fold_auc.std(axis=1)

    @property
    def selected_index(self):
        return one_std_index(self.mean_auc, self.std_auc, self.std_rule)

    @property
    def selected_value(self):
        return self.values[self.selected_index]

    @property
    def k_star(self):
        if self.axis == "k":
            return float(self.selected_value)
        return float(self.support_sizes[self.selected_index].mean())

    def to_dict(self):
        d = {
            "axis": self.axis,
            "values": list(self.values),
            "fold_auc": self.fold_auc.tolist(),
            "failed": self.failed.tolist(),
            "mean_auc": self.mean_auc.tolist(),
            "std_auc": self.std_auc.tolist(),
            "std_rule": self.std_rule,
            "selected_index": self.selected_index,
            "selected_value": self.selected_value,
            "k_star": self.k_star,
        }
        if self.support_sizes is not None:
            d["support_sizes"] = self.support_sizes.tolist()
        return d

    def table(self):
        """One (value, fold, auc, failed[, support]) row per cell."""
        out = []
        for i, v in enumerate(self.values):
            for f in range(self.fold_auc.shape[1]):
                row = {self.axis: v, "fold": f, "val_auc": float(self.fold_auc[i, f]),
                       "failed": bool(self.failed[i, f])}
                if self.support_sizes is not None:
                    row["support"] = int(self.support_sizes[i, f])
                out.append(row)
        return out


def select_k_star(scan):
    return scan.k_star if scan.axis == "C" else int(scan.selected_value)


@dataclass(eq=False)
class RepetitionResult:
    method: str
    repetition: int
    seed: int
    k_star: float
    selected_value: float
    test_auc: float
    fold_seconds: list
    final_subset: tuple
    final_features: tuple
    scan: CvScan

    def to_dict(self, include_scan=True):
        d = {
            "method": self.method,
            "repetition": self.repetition,
            "seed": self.seed,
            "k_star": self.k_star,
            "selected_value": self.selected_value,
            "test_auc": self.test_auc,
            "fold_seconds": list(self.fold_seconds),
            "final_subset": list(self.final_subset),
            "final_features": list(self.final_features),
        }
        if include_scan:
            d["scan"] = self.scan.to_dict()
        return d


@dataclass(eq=False)
class BenchmarkReport:
    rows: list = field(default_factory=list)

    @property
    def methods(self):
        return list(dict.fromkeys(r.method for r in self.rows))

    def for_method(self, method):
        return [r for r in self.rows if r.method == method]

    def aggregates(self):
        out = {}
        for m in self.methods:
            rs = self.for_method(m)
            out[m] = {
                "repetitions": len(rs),
                "mean_k_star": float(np.mean([r.k_star for r in rs])),
                "mean_test_auc": float(np.mean([r.test_auc for r in rs])),
                "mean_fold_seconds": float(np.mean([np.mean(r.fold_seconds) for r in rs])),
            }
        return out

    def to_dict(self, include_scans=True):
        return {
            "schema_version": SCHEMA_VERSION,
            "aggregates": self.aggregates(),
            "repetitions": [r.to_dict(include_scans) for r in self.rows],
        }


def derive_seed(*parts):
    """Stable 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def split_seed(seed, repetition):
    return derive_seed(seed, repetition)


def _notify(observer, stage, rows):
    if observer is not None:
        observer(stage, np.asarray(rows))


def _validation_auc(data, fit_rows, val_rows, subset, observer):
    _notify(observer, "fit", fit_rows)
    model = logistic.fit(data, fit_rows, subset)
    _notify(observer, "evaluate", val_rows)
    return logistic.auc(logistic.score(model, data, val_rows))


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(fn, items))


def _safe(fn, label):
    try:
        return fn(), False
    except Exception as exc:  # noqa: BLE001 - recorded as a flagged cell, never dropped
        log.warning("cell %s failed: %s", label, exc)
        return 0.5, True


def _scan_fixed_k(data, plan, method, ks, cfg, seed, repetition, observer):
    code = _METHOD_CODE[method]
    auc = np.full((len(ks), N_FOLDS), 0.5)
    failed = np.zeros((len(ks), N_FOLDS), bool)
    seconds = np.zeros(N_FOLDS)

    if method == "sa-fdr":
        def cell(job):
            i, f = job
            tr, va = plan.folds[f]
            acfg = replace(cfg.anneal, seed=derive_seed(seed, repetition, f, ks[i], code))

            def run():
                _notify(observer, "select", tr)
                res = anneal(data, tr, ks[i], acfg)
                return _validation_auc(data, tr, va, res.best_subset.indices, observer)

            t0 = time.perf_counter()
            value, bad = _safe(run, f"{method} k={ks[i]} fold={f}")
            return i, f, value, bad, time.perf_counter() - t0

        jobs = [(i, f) for f in range(N_FOLDS) for i in range(len(ks))]
        for i, f, value, bad, dt in _map(cell, jobs, cfg.threads):
            auc[i, f], failed[i, f] = value, bad
            seconds[f] += dt
    else:
        def fold_job(f):
            tr, va = plan.folds[f]
            t0 = time.perf_counter()
            out = []
            try:
                _notify(observer, "select", tr)
                order = baselines.rfe(data, tr)
            except Exception as exc:  # noqa: BLE001
                log.warning("RFE failed on fold %d: %s", f, exc)
                return f, [(0.5, True)] * len(ks), time.perf_counter() - t0
            for k in ks:
                out.append(_safe(lambda: _validation_auc(data, tr, va, order.subset_for(k), observer),
                                 f"{method} k={k} fold={f}"))
            return f, out, time.perf_counter() - t0

        for f, out, dt in _map(fold_job, range(N_FOLDS), cfg.threads):
            for i, (value, bad) in enumerate(out):
                auc[i, f], failed[i, f] = value, bad
            seconds[f] = dt

    scan = CvScan("k", tuple(int(k) for k in ks), auc, failed, std_rule=cfg.std_rule)
    return scan, seconds


def _scan_lasso(data, plan, cfg, observer):
    grid = tuple(cfg.c_grid)
    auc = np.full((len(grid), N_FOLDS), 0.5)
    failed = np.zeros((len(grid), N_FOLDS), bool)
    sizes = np.zeros((len(grid), N_FOLDS), np.int64)
    seconds = np.zeros(N_FOLDS)

    def fold_job(f):
        tr, va = plan.folds[f]
        t0 = time.perf_counter()
        _notify(observer, "select", tr)
        path = baselines.l1_path(data, tr, grid)
        out = []
        for i in range(len(grid)):
            support = path.support(i)
            value, bad = _safe(lambda: _validation_auc(data, tr, va, support, observer),
                               f"lasso C={grid[i]:.3g} fold={f}")
            out.append((value, bad, len(support)))
        return f, out, time.perf_counter() - t0

    for f, out, dt in _map(fold_job, range(N_FOLDS), cfg.threads):
        for i, (value, bad, n) in enumerate(out):
            auc[i, f], failed[i, f], sizes[i, f] = value, bad, n
        seconds[f] = dt
    return CvScan("C", grid, auc, failed, sizes, cfg.std_rule), seconds


def standardise_for(data, plan, standardise_on, observer=None):
    ref = {"train": plan.train_idx, "test": plan.test_idx,
           "all": np.arange(data.n_samples)}[standardise_on]
    _notify(observer, "standardise", ref)
    return apply_standardiser(data, fit_standardiser(data, ref))


def run_cv(data, method, k_max=30, cfg=None, seed=0, repetition=0, observer=None):
    """One repetition of the cross-validation protocol for one selector.

    ``observer(stage, rows)`` is told about every index set handed to the
    standardiser fit (``"standardise"``), a selector (``"select"``), a
    logistic fit (``"fit"``) or a scoring call (``"evaluate"``).
    Returns ``(scan, RepetitionResult)``.
    """
    cfg = cfg or CvConfig()
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    plan = stratified_split(data, split_seed(seed, repetition))
    data = standardise_for(data, plan, cfg.standardise_on, observer)
    train, test = plan.train_idx, plan.test_idx
    ks = list(range(1, min(int(k_max), data.n_features) + 1))
    if not ks:
        raise ValueError("k_max must be at least 1")

    if method == "lasso":
        scan, seconds = _scan_lasso(data, plan, cfg, observer)
        idx = scan.selected_index
        _notify(observer, "select", train)
        path = baselines.l1_path(data, train, cfg.c_grid[: idx + 1])
        subset = path.support(idx)
    else:
        scan, seconds = _scan_fixed_k(data, plan, method, ks, cfg, seed, repetition, observer)
        k = int(scan.selected_value)
        _notify(observer, "select", train)
        if method == "sa-fdr":
            acfg = replace(cfg.anneal, seed=derive_seed(seed, repetition, FINAL_FOLD, k,
                                                        _METHOD_CODE[method]))
            subset = anneal(data, train, k, acfg).best_subset.indices
        else:
            subset = baselines.rfe(data, train).subset_for(k)

    test_auc = _validation_auc(data, train, test, subset, observer)
    result = RepetitionResult(
        method=method, repetition=repetition, seed=int(seed), k_star=scan.k_star,
        selected_value=scan.selected_value, test_auc=test_auc,
        fold_seconds=seconds.tolist(), final_subset=tuple(subset),
        final_features=tuple(data.feature_names[j] for j in subset), scan=scan)
    return scan, result


def run_benchmark(data, methods=METHODS, repetitions=20, k_max=30, cfg=None, seed=0,
                  observer=None, progress=None):
    """``repetitions`` paired runs of :func:`run_cv` for each method.

    All methods see the same split in a given repetition.
    """
    if not 1 <= repetitions <= 20:
        raise ValueError("repetitions must be between 1 and 20")
    report = BenchmarkReport()
    for rep in range(repetitions):
        for method in methods:
            _, row = run_cv(data, method, k_max, cfg, seed, rep, observer)
            report.rows.append(row)
            if progress is not None:
                progress(row)
    return report

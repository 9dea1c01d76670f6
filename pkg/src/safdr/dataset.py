"""Tabular ingestion, standardisation and stratified splitting."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

N_FOLDS = 5
TEST_FRACTION = 0.20
VAL_FRACTION = 0.25


class DatasetError(ValueError):
    """Malformed or unusable input data."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Binary classification data: ``samples`` (N, K), ``labels`` in {0, 1}.

    ``label_values`` records which original target values were mapped to 0
    and 1, and ``constant`` flags zero-variance features once a standardiser
    has been applied.
    """

    samples: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    label_values: tuple = ("0", "1")
    constant: np.ndarray | None = None

    def __post_init__(self):
        X = _frozen(self.samples, float)
        y = _frozen(self.labels, np.int64)
        if X.ndim != 2:
            raise DatasetError("samples must be a 2-D array")
        if y.shape != (X.shape[0],):
            raise DatasetError(f"{y.shape[0]} labels for {X.shape[0]} samples")
        if not np.all((y == 0) | (y == 1)):
            raise DatasetError("labels must be 0 or 1")
        if not np.all(np.isfinite(X)):
            raise DatasetError("samples contain non-finite values")
        names = tuple(str(n) for n in self.feature_names)
        if len(names) != X.shape[1]:
            raise DatasetError(f"{len(names)} feature names for {X.shape[1]} features")
        if len(set(names)) != len(names):
            raise DatasetError("feature names must be unique")
        n1 = int(y.sum())
        if n1 < 2 or X.shape[0] - n1 < 2:
            raise DatasetError("each class needs at least 2 samples")
        constant = self.constant
        constant = _frozen(np.zeros(X.shape[1], bool) if constant is None else constant, bool)
        object.__setattr__(self, "samples", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "label_values", tuple(str(v) for v in self.label_values))
        object.__setattr__(self, "constant", constant)

    @property
    def n_samples(self):
        return self.samples.shape[0]

    @property
    def n_features(self):
        return self.samples.shape[1]

    @property
    def class_counts(self):
        n1 = int(self.labels.sum())
        return (self.n_samples - n1, n1)

    def replace(self, **changes):
        kw = dict(samples=self.samples, labels=self.labels, feature_names=self.feature_names,
                  label_values=self.label_values, constant=self.constant)
        kw.update(changes)
        return Dataset(**kw)


def _label_order(values):
    # numeric targets map in numeric order, everything else lexicographically
    try:
        return sorted(values, key=float)
    except ValueError:
        return sorted(values)


def load_csv(path, target_column, drop_missing=False):
    """Read a comma-separated file with a header row into a :class:`Dataset`.

    Every column other than ``target_column`` must be numeric. Empty cells and
    NaN/inf are "missing": those rows are dropped when ``drop_missing`` is set,
    otherwise they are an error.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetError(f"{path} is empty") from None
        if target_column not in header:
            raise DatasetError(f"target column {target_column!r} not in header")
        t = header.index(target_column)
        names = [h for i, h in enumerate(header) if i != t]
        rows, targets = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DatasetError(f"line {lineno}: expected {len(header)} fields, got {len(rec)}")
            target = rec[t].strip()
            values = []
            for i, cell in enumerate(rec):
                if i == t:
                    continue
                cell = cell.strip()
                if cell == "" or cell.lower() in ("na", "nan", "?"):
                    values.append(math.nan)
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DatasetError(
                        f"line {lineno}: non-numeric value {cell!r} in column {header[i]!r}"
                    ) from None
            rows.append(values)
            targets.append(target)

    X = np.array(rows, dtype=float).reshape(len(rows), len(names))
    targets = np.array(targets, dtype=object)
    bad = ~np.all(np.isfinite(X), axis=1) | (targets == "")
    if bad.any():
        if not drop_missing:
            raise DatasetError(f"{int(bad.sum())} rows with missing values (use drop_missing)")
        X, targets = X[~bad], targets[~bad]
    if X.shape[0] == 0:
        raise DatasetError("dataset is empty after cleaning")
    classes = _label_order(set(targets.tolist()))
    if len(classes) != 2:
        raise DatasetError(f"binary target required, found {len(classes)} classes")
    y = (targets == classes[1]).astype(np.int64)
    return Dataset(X, y, names, label_values=tuple(classes))


def drop_correlated(data, threshold):
    """Drop features whose |Pearson r| with an earlier kept feature exceeds ``threshold``."""
    X = data.samples
    sd = X.std(axis=0)
    kept = []
    for j in range(X.shape[1]):
        ok = True
        for i in kept:
            if sd[i] == 0 or sd[j] == 0:
                continue
            r = np.mean((X[:, i] - X[:, i].mean()) * (X[:, j] - X[:, j].mean())) / (sd[i] * sd[j])
            if abs(r) > threshold:
                ok = False
                break
        if ok:
            kept.append(j)
    return data.replace(samples=X[:, kept], feature_names=[data.feature_names[j] for j in kept],
                        constant=data.constant[kept])


# ---------------------------------------------------------------------------
# Standardisation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StandardisationParams:
    means: np.ndarray
    std_devs: np.ndarray
    constant: np.ndarray

    def apply(self, X):
        return (np.asarray(X, float) - self.means) / self.std_devs

    def invert(self, Z):
        return np.asarray(Z, float) * self.std_devs + self.means


def fit_standardiser(data, reference_idx):
    """Per-feature mean and population standard deviation over ``reference_idx``.

    Zero-variance features are flagged in ``constant`` and get a unit scale.
    """
    ref = np.asarray(reference_idx, dtype=np.int64)
    if ref.size == 0:
        raise DatasetError("standardiser reference set is empty")
    X = data.samples[ref]
    means = X.mean(axis=0)
    sd = X.std(axis=0)
    constant = ~(sd > 1e-12 * np.maximum(1.0, np.abs(means)))
    sd = np.where(constant, 1.0, sd)
    return StandardisationParams(_frozen(means, float), _frozen(sd, float), _frozen(constant, bool))


def apply_standardiser(data, params):
    if params.means.shape[0] != data.n_features:
        raise DatasetError(
            f"standardiser has {params.means.shape[0]} features, data has {data.n_features}")
    return data.replace(samples=params.apply(data.samples), constant=params.constant)


# ---------------------------------------------------------------------------
# Train / test / fold splitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SplitPlan:
    train_idx: np.ndarray
    test_idx: np.ndarray
    folds: tuple
    seed: int = 0

    def to_dict(self):
        return {
            "seed": int(self.seed),
            "train_idx": self.train_idx.tolist(),
            "test_idx": self.test_idx.tolist(),
            "folds": [{"train": tr.tolist(), "val": va.tolist()} for tr, va in self.folds],
        }

    @classmethod
    def from_dict(cls, d):
        folds = tuple((_frozen(f["train"], np.int64), _frozen(f["val"], np.int64)) for f in d["folds"])
        return cls(_frozen(d["train_idx"], np.int64), _frozen(d["test_idx"], np.int64), folds, d["seed"])

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    def __eq__(self, other):
        if not isinstance(other, SplitPlan):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def _stratified_holdout(labels, idx, fraction, rng):
    """Split ``idx`` into (keep, holdout) with ``fraction`` of each class held out."""
    keep, hold = [], []
    for c in (0, 1):
        members = idx[labels[idx] == c]
        members = members[rng.permutation(members.size)]
        n_hold = _round_half_up(fraction * members.size)
        hold.append(members[:n_hold])
        keep.append(members[n_hold:])
    return np.sort(np.concatenate(keep)), np.sort(np.concatenate(hold))


def stratified_split(data, seed):
    """80/20 stratified train/test split plus five stratified 75/25 train/validation folds.

    The folds are independent shuffles of the train partition, each of which
    partitions it exactly.
    """
    n0, n1 = data.class_counts
    if min(n0, n1) < 10:
        raise DatasetError(f"stratification needs at least 10 samples per class, got {(n0, n1)}")
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    all_idx = np.arange(data.n_samples)
    train, test = _stratified_holdout(data.labels, all_idx, TEST_FRACTION, rng)
    folds = []
    for _ in range(N_FOLDS):
        tr, va = _stratified_holdout(data.labels, train, VAL_FRACTION, rng)
        folds.append((_frozen(tr, np.int64), _frozen(va, np.int64)))
    return SplitPlan(_frozen(train, np.int64), _frozen(test, np.int64), tuple(folds), int(seed))

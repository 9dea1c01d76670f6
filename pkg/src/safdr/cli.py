"""Command-line front end: ``safdr select|cv|bench``.

Settings come from defaults, then an optional JSON ``--config`` file, then
flags; later sources win. Every result file embeds the resolved config so a
run can be repeated from its own output.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, baselines, logistic
from .annealer import AnnealConfig, anneal
from .dataset import drop_correlated, load_csv, stratified_split
from .selection import (
    METHODS,
    SCHEMA_VERSION,
    CvConfig,
    run_benchmark,
    run_cv,
    split_seed,
    standardise_for,
)

log = logging.getLogger("safdr")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

COMMANDS = ("select", "cv", "bench")
SEED_ENV = "SAFDR_SEED"


class ConfigError(ValueError):
    pass


_ANNEAL_FIELDS = tuple(f.name for f in fields(AnnealConfig) if f.name != "seed")


@dataclass(frozen=True)
class RunConfig:
    command: str
    data: str
    target: str
    methods: tuple = ("sa-fdr",)
    k: int | None = None
    k_max: int | None = None
    repetitions: int = 20
    seed: int = 0
    n_replicas: int = 50
    sweeps_per_temp: float = 0.5
    step: float = 0.7
    max_temp_steps: int = 100
    n_batches: int = 8
    convergence_window: int = 5
    convergence_rel_tol: float = 1e-4
    batch_granularity: str = "proposal"
    c_grid: tuple | None = None
    standardise_on: str = "train"
    std_rule: str = "argmax"
    drop_missing: bool = False
    corr_threshold: float | None = None
    threads: int = 1
    out: str | None = None
    verbosity: int = 0

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.c_grid is not None:
            object.__setattr__(self, "c_grid", tuple(float(c) for c in self.c_grid))
        self.validate()

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"command must be one of {COMMANDS}")
        if not self.data or not self.target:
            raise ConfigError("--data and --target are required")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ConfigError(f"methods must be drawn from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("duplicate method")
        if self.command == "select":
            if self.k_max is not None:
                raise ConfigError("select takes --k, not --k-max")
            if self.k is None or self.k < 1:
                raise ConfigError("select needs --k >= 1")
            if len(self.methods) != 1 or self.methods[0] == "lasso":
                raise ConfigError("select runs exactly one of sa-fdr or rfe")
        else:
            if self.k is not None:
                raise ConfigError(f"{self.command} takes --k-max, not --k")
            if self.k_max is not None and self.k_max < 1:
                raise ConfigError("--k-max must be at least 1")
        if not 1 <= self.repetitions <= 20:
            raise ConfigError("repetitions must be between 1 and 20")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.corr_threshold is not None and not 0 < self.corr_threshold <= 1:
            raise ConfigError("corr_threshold must lie in (0, 1]")
        try:
            self.anneal_config()
            self.cv_config()
            if self.c_grid is not None:
                if min(self.c_grid) <= 0 or list(self.c_grid) != sorted(set(self.c_grid)):
                    raise ValueError("c_grid must be positive and strictly increasing")
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def anneal_config(self):
        return AnnealConfig(seed=self.seed, **{f: getattr(self, f) for f in _ANNEAL_FIELDS})

    def cv_config(self):
        extra = {} if self.c_grid is None else {"c_grid": self.c_grid}
        return CvConfig(anneal=self.anneal_config(), standardise_on=self.standardise_on,
                        std_rule=self.std_rule, threads=self.threads, **extra)

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["methods"] = list(self.methods)
        if self.c_grid is not None:
            d["c_grid"] = list(self.c_grid)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

_FLAG_TO_FIELD = {
    "replicas": "n_replicas", "sweeps": "sweeps_per_temp", "epsilon": "step",
    "temp_steps": "max_temp_steps", "batches": "n_batches", "method": "methods",
}


def _methods(text):
    return tuple(m.strip() for m in text.split(",") if m.strip())


def build_parser():
    p = argparse.ArgumentParser(prog="safdr", description="Feature selection by simulated "
                                "annealing on the Fisher discriminant ratio.")
    p.add_argument("--version", action="version", version=f"safdr {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {"select": "anneal once for a fixed k on the train split",
             "cv": "one repetition of the cross-validated scan over k",
             "bench": "repeated paired benchmark of several selectors"}
    for name in COMMANDS:
        s = sub.add_parser(name, help=helps[name])
        # defaults are None so that only flags actually given override the config file
        s.add_argument("--config", help="JSON file with RunConfig keys")
        s.add_argument("--data", help="CSV file with a header row")
        s.add_argument("--target", help="name of the binary target column")
        s.add_argument("--method", type=_methods, help="comma list of sa-fdr, rfe, lasso")
        size = s.add_mutually_exclusive_group()
        size.add_argument("--k", type=int)
        size.add_argument("--k-max", type=int, dest="k_max")
        s.add_argument("--seed", type=int, help=f"falls back to ${SEED_ENV}, then 0")
        s.add_argument("--replicas", type=int)
        s.add_argument("--sweeps", type=float, help="sweeps per temperature N_S")
        s.add_argument("--epsilon", type=float, help="inverse-temperature step")
        s.add_argument("--temp-steps", type=int, dest="temp_steps")
        s.add_argument("--batches", type=int)
        s.add_argument("--granularity", dest="batch_granularity", choices=("proposal", "sweep"))
        s.add_argument("--standardise-on", dest="standardise_on",
                       choices=("train", "test", "all"))
        s.add_argument("--std-rule", dest="std_rule", choices=("argmax", "per_k"))
        s.add_argument("--repetitions", type=int)
        s.add_argument("--drop-missing", dest="drop_missing", action="store_true", default=None)
        s.add_argument("--corr-threshold", dest="corr_threshold", type=float)
        s.add_argument("--threads", type=int)
        s.add_argument("--out", help="result JSON path (stdout when omitted)")
        s.add_argument("-v", "--verbose", dest="verbosity", action="count", default=None)
    return p


def resolve_config(args, environ=None):
    environ = os.environ if environ is None else environ
    values = {}
    if args.config:
        with open(args.config) as fh:
            values = json.load(fh)
        if not isinstance(values, dict):
            raise ConfigError("config file must hold a JSON object")
        values.pop("command", None)
    for key, value in vars(args).items():
        if key == "config" or value is None:
            continue
        values[_FLAG_TO_FIELD.get(key, key)] = value
    # --k and --k-max are exclusive on the command line; a flag displaces the file's other one
    if args.k is not None:
        values.pop("k_max", None)
    if args.k_max is not None:
        values.pop("k", None)
    if "seed" not in values and SEED_ENV in environ:
        try:
            values["seed"] = int(environ[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"${SEED_ENV} must be an integer") from exc
    values.setdefault("data", "")
    values.setdefault("target", "")
    return RunConfig.from_dict(values)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _load(cfg):
    data = load_csv(cfg.data, cfg.target, drop_missing=cfg.drop_missing)
    if cfg.corr_threshold is not None:
        before = data.n_features
        data = drop_correlated(data, cfg.corr_threshold)
        log.info("dropped %d correlated features", before - data.n_features)
    log.info("loaded %d samples, %d features, classes %s", data.n_samples, data.n_features,
             data.class_counts)
    return data


def _envelope(cfg, result):
    return {"schema_version": SCHEMA_VERSION, "command": cfg.command, "config": cfg.to_dict(),
            "result": result}


def _sibling(out, suffix):
    out = Path(out)
    return out.with_name(out.stem + suffix)


def cmd_select(cfg):
    data = _load(cfg)
    if cfg.k > data.n_features:
        raise ConfigError(f"k={cfg.k} exceeds the {data.n_features} available features")
    plan = stratified_split(data, split_seed(cfg.seed, 0))
    data = standardise_for(data, plan, cfg.standardise_on)
    train, test = plan.train_idx, plan.test_idx
    method = cfg.methods[0]
    extra = {}
    if method == "sa-fdr":
        res = anneal(data, train, cfg.k, cfg.anneal_config(), threads=cfg.threads)
        model = res.best_model
        extra = {
            "stop_reason": res.stop_reason,
            "sigma0": res.schedule.sigma0,
            "beta_increment": res.schedule.increment,
            "replicas": [{"subset": list(o.subset.indices), "fdr": o.fdr,
                          "cross_entropy": o.cross_entropy} for o in res.per_replica_final],
            "trajectory": res.trajectory.rows(),
        }
        if cfg.out:
            res.trajectory.write_table(_sibling(cfg.out, ".trajectory.tsv"))
    else:
        subset = baselines.rfe(data, train).subset_for(cfg.k)
        model = logistic.fit(data, train, subset)
    ce = logistic.cross_entropy(model, data, train)
    result = {
        "method": method,
        "k": cfg.k,
        "subset": list(model.subset),
        "features": [data.feature_names[j] for j in model.subset],
        "intercept": model.intercept,
        "coefficients": model.coefficients.tolist(),
        "train_cross_entropy_sum": ce,
        "train_cross_entropy_mean": ce / train.size,
        "train_auc": logistic.auc(logistic.score(model, data, train)),
        "test_auc": logistic.auc(logistic.score(model, data, test)),
        "converged": model.converged,
        **extra,
    }
    return _envelope(cfg, result)


def _scan_tsv(path, scan):
    rows = scan.table()
    with open(path, "w") as fh:
        fh.write("\t".join(rows[0]) + "\n")
        for r in rows:
            fh.write("\t".join(repr(v) if isinstance(v, float) else str(v) for v in r.values())
                     + "\n")


def cmd_cv(cfg):
    data = _load(cfg)
    k_max = cfg.k_max or 30
    out = {}
    for method in cfg.methods:
        scan, row = run_cv(data, method, k_max, cfg.cv_config(), cfg.seed)
        out[method] = {**row.to_dict(include_scan=False), "scan": scan.to_dict(),
                       "table": scan.table()}
        if cfg.out:
            _scan_tsv(_sibling(cfg.out, f".{method}.scan.tsv"), scan)
        log.info("%s: k*=%g test AUC=%.4f", method, row.k_star, row.test_auc)
    return _envelope(cfg, out)


def cmd_bench(cfg):
    data = _load(cfg)

    def progress(row):
        log.info("rep %d %s: k*=%g AUC=%.4f", row.repetition, row.method, row.k_star,
                 row.test_auc)

    report = run_benchmark(data, cfg.methods, cfg.repetitions, cfg.k_max or 30,
                           cfg.cv_config(), cfg.seed, progress=progress)
    return _envelope(cfg, report.to_dict())


def summarise(payload):
    """A short human-readable digest for stderr."""
    res = payload["result"]
    if payload["command"] == "select":
        return (f"{res['method']} k={res['k']}: {', '.join(res['features'])} "
                f"(train AUC {res['train_auc']:.4f}, test AUC {res['test_auc']:.4f})")
    if payload["command"] == "cv":
        return "\n".join(f"{m}: k*={r['k_star']:g} test AUC={r['test_auc']:.4f}"
                         for m, r in res.items())
    lines = [f"{'method':<8} {'reps':>4} {'k*':>6} {'AUC':>7} {'s/fold':>8}"]
    for m, a in res["aggregates"].items():
        lines.append(f"{m:<8} {a['repetitions']:>4} {a['mean_k_star']:>6.2f} "
                     f"{a['mean_test_auc']:>7.4f} {a['mean_fold_seconds']:>8.2f}")
    return "\n".join(lines)


_COMMAND_FN = {"select": cmd_select, "cv": cmd_cv, "bench": cmd_bench}


def _categorise(exc):
    if isinstance(exc, (FileNotFoundError, PermissionError, IsADirectoryError)):
        return EXIT_IO, "I/O error"
    if isinstance(exc, (FloatingPointError, np.linalg.LinAlgError)):
        return EXIT_NUMERICAL, "numerical error"
    if isinstance(exc, (ValueError, KeyError)):
        return EXIT_VALIDATION, "validation error"
    if isinstance(exc, OSError):
        return EXIT_IO, "I/O error"
    return EXIT_INTERNAL, "internal error"


def main(argv=None, environ=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage problems with code 2
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        cfg = resolve_config(args, environ)
        logging.basicConfig(level=logging.WARNING - 10 * min(cfg.verbosity, 2),
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        payload = _COMMAND_FN[cfg.command](cfg)
        text = json.dumps(payload, indent=2, allow_nan=False) + "\n"
        if cfg.out:
            Path(cfg.out).write_text(text)
            print(summarise(payload), file=sys.stderr)
        else:
            sys.stdout.write(text)
    except Exception as exc:  # noqa: BLE001 - every failure maps to a categorised exit code
        code, label = _categorise(exc)
        print(f"safdr: {label}: {exc}", file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

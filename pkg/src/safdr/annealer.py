"""Replica simulated annealing over fixed-size feature subsets.

Each replica holds a sorted k-subset. At every inverse temperature each
replica attempts ``ceil(sweeps_per_temp * K)`` swaps (one member out, one
non-member in), scoring old and new subsets on the same randomly drawn batch
scatter and accepting with the Metropolis rule on the FDR loss. The ladder
starts at beta = 0 and advances by ``step / sigma0`` where ``sigma0`` is the
spread of the initial replica FDRs. Survivors are re-ranked by the
cross-entropy of a logistic fit.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels, logistic
from .dataset import DatasetError
from .scatter import RIDGE_REL, FeatureSubset, _fdr_value, compute_scatter, make_batches

STOP_CONVERGED = "converged"
STOP_MAX_STEPS = "max_steps"
STOP_DEGENERATE = "degenerate"
STOP_FULL_SET = "full_set"


@dataclass(frozen=True)
class AnnealConfig:
    n_replicas: int = 50
    sweeps_per_temp: float = 0.5
    step: float = 0.7
    max_temp_steps: int = 100
    n_batches: int = 8
    convergence_window: int = 5
    convergence_rel_tol: float = 1e-4
    batch_granularity: str = "proposal"
    seed: int = 0

    def __post_init__(self):
        if self.n_replicas < 2:
            raise ValueError("n_replicas must be at least 2")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.sweeps_per_temp > 0:
            raise ValueError("sweeps_per_temp must be positive")
        if self.max_temp_steps < 1:
            raise ValueError("max_temp_steps must be at least 1")
        if self.n_batches < 1:
            raise ValueError("n_batches must be at least 1")
        if self.convergence_window < 1 or self.convergence_rel_tol < 0:
            raise ValueError("bad convergence settings")
        if self.batch_granularity not in ("proposal", "sweep"):
            raise ValueError("batch_granularity must be 'proposal' or 'sweep'")

    def proposals_per_temp(self, n_features):
        # round() guards against 0.5 * 44 = 22.000000000000004
        return max(1, math.ceil(round(self.sweeps_per_temp * n_features, 9)))


@dataclass
class AnnealSchedule:
    sigma0: float
    increment: float
    betas: list = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class Replica:
    """A snapshot of one replica. ``batch_id`` -1 means the full-row scatter."""

    subset: FeatureSubset
    current_fdr: float
    batch_id: int
    stream: np.random.Generator | None = None


@dataclass
class Trajectory:
    betas: list = field(default_factory=list)
    mean_fdr: list = field(default_factory=list)
    std_fdr: list = field(default_factory=list)
    acceptance: list = field(default_factory=list)

    def rows(self):
        return [
            {"t": t, "beta": b, "mean_fdr": m, "std_fdr": s, "acceptance": a}
            for t, (b, m, s, a) in enumerate(
                zip(self.betas, self.mean_fdr, self.std_fdr, self.acceptance))
        ]

    def write_table(self, path):
        with open(path, "w") as fh:
            fh.write("t\tbeta\tmean_fdr\tstd_fdr\tacceptance\n")
            for r in self.rows():
                fh.write(f"{r['t']}\t{r['beta']!r}\t{r['mean_fdr']!r}\t{r['std_fdr']!r}"
                         f"\t{r['acceptance']!r}\n")


@dataclass(frozen=True, eq=False)
class ReplicaOutcome:
    subset: FeatureSubset
    fdr: float
    cross_entropy: float


@dataclass(frozen=True, eq=False)
class AnnealResult:
    best_subset: FeatureSubset
    best_model: logistic.LogisticModel
    per_replica_final: list
    trajectory: Trajectory
    schedule: AnnealSchedule
    stop_reason: str
    initial_mean_fdr: float


def metropolis_accept(delta, beta, u):
    """Accept a move that worsens the loss by ``delta`` at inverse temperature ``beta``."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    return bool(delta < 0 or u < math.exp(-beta * delta))


def propose_swap(subset, n_features, rng):
    """Swap one uniformly chosen member for one uniformly chosen non-member."""
    members = FeatureSubset.of(subset, n_features).indices
    if len(members) >= n_features:
        raise ValueError("no swap possible: subset already holds every feature")
    outside = sorted(set(range(n_features)) - set(members))
    i = int(rng.integers(0, len(members)))
    j = int(rng.integers(0, len(outside)))
    return FeatureSubset(members[:i] + members[i + 1:] + (outside[j],))


def acceptance_statistics(result):
    """Fraction of accepted proposals at each inverse temperature that was run."""
    return np.asarray(result.trajectory.acceptance, dtype=float)


def _fit_and_rank(data, rows, subsets, fdrs):
    by_subset = {}
    for s in sorted(set(subsets), key=lambda s: s.indices):
        model = logistic.fit(data, rows, s.indices)
        by_subset[s] = model
    outcomes = [ReplicaOutcome(s, float(f), by_subset[s].final_cross_entropy)
                for s, f in zip(subsets, fdrs)]
    best = min(by_subset, key=lambda s: (by_subset[s].final_cross_entropy, s.indices))
    return best, by_subset[best], outcomes


def _draws(streams, n_members, n_out, n_batches, n_temps, n_prop, n_features, granularity):
    R = len(streams)
    rm = np.empty((n_temps, R, n_prop), np.int64)
    add = np.empty_like(rm)
    bid = np.empty_like(rm)
    u = np.empty((n_temps, R, n_prop))
    n_chunks = -(-n_prop // n_features)
    for r, rng in enumerate(streams):
        rm[:, r] = rng.integers(0, n_members, (n_temps, n_prop))
        add[:, r] = rng.integers(0, n_out, (n_temps, n_prop))
        if granularity == "proposal":
            bid[:, r] = rng.integers(0, n_batches, (n_temps, n_prop))
        else:
            per_sweep = rng.integers(0, n_batches, (n_temps, n_chunks))
            bid[:, r] = np.repeat(per_sweep, n_features, axis=1)[:, :n_prop]
        u[:, r] = rng.random((n_temps, n_prop))
    return rm, add, bid, u


def anneal(data, rows, k, cfg=None, threads=1, callback=None):
    """Search for the k-subset of maximal FDR and return the best logistic model.

    ``callback(t, replicas, batches, full)`` is called after every
    temperature with :class:`Replica` snapshots; the result does not depend
    on ``threads``.
    """
    cfg = cfg or AnnealConfig()
    rows = np.asarray(rows, dtype=np.int64)
    K = data.n_features
    if not 1 <= k <= K:
        raise ValueError(f"k={k} outside [1, {K}]")
    y = data.labels[rows]
    if y.min() == y.max():
        raise DatasetError("annealing rows must contain both classes")
    R = cfg.n_replicas
    children = np.random.SeedSequence(int(cfg.seed)).spawn(R + 1)
    streams = [np.random.Generator(np.random.PCG64(c)) for c in children[:R]]
    full = compute_scatter(data, rows)
    trajectory = Trajectory()

    if k == K:
        everything = FeatureSubset(tuple(range(K)))
        f = _fdr_value(full.delta, full.sw, everything.array())
        f = 0.0 if np.isnan(f) else f
        best, model, outcomes = _fit_and_rank(data, rows, [everything] * R, [f] * R)
        return AnnealResult(best, model, outcomes, trajectory, AnnealSchedule(0.0, cfg.step),
                            STOP_FULL_SET, f)

    members = np.empty((R, k), np.int64)
    nonmembers = np.empty((R, K - k), np.int64)
    for r, rng in enumerate(streams):
        chosen = np.sort(rng.choice(K, size=k, replace=False))
        members[r] = chosen
        nonmembers[r] = np.setdiff1d(np.arange(K), chosen)
    cur_fdr = np.array([_fdr_value(full.delta, full.sw, members[r]) for r in range(R)])
    cur_fdr[np.isnan(cur_fdr)] = 0.0
    cur_batch = np.full(R, -1, np.int64)
    initial_mean = float(cur_fdr.mean())
    sigma0 = float(cur_fdr.std())
    schedule = AnnealSchedule(sigma0, cfg.step / sigma0 if sigma0 > 0 else cfg.step)

    def finish(reason):
        subsets = [FeatureSubset(tuple(m)) for m in members.tolist()]
        best, model, outcomes = _fit_and_rank(data, rows, subsets, cur_fdr)
        return AnnealResult(best, model, outcomes, trajectory, schedule, reason, initial_mean)

    if np.all(cur_fdr == 0.0):
        return finish(STOP_DEGENERATE)

    batch_seed = int(children[R].generate_state(1)[0])
    batches = make_batches(data, rows, cfg.n_batches, batch_seed)
    mu_diff = np.ascontiguousarray(np.stack([b.delta for b in batches]))
    sw = np.ascontiguousarray(np.stack([b.sw for b in batches]))
    B = len(batches)
    P = cfg.proposals_per_temp(K)
    T = cfg.max_temp_steps
    rm, add, bid, u = _draws(streams, k, K - k, B, T, P, K, cfg.batch_granularity)
    cache = np.full((R, B), np.nan)
    accepted = np.zeros(R, np.int64)
    step_kernel = kernels.get("temperature_step")

    threads = max(1, min(int(threads), R))
    bounds = np.linspace(0, R, threads + 1).astype(int)
    chunks = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    pool = ThreadPoolExecutor(threads) if threads > 1 else None

    def run_chunk(t, beta, a, b):
        step_kernel(members[a:b], nonmembers[a:b], cache[a:b], cur_fdr[a:b], cur_batch[a:b],
                    beta, rm[t, a:b], add[t, a:b], bid[t, a:b], u[t, a:b], mu_diff, sw,
                    RIDGE_REL, accepted[a:b])

    reason = STOP_MAX_STEPS
    beta = 0.0
    try:
        for t in range(T):
            schedule.betas.append(beta)
            if pool is None:
                run_chunk(t, beta, 0, R)
            else:
                list(pool.map(lambda c: run_chunk(t, beta, *c), chunks))
            trajectory.betas.append(beta)
            trajectory.mean_fdr.append(float(cur_fdr.mean()))
            trajectory.std_fdr.append(float(cur_fdr.std()))
            trajectory.acceptance.append(float(accepted.sum()) / (R * P))
            if callback is not None:
                snaps = [Replica(FeatureSubset(tuple(members[r].tolist())), float(cur_fdr[r]),
                                 int(cur_batch[r]), streams[r]) for r in range(R)]
                callback(t, snaps, batches, full)
            if _has_converged(trajectory.mean_fdr, cfg.convergence_window,
                              cfg.convergence_rel_tol):
                reason = STOP_CONVERGED
                break
            beta += schedule.increment
    finally:
        if pool is not None:
            pool.shutdown()
    return finish(reason)


def _has_converged(means, window, rel_tol):
    if len(means) <= window:
        return False
    recent = means[-window - 1:]
    for prev, cur in zip(recent[:-1], recent[1:]):
        if abs(cur - prev) >= rel_tol * max(abs(prev), 1e-300):
            return False
    return True

"""Trajectory execution, ensembles and their aggregation.

Every trajectory owns five named random streams derived from
``(master_seed, sample_index)`` (see :mod:`pxpctl.streams`), so a record
depends only on its config and index: serial and parallel runs agree bit
for bit, and the statevector and automaton engines agree on CB inputs at
``theta = pi/2``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .automaton import BitState, run_ca_trajectory
from .config import ExperimentConfig
from .control import control_step
from .dynamics import ChaoticStepSpec, chaotic_step
from .hilbert import FibBasis, config_from_string, config_to_string, enumerate_basis, sample_config
from .observables import (
    ancilla_entropy,
    h_zz,
    half_chain_entropy,
    make_ancilla_joint,
    tripartite_mutual_information,
    z_profile,
)
from .statevec import NORM_TOL, NumericalCorruptionError, PureState, basis_state
from .streams import Streams

__all__ = [
    "TrajectoryError",
    "TrajectoryRecord",
    "AggregatedSeries",
    "run_trajectory",
    "run_ensemble",
    "aggregate",
    "aggregate_records",
    "interpolate_at",
    "worker_count",
    "WORKERS_ENV",
]

WORKERS_ENV = "PXPCTL_WORKERS"


class TrajectoryError(RuntimeError):
    """A trajectory aborted; the message names the config, sample and step."""


@dataclass
class TrajectoryRecord:
    sample_index: int
    master_seed: int
    initial_config: str | None
    choices: np.ndarray  # per step, 1 = control circuit, 0 = chaotic circuit
    times: np.ndarray
    series: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        for name, values in self.series.items():
            if len(values) != n:
                raise ValueError(f"series {name!r} has {len(values)} rows for {n} recorded times")
            if not np.all(np.isfinite(values)):
                raise ValueError(f"series {name!r} contains non-finite values")


@dataclass
class AggregatedSeries:
    times: np.ndarray
    mean: np.ndarray
    sem: np.ndarray
    n: int


@lru_cache(maxsize=8)
def _basis(L: int) -> FibBasis:
    return enumerate_basis(L)


def record_times(config: ExperimentConfig) -> np.ndarray:
    return np.arange(0, config.t_max + 1, config.record_every)


def _initial_config(config: ExperimentConfig, streams: Streams) -> int:
    if config.initial_state == "explicit":
        return config_from_string(config.initial_config)
    return sample_config(config.L, streams.init)


def _classical(config: ExperimentConfig, sample_index: int) -> TrajectoryRecord:
    streams = Streams.for_sample(config.master_seed, sample_index)
    c0 = _initial_config(config, streams)
    record_z = "z_profile" in config.observables
    hzz, z, choices, _ = run_ca_trajectory(
        BitState.from_config(c0, config.L), config.p, config.q, config.t_max,
        streams.coin, streams.perm, streams.site,
        perturb=config.perturb, record_every=config.record_every, record_z=record_z,
    )
    series = {}
    if "h_zz" in config.observables:
        series["h_zz"] = hzz
    if record_z:
        series["z_profile"] = z
    return TrajectoryRecord(
        sample_index, config.master_seed, config_to_string(c0, config.L), choices, record_times(config), series
    )


_QUANTUM_OBS = {
    "h_zz": h_zz,
    "z_profile": z_profile,
    "entropy": half_chain_entropy,
    "tmi": tripartite_mutual_information,
    "s_anc": ancilla_entropy,
    "norm": PureState.norm,
}


def _quantum(config: ExperimentConfig, sample_index: int) -> TrajectoryRecord:
    streams = Streams.for_sample(config.master_seed, sample_index)
    basis = _basis(config.L)
    if config.initial_state == "ancilla_joint":
        state, init = make_ancilla_joint(basis, streams.init), None
    else:
        c0 = _initial_config(config, streams)
        state, init = basis_state(basis, c0), config_to_string(c0, config.L)
    spec = ChaoticStepSpec(config.theta, config.perturb)
    names = config.observables
    rows: dict[str, list] = {name: [] for name in names}
    choices = np.empty(config.t_max, dtype=np.uint8)

    def record(t):
        norm = state.norm()
        if abs(norm - 1.0) > NORM_TOL:
            raise NumericalCorruptionError(f"norm {norm!r} at t={t}")
        for name in names:
            rows[name].append(_QUANTUM_OBS[name](state))

    t = 0
    try:
        record(0)
        for t in range(1, config.t_max + 1):
            if streams.coin.random() < config.p:
                _, state = control_step(state, config.q, streams.site, streams.meas, config.backend)
                choices[t - 1] = 1
            else:
                state = chaotic_step(state, spec, streams.perm)
                choices[t - 1] = 0
            if t % config.record_every == 0:
                record(t)
    except (NumericalCorruptionError, FloatingPointError) as exc:
        raise TrajectoryError(
            f"trajectory aborted: mode=quantum L={config.L} p={config.p} q={config.q} "
            f"theta={config.theta} master_seed={config.master_seed} sample={sample_index} "
            f"step={t}: {exc}"
        ) from exc
    series = {name: np.asarray(values, dtype=float) for name, values in rows.items()}
    return TrajectoryRecord(sample_index, config.master_seed, init, choices, record_times(config), series)


def run_trajectory(config: ExperimentConfig, sample_index: int) -> TrajectoryRecord:
    """Run one sample of ``config``; a pure function of its arguments."""
    if config.mode == "classical":
        return _classical(config, sample_index)
    return _quantum(config, sample_index)


def worker_count(workers: int | None = None) -> int:
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return 1


def _run_chunk(args) -> list[TrajectoryRecord]:
    config, indices = args
    return [run_trajectory(config, i) for i in indices]


def run_ensemble(config: ExperimentConfig, workers: int | None = None) -> list[TrajectoryRecord]:
    """All ``config.n_samples`` trajectories, in sample order.

    The worker count (argument, else the ``PXPCTL_WORKERS`` environment
    variable, else 1) affects only wall time.
    """
    n = config.n_samples
    workers = min(worker_count(workers), n)
    if workers == 1:
        return [run_trajectory(config, i) for i in range(n)]
    n_chunks = min(n, 4 * workers)
    bounds = np.linspace(0, n, n_chunks + 1).astype(int)
    chunks = [(config, range(a, b)) for a, b in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        out = []
        for part in pool.map(_run_chunk, chunks):
            out.extend(part)
    return out


def aggregate(values: np.ndarray, times: np.ndarray) -> AggregatedSeries:
    """Pointwise mean and SEM over the first axis of ``values`` (samples x times)."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[1] != len(times):
        raise ValueError(f"values of shape {values.shape} do not match {len(times)} times")
    n = values.shape[0]
    if n < 2:
        raise ValueError("aggregation needs at least two records")
    mean = np.mean(values, axis=0)
    # population spread over sqrt(n): {0, 1} gives 0.5 / sqrt(2)
    sem = np.std(values, axis=0) / math.sqrt(n)
    return AggregatedSeries(np.asarray(times), mean, sem, n)


def aggregate_records(records: list[TrajectoryRecord], observable: str) -> AggregatedSeries:
    """Aggregate one scalar observable across records with identical time grids."""
    if len(records) < 2:
        raise ValueError("aggregation needs at least two records")
    times = records[0].times
    for r in records[1:]:
        if not np.array_equal(r.times, times):
            raise ValueError(f"sample {r.sample_index} has a misaligned time grid")
    values = np.stack([r.series[observable] for r in records])
    if values.ndim != 2:
        raise ValueError(f"{observable!r} is not a scalar series")
    return aggregate(values, times)


def interpolate_at(series: AggregatedSeries, t_star: float) -> tuple[float, float]:
    """Linear interpolation of mean and SEM between the bracketing recorded times."""
    t = series.times
    if not t[0] <= t_star <= t[-1]:
        raise ValueError(f"t*={t_star} lies outside the recorded span [{t[0]}, {t[-1]}]")
    k = int(np.searchsorted(t, t_star, side="right")) - 1
    if t[k] == t_star or k == len(t) - 1:
        return float(series.mean[k]), float(series.sem[k])
    w = (t_star - t[k]) / (t[k + 1] - t[k])
    value = (1 - w) * series.mean[k] + w * series.mean[k + 1]
    error = (1 - w) * series.sem[k] + w * series.sem[k + 1]
    return float(value), float(error)

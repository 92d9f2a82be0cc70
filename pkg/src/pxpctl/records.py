"""On-disk formats: aggregated CSV, raw-record JSONL and the run manifest.

Aggregated CSV (schema version 1), one row per (t, observable)::

    mode,L,p,q,theta,t,observable,mean,sem,n

Floats are written with ``repr`` so files round-trip exactly and reruns are
byte-identical.  Raw records are JSON lines: a header object carrying the
schema version and the config, then one object per sample.  Wall-clock
timing lives only in the manifest.
"""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .harness import AggregatedSeries, TrajectoryRecord

__all__ = [
    "CSV_HEADER",
    "SCHEMA_VERSION",
    "SeriesKey",
    "write_aggregate_csv",
    "read_aggregate_csv",
    "write_records_jsonl",
    "read_records_jsonl",
]

SCHEMA_VERSION = 1
CSV_HEADER = ("mode", "L", "p", "q", "theta", "t", "observable", "mean", "sem", "n")


@dataclass(frozen=True)
class SeriesKey:
    mode: str
    L: int
    p: float
    q: float
    theta: float
    observable: str


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_aggregate_csv(path, rows: list[tuple[ExperimentConfig, str, AggregatedSeries]], append=False) -> None:
    """Write ``(config, observable, series)`` triples; the header is written unless appending."""
    with open(path, "a" if append else "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if not append:
            w.writerow(CSV_HEADER)
        for cfg, name, series in rows:
            for t, m, s in zip(series.times, series.mean, series.sem):
                w.writerow([_fmt(v) for v in (cfg.mode, cfg.L, cfg.p, cfg.q, cfg.theta, int(t), name, m, s, series.n)])


def read_aggregate_csv(paths) -> dict[SeriesKey, AggregatedSeries]:
    if isinstance(paths, (str, bytes)) or hasattr(paths, "__fspath__"):
        paths = [paths]
    acc = defaultdict(list)
    counts = {}
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != CSV_HEADER:
                raise ValueError(f"{path}: unexpected header {header}")
            for row in reader:
                mode, L, p, q, theta, t, obs, mean, sem, n = row
                key = SeriesKey(mode, int(L), float(p), float(q), float(theta), obs)
                acc[key].append((int(t), float(mean), float(sem)))
                counts[key] = int(n)
    out = {}
    for key, rows in acc.items():
        rows.sort()
        arr = np.array(rows, dtype=float)
        out[key] = AggregatedSeries(arr[:, 0].astype(int), arr[:, 1], arr[:, 2], counts[key])
    return out


def _series_to_json(values: np.ndarray):
    return [list(map(float, row)) for row in values] if values.ndim == 2 else [float(v) for v in values]


def write_records_jsonl(path, config: ExperimentConfig, records: list[TrajectoryRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"schema_version": SCHEMA_VERSION, "config": config.to_dict()}) + "\n")
        for r in records:
            obj = {
                "sample_index": r.sample_index,
                "master_seed": r.master_seed,
                "initial_config": r.initial_config,
                "choices": "".join(map(str, r.choices.tolist())),
                "times": r.times.tolist(),
                "series": {k: _series_to_json(v) for k, v in r.series.items()},
            }
            fh.write(json.dumps(obj) + "\n")


def read_records_jsonl(path) -> tuple[ExperimentConfig, list[TrajectoryRecord]]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"{path}: unsupported schema version {header.get('schema_version')}")
        cfg = dict(header["config"])
        cfg["observables"] = tuple(cfg["observables"])
        config = ExperimentConfig(**cfg)
        records = []
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            records.append(
                TrajectoryRecord(
                    obj["sample_index"],
                    obj["master_seed"],
                    obj["initial_config"],
                    np.array([int(c) for c in obj["choices"]], dtype=np.uint8),
                    np.array(obj["times"], dtype=int),
                    {k: np.array(v, dtype=float) for k, v in obj["series"].items()},
                )
            )
    return config, records

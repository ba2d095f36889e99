"""Mergeable run results and deterministic serialization.

Per-trial statistics are carried as (count, mean, M2) accumulators so
shards computed on disjoint trial ranges can be merged exactly, without
access to the raw per-trial values. CSV and JSON emission is
byte-deterministic for a given result: floats are written with repr
(shortest round-trip form), rows end with a bare LF, and anything
wall-clock dependent lives in a separate .meta.json sidecar.
"""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1


@dataclass
class RunningStats:
    """Per-point sample statistics in Chan-mergeable form."""

    count: np.ndarray
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "RunningStats":
        """Collapse axis 0 (the trial axis) of ``samples`` into stats."""
        samples = np.asarray(samples, dtype=float)
        n = samples.shape[0]
        count = np.full(samples.shape[1:], n, dtype=np.int64)
        mean = samples.mean(axis=0)
        m2 = ((samples - mean) ** 2).sum(axis=0)
        return cls(count=count, mean=mean, m2=m2)

    @classmethod
    def zeros(cls, shape: tuple[int, ...]) -> "RunningStats":
        return cls(count=np.zeros(shape, dtype=np.int64),
                   mean=np.zeros(shape), m2=np.zeros(shape))

    def merge(self, other: "RunningStats") -> "RunningStats":
        na = self.count.astype(float)
        nb = other.count.astype(float)
        n = na + nb
        safe_n = np.where(n > 0, n, 1.0)
        delta = other.mean - self.mean
        mean = self.mean + delta * nb / safe_n
        m2 = self.m2 + other.m2 + delta ** 2 * na * nb / safe_n
        return RunningStats(count=(self.count + other.count), mean=mean, m2=m2)

    @property
    def variance(self) -> np.ndarray:
        n = self.count.astype(float)
        return np.where(n > 1, self.m2 / np.maximum(n - 1.0, 1.0), 0.0)

    @property
    def stderr(self) -> np.ndarray:
        n = self.count.astype(float)
        return np.where(n > 1, np.sqrt(self.variance / np.maximum(n, 1.0)), 0.0)


@dataclass
class RunResult:
    """One emitted curve family: an x grid plus named stat series."""

    curve_kind: str
    x_label: str
    x_values: np.ndarray
    series: dict[str, RunningStats]
    metadata: dict = field(default_factory=dict)

    def merge(self, other: "RunResult") -> "RunResult":
        if self.curve_kind != other.curve_kind:
            raise ValueError("cannot merge results of different curve kinds")
        if list(self.series) != list(other.series):
            raise ValueError("cannot merge results with different series sets")
        if not np.array_equal(self.x_values, other.x_values):
            raise ValueError("cannot merge results on different x grids")
        merged = {name: self.series[name].merge(other.series[name])
                  for name in self.series}
        metadata = dict(self.metadata)
        ranges = list(metadata.get("trial_ranges", []))
        ranges += list(other.metadata.get("trial_ranges", []))
        metadata["trial_ranges"] = ranges
        return RunResult(curve_kind=self.curve_kind, x_label=self.x_label,
                         x_values=self.x_values.copy(), series=merged,
                         metadata=metadata)


def _fmt(value: float) -> str:
    return repr(float(value))


def result_to_csv(result: RunResult) -> str:
    """RFC-4180-style body, LF line endings, repr floats."""
    names = list(result.series)
    header = [result.x_label]
    for name in names:
        header += [f"{name}_mean", f"{name}_stderr", f"{name}_count"]
    lines = [",".join(header)]
    for i, x in enumerate(result.x_values):
        row = [_fmt(x)]
        for name in names:
            stats = result.series[name]
            row += [_fmt(stats.mean.flat[i]), _fmt(stats.stderr.flat[i]),
                    str(int(stats.count.flat[i]))]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def result_to_json_dict(result: RunResult) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "curve_kind": result.curve_kind,
        "x_label": result.x_label,
        "x_values": [float(v) for v in result.x_values],
        "series": {
            name: {
                "count": [int(v) for v in stats.count.ravel()],
                "mean": [float(v) for v in stats.mean.ravel()],
                "m2": [float(v) for v in stats.m2.ravel()],
            }
            for name, stats in result.series.items()
        },
        "metadata": result.metadata,
    }


def result_from_json_dict(payload: dict) -> RunResult:
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {payload.get('schema_version')!r}")
    series = {}
    for name, blob in payload["series"].items():
        series[name] = RunningStats(
            count=np.asarray(blob["count"], dtype=np.int64),
            mean=np.asarray(blob["mean"], dtype=float),
            m2=np.asarray(blob["m2"], dtype=float))
    return RunResult(curve_kind=payload["curve_kind"], x_label=payload["x_label"],
                     x_values=np.asarray(payload["x_values"], dtype=float),
                     series=series, metadata=dict(payload.get("metadata", {})))


def result_to_json(result: RunResult) -> str:
    return json.dumps(result_to_json_dict(result), sort_keys=True,
                      separators=(",", ":")) + "\n"


def write_result(result: RunResult, path: str, fmt: str = "csv") -> list[str]:
    """Write the result plus a .meta.json sidecar; returns written paths."""
    if fmt == "csv":
        body = result_to_csv(result)
    elif fmt == "json":
        body = result_to_json(result)
    else:
        raise ValueError(f"unknown output format {fmt!r}")
    with open(path, "w", newline="") as fh:
        fh.write(body)
    sidecar = {
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "curve_kind": result.curve_kind,
        "metadata": result.metadata,
    }
    sidecar_path = path + ".meta.json"
    with open(sidecar_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [path, sidecar_path]


def stats_from_trial_values(values_by_point: np.ndarray) -> RunningStats:
    """Alias kept for intent: axis 0 trials, remaining axes are curve points."""
    return RunningStats.from_samples(values_by_point)

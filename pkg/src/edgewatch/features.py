"""Per-cache percentile features and per-snapshot min-max normalization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .ingest import Snapshot

METRICS = ("rtt", "ttl")
DEFAULT_PERCENTILES = (20.0, 35.0, 50.0, 65.0, 80.0)
DEFAULT_MIN_FLOW = 50


@dataclass(frozen=True)
class CacheFeatures:
    """Raw (unnormalized) percentile vectors of one cache, per metric."""

    cache_id: str
    flow_count: int
    raw_percentiles: dict[str, np.ndarray]

    def metrics(self) -> tuple[str, ...]:
        return tuple(self.raw_percentiles)


@dataclass(frozen=True)
class NormalizationBounds:
    """Per-metric (min, max) used for the affine map onto [0, 1]."""

    bounds: dict[str, tuple[float, float]]

    def metrics(self) -> tuple[str, ...]:
        return tuple(self.bounds)

    def normalize(self, metric: str, values: np.ndarray | float) -> np.ndarray:
        lo, hi = self.bounds[metric]
        values = np.asarray(values, dtype=float)
        if hi <= lo:
            # Degenerate span: every value of the metric maps to 0.
            return np.zeros_like(values)
        return (values - lo) / (hi - lo)

    def denormalize(self, metric: str, values: np.ndarray | float) -> np.ndarray:
        lo, hi = self.bounds[metric]
        values = np.asarray(values, dtype=float)
        if hi <= lo:
            return np.full_like(values, lo)
        return values * (hi - lo) + lo


@dataclass(frozen=True)
class FeatureVector:
    """Concatenated normalized percentile blocks (metric order is fixed)."""

    cache_id: str
    values: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.values.size)


def percentile(samples: Sequence[float] | np.ndarray, q: float) -> float:
    """Linear-interpolation percentile on (N-1)-scaled ranks.

    With sorted samples s_0..s_{N-1} and rank h = (N-1) * q / 100, returns
    s_{floor(h)} + (h - floor(h)) * (s_{floor(h)+1} - s_{floor(h)}), the
    fractional term vanishing at h = N-1.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise ValueError("percentile of an empty sample set")
    if not 0.0 <= q <= 100.0:
        raise ValueError(f"percentile rank out of [0, 100]: {q}")
    s = np.sort(arr)
    h = (s.size - 1) * q / 100.0
    lo = math.floor(h)
    if lo >= s.size - 1:
        return float(s[-1])
    frac = h - lo
    return float(s[lo] + frac * (s[lo + 1] - s[lo]))


def _percentile_vector(samples: np.ndarray, qs: Sequence[float]) -> np.ndarray:
    s = np.sort(np.asarray(samples, dtype=float))
    out = np.empty(len(qs))
    for i, q in enumerate(qs):
        h = (s.size - 1) * q / 100.0
        lo = math.floor(h)
        if lo >= s.size - 1:
            out[i] = s[-1]
        else:
            out[i] = s[lo] + (h - lo) * (s[lo + 1] - s[lo])
    return out


def _validate_percentiles(percentiles: Sequence[float]) -> tuple[float, ...]:
    ps = tuple(float(q) for q in percentiles)
    if not ps:
        raise ValueError("percentile list is empty")
    if any(not 0.0 < q < 100.0 for q in ps):
        raise ValueError(f"percentile list values must lie in (0, 100): {ps}")
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise ValueError(f"percentile list must be strictly increasing: {ps}")
    return ps


def extract_cache_features(
    snapshot: Snapshot,
    min_flow: int = DEFAULT_MIN_FLOW,
    percentiles: Sequence[float] = DEFAULT_PERCENTILES,
) -> list[CacheFeatures]:
    """Percentile vectors of RTT and TTL for every cache with enough flows.

    Caches with fewer than ``min_flow`` flows are dropped (the caller can
    count them as ``len(snapshot.records) - len(result)``). Output is sorted
    by cache_id so downstream clustering is deterministic.
    """
    ps = _validate_percentiles(percentiles)
    out: list[CacheFeatures] = []
    for cache_id in snapshot.cache_ids():
        flows = snapshot.records[cache_id]
        if len(flows) < min_flow:
            continue
        rtt = np.fromiter((r.min_rtt for r in flows), dtype=float, count=len(flows))
        ttl = np.fromiter((r.ttl for r in flows), dtype=float, count=len(flows))
        out.append(
            CacheFeatures(
                cache_id=cache_id,
                flow_count=len(flows),
                raw_percentiles={
                    "rtt": _percentile_vector(rtt, ps),
                    "ttl": _percentile_vector(ttl, ps),
                },
            )
        )
    return out


def extract_cache_features_mean_std(
    snapshot: Snapshot,
    min_flow: int = DEFAULT_MIN_FLOW,
) -> list[CacheFeatures]:
    """Mean/stddev variant of the feature extractor (sweep harness only).

    Same CacheFeatures shape with a 2-vector (mean, std) per metric, so the
    normalization and clustering stages apply unchanged.
    """
    out: list[CacheFeatures] = []
    for cache_id in snapshot.cache_ids():
        flows = snapshot.records[cache_id]
        if len(flows) < min_flow:
            continue
        rtt = np.fromiter((r.min_rtt for r in flows), dtype=float, count=len(flows))
        ttl = np.fromiter((r.ttl for r in flows), dtype=float, count=len(flows))
        out.append(
            CacheFeatures(
                cache_id=cache_id,
                flow_count=len(flows),
                raw_percentiles={
                    "rtt": np.array([rtt.mean(), rtt.std()]),
                    "ttl": np.array([ttl.mean(), ttl.std()]),
                },
            )
        )
    return out


def snapshot_bounds(features: Sequence[CacheFeatures]) -> NormalizationBounds:
    """Per-metric min/max over all caches and all percentile indices jointly."""
    if not features:
        raise ValueError("cannot compute bounds of an empty feature set")
    metrics = features[0].metrics()
    bounds: dict[str, tuple[float, float]] = {}
    for metric in metrics:
        stacked = np.concatenate([f.raw_percentiles[metric] for f in features])
        bounds[metric] = (float(stacked.min()), float(stacked.max()))
    return NormalizationBounds(bounds)


def normalize_snapshot(
    features: Sequence[CacheFeatures],
) -> tuple[list[FeatureVector], NormalizationBounds]:
    """Map raw percentiles onto [0, 1] with the snapshot's own bounds.

    The same (min, max) pair is shared by every percentile index of a metric;
    the bounds are returned so that a later comparison can renormalize.
    """
    bounds = snapshot_bounds(features)
    metrics = features[0].metrics()
    vectors = [
        FeatureVector(
            cache_id=f.cache_id,
            values=np.concatenate(
                [bounds.normalize(m, f.raw_percentiles[m]) for m in metrics]
            ),
        )
        for f in features
    ]
    return vectors, bounds


def write_feature_dump(
    target: IO[str] | str | Path,
    features: Iterable[CacheFeatures],
    percentiles: Sequence[float],
    bounds: NormalizationBounds,
) -> None:
    """Optional CSV dump: cache_id,metric,percentile,raw_value,normalized_value."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as fp:
            write_feature_dump(fp, features, percentiles, bounds)
        return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(["cache_id", "metric", "percentile", "raw_value", "normalized_value"])
    for f in features:
        for metric in f.metrics():
            raw = f.raw_percentiles[metric]
            norm = bounds.normalize(metric, raw)
            for q, rv, nv in zip(percentiles, raw, norm):
                writer.writerow([f.cache_id, metric, repr(float(q)), repr(float(rv)), repr(float(nv))])

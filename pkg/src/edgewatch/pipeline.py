"""End-to-end timeline: snapshots -> features -> clustering -> CD, plus drill-down."""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .constellation import (
    CDReport,
    Constellation,
    build_constellation,
    constellation_distance,
    joint_bounds,
)
from .dbscan import Clustering, ClusterParams, DEFAULT_EPSILON, DEFAULT_MIN_PTS, dbscan
from .errors import ConfigError, InputError
from .features import (
    CacheFeatures,
    DEFAULT_MIN_FLOW,
    DEFAULT_PERCENTILES,
    NormalizationBounds,
    _validate_percentiles,
    extract_cache_features,
    normalize_snapshot,
    percentile,
)
from .ingest import (
    DAY_SECONDS,
    FlowRecord,
    Snapshot,
    parse_cache_hostname,
    read_flow_log,
    window_flows,
)

log = logging.getLogger(__name__)

FLAG_NONE = "none"
FLAG_EVENT = "event"
FLAG_MAJOR = "major"

THROUGHPUT_DECILES = tuple(float(q) for q in range(10, 100, 10))


@dataclass
class PipelineConfig:
    """Knobs of the full pipeline; defaults follow the method's tuning."""

    inputs: tuple[str, ...] = ()
    window_days: float = 7.0
    step_days: float = 1.0
    min_flow: int = DEFAULT_MIN_FLOW
    percentiles: tuple[float, ...] = DEFAULT_PERCENTILES
    epsilon: float = DEFAULT_EPSILON
    min_pts: int = DEFAULT_MIN_PTS
    event_threshold: float = 10.0
    major_threshold: float = 50.0
    utc_offset_hours: float = 0.0
    top_stars: int = 3
    output_dir: str = "out"

    def validate(self) -> "PipelineConfig":
        if self.window_days <= 0 or self.step_days <= 0:
            raise ConfigError("window_days and step_days must be positive")
        if self.min_flow < 1:
            raise ConfigError("min_flow must be >= 1")
        if self.event_threshold <= 0 or self.major_threshold <= 0:
            raise ConfigError("thresholds must be positive")
        if self.event_threshold > self.major_threshold:
            raise ConfigError("event_threshold must not exceed major_threshold")
        if self.epsilon <= 0 or self.min_pts < 1:
            raise ConfigError("bad clustering parameters")
        if self.top_stars < 1:
            raise ConfigError("top_stars must be >= 1")
        try:
            _validate_percentiles(self.percentiles)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self


@dataclass(frozen=True)
class StarContribution:
    """One star's share of a snapshot pair's CD, with its member caches."""

    side: str  # "a" = earlier snapshot, "b" = later snapshot
    star_id: int
    label: str | None
    distance: float
    members: tuple[str, ...]


@dataclass(frozen=True)
class TimelineEntry:
    index: int
    window_start: float
    window_end: float
    cd_to_previous: float | None
    noise_count: int
    flagged: str
    contributors: tuple[StarContribution, ...]


@dataclass(frozen=True)
class SnapshotState:
    """Everything the pipeline derives from one snapshot."""

    snapshot: Snapshot
    features: tuple[CacheFeatures, ...]
    features_by_id: dict[str, CacheFeatures]
    bounds: NormalizationBounds | None
    clustering: Clustering
    iata_by_cache: dict[str, str | None]
    dropped_below_min_flow: int


@dataclass(frozen=True)
class TimelineResult:
    entries: tuple[TimelineEntry, ...]
    reports: tuple[CDReport | None, ...]  # aligned with entries; None for entry 0
    states: tuple[SnapshotState, ...]


def flag_for(cd: float | None, config: PipelineConfig) -> str:
    if cd is None:
        return FLAG_NONE
    if cd >= config.major_threshold:
        return FLAG_MAJOR
    if cd >= config.event_threshold:
        return FLAG_EVENT
    return FLAG_NONE


def _majority_iata(snapshot: Snapshot) -> dict[str, str | None]:
    out: dict[str, str | None] = {}
    for cache_id, flows in snapshot.records.items():
        votes = Counter()
        for r in flows:
            name = parse_cache_hostname(r.hostname)
            if name.iata:
                votes[name.iata] += 1
        if votes:
            top = max(votes.values())
            out[cache_id] = min(lab for lab, cnt in votes.items() if cnt == top)
        else:
            out[cache_id] = None
    return out


def _star_label(members: Sequence[str], iata_by_cache: dict[str, str | None]) -> str | None:
    votes = Counter(
        iata_by_cache.get(c) for c in members if iata_by_cache.get(c) is not None
    )
    if not votes:
        return None
    top = max(votes.values())
    return min(lab for lab, cnt in votes.items() if cnt == top)


def analyze_snapshot(snapshot: Snapshot, config: PipelineConfig) -> SnapshotState:
    features = extract_cache_features(snapshot, config.min_flow, config.percentiles)
    dropped = len(snapshot.records) - len(features)
    if features:
        vectors, bounds = normalize_snapshot(features)
    else:
        vectors, bounds = [], None
        log.warning("snapshot %d has no caches above min_flow=%d", snapshot.index, config.min_flow)
    clustering = dbscan(vectors, ClusterParams(config.epsilon, config.min_pts))
    clustering = replace(clustering, snapshot_index=snapshot.index)
    return SnapshotState(
        snapshot=snapshot,
        features=tuple(features),
        features_by_id={f.cache_id: f for f in features},
        bounds=bounds,
        clustering=clustering,
        iata_by_cache=_majority_iata(snapshot),
        dropped_below_min_flow=dropped,
    )


def _pair_constellations(
    state_a: SnapshotState, state_b: SnapshotState
) -> tuple[Constellation, Constellation]:
    # An all-noise/empty snapshot carries no bounds; fall back to the partner's
    # so the sentinel-based CD still has a consistent geometry.
    if state_a.bounds is not None and state_b.bounds is not None:
        bounds = joint_bounds(state_a.bounds, state_b.bounds)
    else:
        bounds = state_a.bounds or state_b.bounds
    empty = NormalizationBounds({})
    const_a = build_constellation(
        state_a.clustering,
        state_a.features_by_id,
        bounds if bounds is not None else empty,
        snapshot_index=state_a.snapshot.index,
    )
    const_b = build_constellation(
        state_b.clustering,
        state_b.features_by_id,
        bounds if bounds is not None else empty,
        snapshot_index=state_b.snapshot.index,
    )
    return const_a, const_b


def run_timeline(
    config: PipelineConfig, records: Sequence[FlowRecord] | None = None
) -> TimelineResult:
    """Slide the window over the trace and compare each consecutive pair.

    Entry 0 has no previous snapshot, so its CD is undefined. A snapshot with
    zero qualifying caches still participates: its empty constellation makes
    every partner star couple at the sentinel distance.
    """
    config.validate()
    if records is None:
        if not config.inputs:
            raise ConfigError("no input flow logs configured")
        records = []
        for path in config.inputs:
            records.extend(read_flow_log(path))
    snapshots = window_flows(
        records,
        config.window_days * DAY_SECONDS,
        config.step_days * DAY_SECONDS,
        utc_offset_hours=config.utc_offset_hours,
    )
    if len(snapshots) < 2:
        raise InputError(
            f"only {len(snapshots)} snapshot(s); the timeline needs at least 2 "
            "(trace shorter than one window plus one step?)"
        )
    states = tuple(analyze_snapshot(s, config) for s in snapshots)

    entries: list[TimelineEntry] = []
    reports: list[CDReport | None] = []
    for i, state in enumerate(states):
        if i == 0:
            entries.append(
                TimelineEntry(
                    index=0,
                    window_start=state.snapshot.window_start,
                    window_end=state.snapshot.window_end,
                    cd_to_previous=None,
                    noise_count=len(state.clustering.noise),
                    flagged=FLAG_NONE,
                    contributors=(),
                )
            )
            reports.append(None)
            continue
        prev = states[i - 1]
        const_a, const_b = _pair_constellations(prev, state)
        report = constellation_distance(const_a, const_b)
        contributors = []
        for side, coupling in report.contributors()[: config.top_stars]:
            source_state, source_const = (prev, const_a) if side == "a" else (state, const_b)
            members = source_const.stars[coupling.star_index].members
            contributors.append(
                StarContribution(
                    side=side,
                    star_id=coupling.star_index,
                    label=_star_label(members, source_state.iata_by_cache),
                    distance=coupling.distance,
                    members=members,
                )
            )
        entries.append(
            TimelineEntry(
                index=i,
                window_start=state.snapshot.window_start,
                window_end=state.snapshot.window_end,
                cd_to_previous=report.cd_value,
                noise_count=len(state.clustering.noise),
                flagged=flag_for(report.cd_value, config),
                contributors=tuple(contributors),
            )
        )
        reports.append(report)
    return TimelineResult(entries=tuple(entries), reports=tuple(reports), states=states)


@dataclass(frozen=True)
class StarDrilldown:
    """Before/after view of one contributing star's member caches."""

    side: str
    star_id: int
    label: str | None
    distance: float
    member_count: int
    throughput_deciles_before: tuple[float, ...]
    throughput_deciles_after: tuple[float, ...]
    rtt_percentiles_before: tuple[float, ...]
    rtt_percentiles_after: tuple[float, ...]


@dataclass(frozen=True)
class DrilldownReport:
    entry_index: int
    stars: tuple[StarDrilldown, ...]
    rtt_percentile_ranks: tuple[float, ...] = DEFAULT_PERCENTILES


def _group_quantiles(values: list[float], qs: Sequence[float]) -> tuple[float, ...]:
    if not values:
        return tuple(math.nan for _ in qs)
    arr = np.asarray(values)
    return tuple(percentile(arr, q) for q in qs)


def drilldown(
    entry: TimelineEntry,
    records: Sequence[FlowRecord],
    config: PipelineConfig,
) -> DrilldownReport:
    """Per-star member, throughput and RTT summary for a flagged entry.

    "Before" is the previous window (one step earlier), "after" is the
    entry's own window. Unflagged entries yield an empty report. Groups with
    no flows in a phase (a dead node after its death) report NaN quantiles.
    """
    if entry.flagged == FLAG_NONE:
        return DrilldownReport(
            entry_index=entry.index, stars=(), rtt_percentile_ranks=tuple(config.percentiles)
        )
    step = config.step_days * DAY_SECONDS
    windows = {
        "before": (entry.window_start - step, entry.window_end - step),
        "after": (entry.window_start, entry.window_end),
    }
    stars = []
    for contrib in entry.contributors:
        members = set(contrib.members)
        phase_thr: dict[str, tuple[float, ...]] = {}
        phase_rtt: dict[str, tuple[float, ...]] = {}
        for phase, (lo, hi) in windows.items():
            flows = [
                r for r in records if r.server_ip in members and lo <= r.start_time < hi
            ]
            phase_thr[phase] = _group_quantiles(
                [r.avg_throughput for r in flows], THROUGHPUT_DECILES
            )
            phase_rtt[phase] = _group_quantiles(
                [r.min_rtt for r in flows], config.percentiles
            )
        stars.append(
            StarDrilldown(
                side=contrib.side,
                star_id=contrib.star_id,
                label=contrib.label,
                distance=contrib.distance,
                member_count=len(contrib.members),
                throughput_deciles_before=phase_thr["before"],
                throughput_deciles_after=phase_thr["after"],
                rtt_percentiles_before=phase_rtt["before"],
                rtt_percentiles_after=phase_rtt["after"],
            )
        )
    return DrilldownReport(
        entry_index=entry.index,
        stars=tuple(stars),
        rtt_percentile_ranks=tuple(config.percentiles),
    )


def write_timeline_csv(target: IO[str] | str | Path, entries: Sequence[TimelineEntry]) -> None:
    """timeline.csv: one row per snapshot with CD, noise count, flag, top stars."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as fp:
            write_timeline_csv(fp, entries)
        return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(
        ["snapshot", "window_start", "window_end", "cd", "noise_count", "flag", "top_stars"]
    )
    for e in entries:
        tops = ";".join(
            f"{c.side}{c.star_id}:{c.label or '-'}:{c.distance:.6f}" for c in e.contributors
        )
        writer.writerow(
            [
                e.index,
                repr(e.window_start),
                repr(e.window_end),
                "" if e.cd_to_previous is None else repr(e.cd_to_previous),
                e.noise_count,
                e.flagged,
                tops,
            ]
        )


def write_couplings_csv(target: IO[str] | str | Path, result: TimelineResult) -> None:
    """couplings.csv: every astral coupling of every consecutive pair."""
    from .constellation import write_cd_report_rows

    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as fp:
            write_couplings_csv(fp, result)
        return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(
        ["snapshot_n", "snapshot_n1", "cd", "side", "star_id", "nearest_star_id", "astral_distance"]
    )
    for entry, report in zip(result.entries, result.reports):
        if report is None:
            continue
        write_cd_report_rows(writer, report, entry.index - 1, entry.index)


def write_drilldown_csv(target: IO[str] | str | Path, report: DrilldownReport) -> None:
    """Long-format CSV: entry,side,star_id,label,astral_distance,members,phase,kind,q,value."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8", newline="") as fp:
            write_drilldown_csv(fp, report)
        return
    writer = csv.writer(target, lineterminator="\n")
    writer.writerow(
        ["entry", "side", "star_id", "label", "astral_distance", "members", "phase", "kind", "q", "value"]
    )
    for star in report.stars:
        blocks = (
            ("before", "throughput_decile", THROUGHPUT_DECILES, star.throughput_deciles_before),
            ("after", "throughput_decile", THROUGHPUT_DECILES, star.throughput_deciles_after),
            ("before", "rtt_percentile", report.rtt_percentile_ranks, star.rtt_percentiles_before),
            ("after", "rtt_percentile", report.rtt_percentile_ranks, star.rtt_percentiles_after),
        )
        for phase, kind, qs, values in blocks:
            for q, value in zip(qs, values):
                writer.writerow(
                    [
                        report.entry_index,
                        star.side,
                        star.star_id,
                        star.label or "-",
                        repr(star.distance),
                        star.member_count,
                        phase,
                        kind,
                        repr(float(q)),
                        repr(float(value)),
                    ]
                )

"""Core domain types, slot-time arithmetic, and JSONL serialization.

The platform exposes only a video's running view counter, so the observable
signal is the per-slot delta (which may be negative when removals outpace new
views).  Ground-truth series additionally carry the true per-slot views and
corrections that induced those deltas; they exist only for high-frequency
collections or simulated corpora.

Slot 0 starts at the publication slot; the wall-clock time of slot ``i`` is
``floor_to_hour(published_at) + i * slot_duration``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timedelta
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

MAX_HOUR_SLOTS = 170  # one week of monitoring after publication
SLOTS_PER_HOUR = 12
MAX_FIVE_MIN_SLOTS = MAX_HOUR_SLOTS * SLOTS_PER_HOUR


class Resolution(str, Enum):
    """Sampling grid of a series: hourly or every five minutes."""

    HOUR = "hour"
    FIVE_MIN = "5min"

    @property
    def slot_duration(self) -> timedelta:
        return timedelta(hours=1) if self is Resolution.HOUR else timedelta(minutes=5)

    @property
    def max_slots(self) -> int:
        return MAX_HOUR_SLOTS if self is Resolution.HOUR else MAX_FIVE_MIN_SLOTS


def floor_to_hour(dt: datetime) -> datetime:
    return dt.replace(minute=0, second=0, microsecond=0)


def slot_start(published_at: datetime, resolution: Resolution, index: int) -> datetime:
    """Wall-clock start of slot ``index``, anchored to the publication hour."""
    return floor_to_hour(published_at) + index * resolution.slot_duration


def hour_of_day(published_at: datetime, hour_index: int, shift: int = 0) -> int:
    """Hour-of-day (0..23) of hourly slot ``hour_index``, optionally shifted.

    ``shift`` moves the clock by whole hours, e.g. to reinterpret UTC
    timestamps in the platform's local time.
    """
    return (published_at.hour + hour_index + shift) % 24


def _check_counts(name: str, values: Sequence[int]) -> None:
    for v in values:
        if v is None or v < 0:
            raise ValueError(f"{name} must be nonnegative integers, got {v!r}")


@dataclass(frozen=True)
class ViewSeries:
    """Observed per-slot view deltas for one video.

    ``deltas`` may contain ``None`` where the collector had to skip a poll;
    missing slots are distinct from zero deltas.
    """

    video_id: str
    channel_id: str
    published_at: datetime
    resolution: Resolution
    deltas: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "resolution", Resolution(self.resolution))
        object.__setattr__(self, "deltas", tuple(self.deltas))
        if len(self.deltas) > self.resolution.max_slots:
            raise ValueError(
                f"{self.video_id}: {len(self.deltas)} slots exceeds "
                f"{self.resolution.max_slots} for {self.resolution.value} resolution"
            )
        total = 0
        for d in self.deltas:
            if d is not None:
                total += d
                if total < 0:
                    raise ValueError(
                        f"{self.video_id}: running view total goes negative"
                    )

    def __len__(self) -> int:
        return len(self.deltas)

    def deltas_array(self) -> np.ndarray:
        """Deltas as float64 with NaN at missing slots."""
        return np.array(
            [np.nan if d is None else float(d) for d in self.deltas], dtype=np.float64
        )


@dataclass(frozen=True)
class GroundTruthSeries:
    """True per-slot views and corrections for one video."""

    video_id: str
    channel_id: str
    published_at: datetime
    resolution: Resolution
    views: tuple
    corrections: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "resolution", Resolution(self.resolution))
        object.__setattr__(self, "views", tuple(int(v) for v in self.views))
        object.__setattr__(
            self, "corrections", tuple(int(c) for c in self.corrections)
        )
        if len(self.views) != len(self.corrections):
            raise ValueError(
                f"{self.video_id}: views ({len(self.views)}) and corrections "
                f"({len(self.corrections)}) differ in length"
            )
        if len(self.views) > self.resolution.max_slots:
            raise ValueError(
                f"{self.video_id}: {len(self.views)} slots exceeds "
                f"{self.resolution.max_slots} for {self.resolution.value} resolution"
            )
        _check_counts("views", self.views)
        _check_counts("corrections", self.corrections)

    def __len__(self) -> int:
        return len(self.views)

    def views_array(self) -> np.ndarray:
        return np.asarray(self.views, dtype=np.int64)

    def corrections_array(self) -> np.ndarray:
        return np.asarray(self.corrections, dtype=np.int64)


@dataclass(frozen=True)
class CorrectionEstimate:
    """Reconstructed per-slot correction magnitudes for one video."""

    video_id: str
    estimates: tuple

    def __post_init__(self) -> None:
        object.__setattr__(self, "estimates", tuple(int(e) for e in self.estimates))
        _check_counts("estimates", self.estimates)

    def __len__(self) -> int:
        return len(self.estimates)

    def estimates_array(self) -> np.ndarray:
        return np.asarray(self.estimates, dtype=np.int64)


@dataclass(frozen=True)
class InterventionEvent:
    """A slot in which the platform removed views (correction > 0)."""

    video_id: str
    hour_index: int
    magnitude: int

    def __post_init__(self) -> None:
        if self.magnitude <= 0:
            raise ValueError("intervention magnitude must be positive")


def observe(truth: GroundTruthSeries) -> ViewSeries:
    """Project ground truth to what the platform exposes: views - corrections."""
    deltas = tuple(v - c for v, c in zip(truth.views, truth.corrections))
    return ViewSeries(
        video_id=truth.video_id,
        channel_id=truth.channel_id,
        published_at=truth.published_at,
        resolution=truth.resolution,
        deltas=deltas,
    )


def aggregate_to_hour(truth: GroundTruthSeries) -> GroundTruthSeries:
    """Sum 5-minute ground truth into hourly slots.

    A final partial hour is zero-padded so output length is deterministic:
    ``ceil(len / 12)``.
    """
    if truth.resolution is not Resolution.FIVE_MIN:
        raise ValueError(
            f"{truth.video_id}: aggregate_to_hour requires 5min input, "
            f"got {truth.resolution.value}"
        )
    n = len(truth)
    hours = (n + SLOTS_PER_HOUR - 1) // SLOTS_PER_HOUR
    views = np.zeros(hours * SLOTS_PER_HOUR, dtype=np.int64)
    corr = np.zeros(hours * SLOTS_PER_HOUR, dtype=np.int64)
    views[:n] = truth.views_array()
    corr[:n] = truth.corrections_array()
    return GroundTruthSeries(
        video_id=truth.video_id,
        channel_id=truth.channel_id,
        published_at=truth.published_at,
        resolution=Resolution.HOUR,
        views=tuple(views.reshape(hours, SLOTS_PER_HOUR).sum(axis=1).tolist()),
        corrections=tuple(corr.reshape(hours, SLOTS_PER_HOUR).sum(axis=1).tolist()),
    )


def hourly_truth(truth: GroundTruthSeries) -> GroundTruthSeries:
    """Return ``truth`` on the hourly grid, aggregating if needed."""
    if truth.resolution is Resolution.HOUR:
        return truth
    return aggregate_to_hour(truth)


def interventions(truth: GroundTruthSeries) -> list:
    """Hourly intervention events (slots with corrections > 0)."""
    hourly = hourly_truth(truth)
    return [
        InterventionEvent(truth.video_id, h, c)
        for h, c in enumerate(hourly.corrections)
        if c > 0
    ]


# ---------------------------------------------------------------------------
# JSONL wire format.  One object per line, UTF-8, LF endings.
# Observed:      {"video_id", "channel_id", "published_at", "resolution", "deltas"}
# Ground truth:  same metadata with "views" and "corrections", no "deltas"
# Estimates:     {"video_id", "estimates"}
# ---------------------------------------------------------------------------


def _format_ts(dt: datetime) -> str:
    return dt.isoformat(timespec="minutes")


def _parse_ts(s: str) -> datetime:
    return datetime.fromisoformat(s)


def series_to_obj(s: ViewSeries) -> dict:
    return {
        "video_id": s.video_id,
        "channel_id": s.channel_id,
        "published_at": _format_ts(s.published_at),
        "resolution": s.resolution.value,
        "deltas": list(s.deltas),
    }


def obj_to_series(obj: dict) -> ViewSeries:
    return ViewSeries(
        video_id=obj["video_id"],
        channel_id=obj["channel_id"],
        published_at=_parse_ts(obj["published_at"]),
        resolution=Resolution(obj["resolution"]),
        deltas=tuple(obj["deltas"]),
    )


def truth_to_obj(t: GroundTruthSeries) -> dict:
    return {
        "video_id": t.video_id,
        "channel_id": t.channel_id,
        "published_at": _format_ts(t.published_at),
        "resolution": t.resolution.value,
        "views": list(t.views),
        "corrections": list(t.corrections),
    }


def obj_to_truth(obj: dict) -> GroundTruthSeries:
    return GroundTruthSeries(
        video_id=obj["video_id"],
        channel_id=obj["channel_id"],
        published_at=_parse_ts(obj["published_at"]),
        resolution=Resolution(obj["resolution"]),
        views=tuple(obj["views"]),
        corrections=tuple(obj["corrections"]),
    )


def estimate_to_obj(e: CorrectionEstimate) -> dict:
    return {"video_id": e.video_id, "estimates": list(e.estimates)}


def obj_to_estimate(obj: dict) -> CorrectionEstimate:
    return CorrectionEstimate(video_id=obj["video_id"], estimates=tuple(obj["estimates"]))


def write_jsonl(path, objs: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_jsonl(path) -> Iterator[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from exc


def write_view_series(path, items: Iterable[ViewSeries]) -> None:
    write_jsonl(path, (series_to_obj(s) for s in items))


def read_view_series(path) -> list:
    return [obj_to_series(o) for o in read_jsonl(path)]


def write_ground_truth(path, items: Iterable[GroundTruthSeries]) -> None:
    write_jsonl(path, (truth_to_obj(t) for t in items))


def read_ground_truth(path) -> list:
    return [obj_to_truth(o) for o in read_jsonl(path)]


def write_estimates(path, items: Iterable[CorrectionEstimate]) -> None:
    write_jsonl(path, (estimate_to_obj(e) for e in items))


def read_estimates(path) -> list:
    return [obj_to_estimate(o) for o in read_jsonl(path)]

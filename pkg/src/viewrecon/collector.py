"""Quota-aware polling scheduler and append-only poll persistence.

The platform exposes only a video's current total view count, and an access
key allows a fixed number of requests per day.  The scheduler polls each
monitored video on a fixed grid anchored to its publication hour, defers the
overflow when the daily budget runs out (missed grid times stay missing, they
are never zero-filled), and stops at the monitoring horizon.

Ingestion is idempotent: replaying a poll log reproduces an identical store.
The network side is a single pluggable callable ``fetch(video_id, now) ->
total``; a simulated fetcher backed by ground-truth corpora is included.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from datetime import date, datetime, timedelta
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    MAX_HOUR_SLOTS,
    GroundTruthSeries,
    Resolution,
    ViewSeries,
    floor_to_hour,
    observe,
)

DEFAULT_QUOTA = 10000
DEFAULT_INTERVAL = timedelta(hours=1)
DEFAULT_HORIZON = timedelta(hours=MAX_HOUR_SLOTS)


@dataclass
class CollectorConfig:
    requests_per_day: int = DEFAULT_QUOTA
    poll_interval_minutes: int = 60
    horizon_hours: int = MAX_HOUR_SLOTS
    timezone_offset_hours: int = 0  # shifts the quota day boundary

    @property
    def poll_interval(self) -> timedelta:
        return timedelta(minutes=self.poll_interval_minutes)

    @property
    def horizon(self) -> timedelta:
        return timedelta(hours=self.horizon_hours)


def config_from_file(path) -> CollectorConfig:
    known = {f.name for f in fields(CollectorConfig)}
    values: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = int(val)
    return CollectorConfig(**values)


@dataclass
class QuotaBudget:
    """Daily request ceiling with automatic day-boundary resets."""

    requests_per_day: int = DEFAULT_QUOTA
    requests_used_today: int = 0
    day_start: Optional[datetime] = None
    timezone_offset_hours: int = 0

    def _boundary(self, now: datetime) -> datetime:
        local = now + timedelta(hours=self.timezone_offset_hours)
        midnight = local.replace(hour=0, minute=0, second=0, microsecond=0)
        return midnight - timedelta(hours=self.timezone_offset_hours)

    def roll(self, now: datetime) -> None:
        boundary = self._boundary(now)
        if self.day_start is None or boundary > self.day_start:
            self.day_start = boundary
            self.requests_used_today = 0

    def remaining(self, now: datetime) -> int:
        self.roll(now)
        return self.requests_per_day - self.requests_used_today

    def consume(self, n: int, now: datetime) -> None:
        self.roll(now)
        if self.requests_used_today + n > self.requests_per_day:
            raise ValueError("quota exceeded")
        self.requests_used_today += n


@dataclass
class MonitorJob:
    """Polling state for one video."""

    video_id: str
    published_at: datetime
    poll_interval: timedelta = DEFAULT_INTERVAL
    horizon: timedelta = DEFAULT_HORIZON
    next_poll_at: Optional[datetime] = None

    def __post_init__(self) -> None:
        if self.next_poll_at is None:
            self.next_poll_at = floor_to_hour(self.published_at) + self.poll_interval

    @property
    def last_due(self) -> datetime:
        return self.published_at + self.horizon

    def finished(self) -> bool:
        return self.next_poll_at > self.last_due


@dataclass
class PlanResult:
    batch: List[MonitorJob]
    deferred: List[MonitorJob]
    finished: List[MonitorJob]
    expired: List[MonitorJob]


def plan_cycle(
    jobs: Sequence[MonitorJob], budget: QuotaBudget, now: datetime
) -> PlanResult:
    """Select due jobs, oldest due first, truncated to the remaining quota.

    Jobs whose horizon has passed are never scheduled; a due job whose whole
    remaining grid now lies in the past is expired (its polls are lost), while
    over-quota jobs are merely deferred.
    """
    due = []
    finished = []
    expired = []
    for job in jobs:
        if job.finished():
            finished.append(job)
        elif now > job.last_due:
            expired.append(job)
        elif job.next_poll_at <= now:
            due.append(job)
    due.sort(key=lambda j: (j.next_poll_at, j.video_id))
    room = max(0, budget.remaining(now))
    return PlanResult(
        batch=due[:room], deferred=due[room:], finished=finished, expired=expired
    )


@dataclass(frozen=True)
class PollRecord:
    video_id: str
    timestamp: datetime
    total: int

    def to_obj(self) -> dict:
        return {
            "id": self.video_id,
            "ts": self.timestamp.isoformat(),
            "total": self.total,
        }

    @staticmethod
    def from_obj(obj: dict) -> "PollRecord":
        return PollRecord(
            video_id=obj["id"],
            timestamp=datetime.fromisoformat(obj["ts"]),
            total=int(obj["total"]),
        )


def append_poll(path, record: PollRecord) -> None:
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(record.to_obj(), separators=(",", ":")) + "\n")


def read_poll_log(path) -> List[PollRecord]:
    """Read a poll log, tolerating a torn final line from a crashed append."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    complete = lines[:-1]  # text after the last newline is a torn partial
    tail = lines[-1]
    for lineno, line in enumerate(complete, start=1):
        if not line.strip():
            continue
        try:
            records.append(PollRecord.from_obj(json.loads(line)))
        except (json.JSONDecodeError, KeyError) as exc:
            raise ValueError(f"{path}:{lineno}: corrupt poll record: {exc}") from exc
    if tail.strip():
        try:
            records.append(PollRecord.from_obj(json.loads(tail)))
        except (json.JSONDecodeError, KeyError):
            pass  # torn tail record is expected after a crash
    return records


class PollStore:
    """Per-video delta slots derived from cumulative totals.

    The view counter is zero at publication, which serves as the baseline for
    the first poll.  Slots that never received a poll stay missing (``None``)
    rather than zero.  Ingestion is keyed by (video_id, timestamp): replays
    are no-ops, conflicting replays and timestamp regressions are rejected.
    """

    def __init__(self) -> None:
        self._meta: Dict[str, Tuple[datetime, str, timedelta]] = {}
        self._slots: Dict[str, Dict[int, int]] = {}
        self._last: Dict[str, Tuple[datetime, int]] = {}
        self._seen: Dict[Tuple[str, datetime], int] = {}

    def register(
        self,
        video_id: str,
        published_at: datetime,
        channel_id: str = "",
        poll_interval: timedelta = DEFAULT_INTERVAL,
    ) -> None:
        if video_id in self._meta:
            return
        self._meta[video_id] = (published_at, channel_id, poll_interval)
        self._slots[video_id] = {}
        self._last[video_id] = (floor_to_hour(published_at), 0)

    def record_poll(
        self, video_id: str, timestamp: datetime, total: int
    ) -> Optional[Tuple[int, int]]:
        """Ingest one (timestamp, total) reading; returns (slot, delta).

        Returns None for an exact replay of an already-seen poll.
        """
        if video_id not in self._meta:
            raise KeyError(f"video {video_id} not registered")
        if total < 0:
            raise ValueError("total view count cannot be negative")
        key = (video_id, timestamp)
        if key in self._seen:
            if self._seen[key] != total:
                raise ValueError(
                    f"{video_id}@{timestamp}: conflicting totals "
                    f"{self._seen[key]} vs {total}"
                )
            return None
        published_at, _, interval = self._meta[video_id]
        anchor = floor_to_hour(published_at)
        last_ts, last_total = self._last[video_id]
        if timestamp < last_ts:
            raise ValueError(
                f"{video_id}: timestamp regression {timestamp} < {last_ts}"
            )
        offset = timestamp - anchor
        if offset <= timedelta(0):
            raise ValueError(f"{video_id}: poll at or before publication anchor")
        steps, rem = divmod(offset, interval)
        slot = int(steps) - 1 if rem == timedelta(0) else int(steps)
        delta = total - last_total
        slots = self._slots[video_id]
        slots[slot] = slots.get(slot, 0) + delta
        self._last[video_id] = (timestamp, total)
        self._seen[key] = total
        return slot, delta

    def compact(self) -> List[ViewSeries]:
        """Freeze the store into observed series; missing slots become None."""
        out = []
        for video_id in sorted(self._meta):
            published_at, channel_id, _ = self._meta[video_id]
            slots = self._slots[video_id]
            n = max(slots) + 1 if slots else 0
            deltas = tuple(slots.get(i) for i in range(n))
            out.append(
                ViewSeries(
                    video_id=video_id,
                    channel_id=channel_id,
                    published_at=published_at,
                    resolution=Resolution.HOUR,
                    deltas=deltas,
                )
            )
        return out


def record_poll(store: PollStore, video_id: str, timestamp: datetime, total: int):
    return store.record_poll(video_id, timestamp, total)


def replay_log(path, store: PollStore) -> int:
    n = 0
    for rec in read_poll_log(path):
        store.record_poll(rec.video_id, rec.timestamp, rec.total)
        n += 1
    return n


class SimulatedFetcher:
    """Serves cumulative observed totals out of a ground-truth corpus."""

    def __init__(self, truths: Sequence[GroundTruthSeries]):
        self._series: Dict[str, Tuple[datetime, timedelta, np.ndarray]] = {}
        for t in truths:
            obs = observe(t)
            cum = np.cumsum(obs.deltas_array()).astype(np.int64)
            self._series[t.video_id] = (
                floor_to_hour(t.published_at),
                t.resolution.slot_duration,
                cum,
            )

    def __call__(self, video_id: str, now: datetime) -> int:
        anchor, slot_len, cum = self._series[video_id]
        elapsed = (now - anchor) // slot_len
        if elapsed <= 0:
            return 0
        k = min(int(elapsed), cum.size)
        return int(cum[k - 1])


@dataclass
class StarvationReport:
    """Quota pressure summary: what was polled, deferred, or lost."""

    polls_by_day: Dict[date, int] = field(default_factory=dict)
    missed_by_day: Dict[date, int] = field(default_factory=dict)
    finished_jobs: int = 0

    def to_obj(self) -> dict:
        return {
            "polls_by_day": {d.isoformat(): n for d, n in sorted(self.polls_by_day.items())},
            "missed_by_day": {d.isoformat(): n for d, n in sorted(self.missed_by_day.items())},
            "finished_jobs": self.finished_jobs,
        }


def _advance(job: MonitorJob, now: datetime, report: StarvationReport) -> None:
    """Fulfil the latest due grid time <= now; earlier misses are recorded."""
    while job.next_poll_at + job.poll_interval <= now:
        report.missed_by_day.setdefault(job.next_poll_at.date(), 0)
        report.missed_by_day[job.next_poll_at.date()] += 1
        job.next_poll_at += job.poll_interval
    job.next_poll_at += job.poll_interval


def run_simulated(
    jobs: Sequence[MonitorJob],
    budget: QuotaBudget,
    fetch: Callable[[str, datetime], int],
    store: PollStore,
    start: datetime,
    end: datetime,
    cycle: timedelta = DEFAULT_INTERVAL,
    log_path=None,
) -> StarvationReport:
    """Drive the scheduler over a virtual clock from ``start`` to ``end``."""
    report = StarvationReport()
    jobs = list(jobs)
    now = start
    while now <= end:
        plan = plan_cycle(jobs, budget, now)
        for job in plan.expired:
            # All remaining grid times are in the past: lost, never polled.
            while not job.finished():
                report.missed_by_day.setdefault(job.next_poll_at.date(), 0)
                report.missed_by_day[job.next_poll_at.date()] += 1
                job.next_poll_at += job.poll_interval
        for job in plan.batch:
            budget.consume(1, now)
            total = fetch(job.video_id, now)
            rec = PollRecord(job.video_id, now, total)
            store.record_poll(rec.video_id, rec.timestamp, rec.total)
            if log_path is not None:
                append_poll(log_path, rec)
            report.polls_by_day[now.date()] = report.polls_by_day.get(now.date(), 0) + 1
            _advance(job, now, report)
        now += cycle
    # Account for misses still pending when the run stops.
    for job in jobs:
        t = job.next_poll_at
        while t <= min(end, job.last_due):
            report.missed_by_day.setdefault(t.date(), 0)
            report.missed_by_day[t.date()] += 1
            t += job.poll_interval
    report.finished_jobs = sum(1 for j in jobs if j.finished())
    return report


def jobs_from_truths(
    truths: Sequence[GroundTruthSeries],
    store: PollStore,
    poll_interval: timedelta = DEFAULT_INTERVAL,
    horizon: timedelta = DEFAULT_HORIZON,
) -> List[MonitorJob]:
    """One monitor job per ground-truth video, registered in ``store``."""
    jobs = []
    for t in truths:
        store.register(t.video_id, t.published_at, t.channel_id, poll_interval)
        jobs.append(
            MonitorJob(
                video_id=t.video_id,
                published_at=t.published_at,
                poll_interval=poll_interval,
                horizon=horizon,
            )
        )
    return jobs

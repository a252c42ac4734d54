"""Corpus analyses over observed series plus correction estimates.

"Real views" throughout means the reconstructed per-hour view count: observed
delta plus estimated correction.  All functions match estimates to series by
video_id and are order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import timedelta
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy import stats as sstats

from .core import CorrectionEstimate, Resolution, ViewSeries, slot_start


@dataclass(frozen=True)
class LorenzCurve:
    points: tuple  # (population fraction, mass fraction), (0,0) .. (1,1)
    gini: float


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float  # base-10 logs
    r_squared: float
    slope_ci_95: Tuple[float, float]
    n: int


@dataclass(frozen=True)
class CoverageStats:
    channel_fraction: float
    video_fraction: float
    total_corrections: int
    correction_view_ratio: float


@dataclass(frozen=True)
class MidnightProfile:
    """Normalized activity curves vs hours since midnight before publication."""

    offsets: tuple
    views: tuple
    corrections: tuple
    corrected_videos: tuple


@dataclass(frozen=True)
class TimingReport:
    percentiles: tuple
    fraction_before: tuple
    fraction_after_stop: float
    n_videos: int


def _pair(observed: Sequence[ViewSeries], estimates: Sequence[CorrectionEstimate]):
    by_id = {e.video_id: e for e in estimates}
    if len(by_id) != len(estimates):
        raise ValueError("duplicate video_id in estimates")
    pairs = []
    for s in observed:
        est = by_id.get(s.video_id)
        if est is None:
            raise ValueError(f"no estimate for video {s.video_id}")
        if len(est) != len(s):
            raise ValueError(f"{s.video_id}: estimate/series length mismatch")
        if s.resolution is not Resolution.HOUR:
            raise ValueError("analyses expect hourly series")
        pairs.append((s, est))
    return pairs


def coverage_stats(
    observed: Sequence[ViewSeries], estimates: Sequence[CorrectionEstimate]
) -> CoverageStats:
    """How widespread corrections are, and their share of real views."""
    pairs = _pair(observed, estimates)
    channels: Dict[str, bool] = {}
    hit_videos = 0
    total_corr = 0
    total_views = 0
    for s, est in pairs:
        e = est.estimates_array()
        has = bool((e > 0).any())
        channels[s.channel_id] = channels.get(s.channel_id, False) or has
        hit_videos += int(has)
        total_corr += int(e.sum())
        d = s.deltas_array()
        total_views += int(np.nansum(d)) + int(e.sum())
    n_videos = len(pairs)
    n_channels = len(channels)
    return CoverageStats(
        channel_fraction=sum(channels.values()) / n_channels if n_channels else 0.0,
        video_fraction=hit_videos / n_videos if n_videos else 0.0,
        total_corrections=total_corr,
        correction_view_ratio=total_corr / total_views if total_views > 0 else 0.0,
    )


def lorenz(values: Sequence[float]) -> LorenzCurve:
    """Lorenz curve of a nonnegative distribution, gini by trapezoidal area."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("lorenz requires at least one value")
    if (v < 0).any():
        raise ValueError("lorenz requires nonnegative values")
    total = v.sum()
    if total <= 0:
        raise ValueError("lorenz requires a positive total")
    v = np.sort(v)
    x = np.arange(v.size + 1) / v.size
    y = np.concatenate([[0.0], np.cumsum(v) / total])
    area = float(np.trapezoid(y, x))
    return LorenzCurve(
        points=tuple((float(a), float(b)) for a, b in zip(x, y)),
        gini=1.0 - 2.0 * area,
    )


_QUANTITIES = ("corrections", "corrected_videos", "views")


def hourly_rhythm(
    observed: Sequence[ViewSeries],
    estimates: Sequence[CorrectionEstimate],
    quantity: str,
    hour_shift: int = 0,
) -> List[dict]:
    """Distribution across calendar days of the per-hour-of-day totals.

    Returns 24 rows with quartiles of the daily values.  ``hour_shift``
    reinterprets the stored clock (e.g. +1 to read UTC data as CET).
    """
    if quantity not in _QUANTITIES:
        raise ValueError(f"quantity must be one of {_QUANTITIES}")
    pairs = _pair(observed, estimates)
    buckets: Dict[Tuple[object, int], float] = {}
    all_days = set()
    for s, est in pairs:
        d = s.deltas_array()
        e = est.estimates_array()
        for h in range(len(s)):
            t = slot_start(s.published_at, Resolution.HOUR, h) + timedelta(hours=hour_shift)
            key = (t.date(), t.hour)
            all_days.add(t.date())
            if quantity == "corrections":
                val = float(e[h])
            elif quantity == "corrected_videos":
                val = 1.0 if e[h] > 0 else 0.0
            else:
                val = float(e[h]) + (0.0 if np.isnan(d[h]) else float(d[h]))
            buckets[key] = buckets.get(key, 0.0) + val
    rows = []
    days = sorted(all_days)
    for hod in range(24):
        daily = [buckets.get((day, hod), 0.0) for day in days]
        q1, med, q3 = np.percentile(daily, [25, 50, 75]) if daily else (0.0, 0.0, 0.0)
        rows.append({"hour": hod, "q1": float(q1), "median": float(med), "q3": float(q3)})
    return rows


def midnight_profile(
    observed: Sequence[ViewSeries], estimates: Sequence[CorrectionEstimate]
) -> MidnightProfile:
    """Sum views/corrections/corrected-videos per hour since the midnight
    before each video's publication; curves normalized to unit maximum."""
    pairs = _pair(observed, estimates)
    max_offset = 0
    for s, _ in pairs:
        max_offset = max(max_offset, s.published_at.hour + len(s))
    views = np.zeros(max_offset)
    corr = np.zeros(max_offset)
    corrected = np.zeros(max_offset)
    for s, est in pairs:
        base = s.published_at.hour
        d = s.deltas_array()
        e = est.estimates_array()
        for h in range(len(s)):
            off = base + h
            corr[off] += float(e[h])
            views[off] += float(e[h]) + (0.0 if np.isnan(d[h]) else float(d[h]))
            corrected[off] += 1.0 if e[h] > 0 else 0.0

    def norm(a: np.ndarray) -> tuple:
        m = a.max()
        return tuple((a / m if m > 0 else a).tolist())

    return MidnightProfile(
        offsets=tuple(range(max_offset)),
        views=norm(views),
        corrections=norm(corr),
        corrected_videos=norm(corrected),
    )


def corrections_vs_popularity(
    observed: Sequence[ViewSeries],
    estimates: Sequence[CorrectionEstimate],
    view_percentiles: Sequence[float] = tuple(np.arange(1, 21) * 0.05),
) -> TimingReport:
    """Correction mass accumulated by the time each real-view percentile is
    reached, pooled over videos, plus the share falling after views stop."""
    percentiles = [float(p) for p in view_percentiles]
    if any(not 0 < p <= 1 for p in percentiles):
        raise ValueError("percentiles must lie in (0, 1]")
    pairs = _pair(observed, estimates)
    before = np.zeros(len(percentiles))
    after_stop = 0.0
    total = 0.0
    n_used = 0
    for s, est in pairs:
        d = s.deltas_array()
        e = est.estimates_array().astype(np.float64)
        rv = np.where(np.isnan(d), 0.0, d) + e
        cum = np.cumsum(rv)
        final = cum[-1] if cum.size else 0.0
        if final <= 0:
            continue
        n_used += 1
        total += float(e.sum())
        for j, p in enumerate(percentiles):
            reach = int(np.argmax(cum >= p * final))
            before[j] += float(e[: reach + 1].sum())
        active = np.flatnonzero(rv > 0)
        last_active = int(active[-1]) if active.size else -1
        after_stop += float(e[last_active + 1 :].sum())
    if total <= 0:
        return TimingReport(tuple(percentiles), tuple(0.0 for _ in percentiles), 0.0, n_used)
    return TimingReport(
        percentiles=tuple(percentiles),
        fraction_before=tuple((before / total).tolist()),
        fraction_after_stop=after_stop / total,
        n_videos=n_used,
    )


def channel_totals(
    observed: Sequence[ViewSeries], estimates: Sequence[CorrectionEstimate]
) -> List[Tuple[str, float, float]]:
    """Per-channel (id, total real views, total corrections)."""
    pairs = _pair(observed, estimates)
    acc: Dict[str, List[float]] = {}
    for s, est in pairs:
        e = float(est.estimates_array().sum())
        v = float(np.nansum(s.deltas_array())) + e
        tot = acc.setdefault(s.channel_id, [0.0, 0.0])
        tot[0] += v
        tot[1] += e
    return [(cid, v, c) for cid, (v, c) in sorted(acc.items())]


def loglog_regression(pairs: Sequence[Tuple[float, float]]) -> RegressionFit:
    """OLS of log10(corrections) on log10(views) with a t-based 95% slope CI.

    Pairs with a nonpositive view or correction total are excluded (their
    logs are undefined); at least 3 usable pairs are required.
    """
    usable = [(v, c) for v, c in pairs if v > 0 and c > 0]
    n = len(usable)
    if n < 3:
        raise ValueError(f"loglog_regression needs >= 3 usable pairs, got {n}")
    x = np.log10([v for v, _ in usable])
    y = np.log10([c for _, c in usable])
    sxx = float(np.sum((x - x.mean()) ** 2))
    if sxx == 0.0:
        raise ValueError("views are constant across channels; slope undefined")
    sxy = float(np.sum((x - x.mean()) * (y - y.mean())))
    slope = sxy / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ssr = float(np.sum(resid**2))
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if sst == 0.0 and ssr == 0.0 else 1.0 - ssr / sst
    r2 = min(max(r2, 0.0), 1.0)
    se = np.sqrt(ssr / (n - 2) / sxx) if n > 2 else 0.0
    tcrit = float(sstats.t.ppf(0.975, n - 2))
    return RegressionFit(
        slope=float(slope),
        intercept=intercept,
        r_squared=float(r2),
        slope_ci_95=(float(slope - tcrit * se), float(slope + tcrit * se)),
        n=n,
    )

"""Synthetic ground-truth corpora with realistic view and correction dynamics.

Videos get a strong initial burst that decays as a power law, modulated by a
circadian factor peaking late in the evening.  Fake views are injected on top
of the legitimate intensity at a per-channel rate tied to channel popularity
through a power law, so that per-channel totals follow
``log c ~ log k + gamma * log v``.  Injected fakes accumulate in an
outstanding pool that the platform drains once per day at a random time inside
a fixed correction window, plus optional small residual removals.

The injection model (when fakes are generated) is this module's construction;
only the removal side has an observable real-world counterpart.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields, replace
from datetime import date, datetime, time, timedelta
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .core import (
    MAX_FIVE_MIN_SLOTS,
    GroundTruthSeries,
    Resolution,
    floor_to_hour,
)

SIM_EPOCH = datetime(2022, 2, 1, 0, 0)
PUBLISH_SPAN_DAYS = 14
CIRCADIAN_PEAK_HOUR = 23.0
# Lognormal spread (base-10) of per-channel fake totals around the power law.
FAKE_SPREAD_LOG10 = 0.2
# Per-video burst-scale jitter (natural-log sigma) within a channel.
VIDEO_JITTER_SIGMA = 0.5


@dataclass(frozen=True)
class SimConfig:
    num_channels: int = 50
    videos_per_channel: int = 20
    burst_scale_range: Tuple[float, float] = (60.0, 6000.0)  # views/hour at start
    decay_exponent: float = 1.0
    circadian_amplitude: float = 0.4
    fake_rate_exponent: float = 1.06
    fake_rate_coefficient: float = 0.035
    correction_window: Tuple[float, float] = (16.0, 18.0)  # hours of day, half-open
    daily_correction_completeness: float = 0.9
    residual_correction_rate: float = 0.0
    rng_seed: int = 20220201

    def validate(self) -> None:
        lo, hi = self.burst_scale_range
        if not (0 < lo <= hi):
            raise ValueError("burst_scale_range must satisfy 0 < lo <= hi")
        if self.num_channels < 1 or self.videos_per_channel < 1:
            raise ValueError("need at least one channel and one video per channel")
        if self.decay_exponent <= 0:
            raise ValueError("decay_exponent must be positive")
        if not 0 <= self.circadian_amplitude < 1:
            raise ValueError("circadian_amplitude must be in [0, 1)")
        if self.fake_rate_exponent <= 0:
            raise ValueError("fake_rate_exponent must be positive")
        if self.fake_rate_coefficient < 0:
            raise ValueError("fake_rate_coefficient must be nonnegative")
        wlo, whi = self.correction_window
        if not (0 <= wlo < whi <= 24):
            raise ValueError("correction_window must be within [0, 24)")
        if not 0 <= self.daily_correction_completeness <= 1:
            raise ValueError("daily_correction_completeness must be in [0, 1]")
        if not 0 <= self.residual_correction_rate <= 1:
            raise ValueError("residual_correction_rate must be in [0, 1]")


_PAIR_FIELDS = {"burst_scale_range", "correction_window"}
_INT_FIELDS = {"num_channels", "videos_per_channel", "rng_seed"}


def config_from_file(path) -> SimConfig:
    """Parse a flat ``key = value`` config file; unknown keys are rejected."""
    known = {f.name for f in fields(SimConfig)}
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
            if key in _PAIR_FIELDS:
                parts = [p for p in val.replace(",", " ").split() if p]
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: {key} needs two numbers")
                values[key] = (float(parts[0]), float(parts[1]))
            elif key in _INT_FIELDS:
                values[key] = int(val)
            else:
                values[key] = float(val)
    config = SimConfig(**values)
    config.validate()
    return config


def config_to_file(config: SimConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for f in fields(SimConfig):
            val = getattr(config, f.name)
            if f.name in _PAIR_FIELDS:
                fh.write(f"{f.name} = {val[0]}, {val[1]}\n")
            else:
                fh.write(f"{f.name} = {val}\n")


def _token(*parts) -> str:
    digest = hashlib.sha1(":".join(str(p) for p in parts).encode()).hexdigest()
    return digest[:12]


def decay_kernel(n_slots: int, beta: float) -> np.ndarray:
    """Per-5-min-slot decay weights (t/12 + 1)^(-beta)."""
    t = np.arange(n_slots, dtype=np.float64)
    return (t / 12.0 + 1.0) ** (-beta)


@dataclass(frozen=True)
class ChannelState:
    """Per-channel draws shared by all of the channel's videos."""

    channel_id: str
    burst_scale: float  # expected views/hour at publication
    fake_multiplier: float  # fake intensity as a multiple of legit intensity
    pass_minutes: Dict[date, int]  # daily correction pass, minute-of-day


def _simulation_days(config: SimConfig) -> List[date]:
    horizon = timedelta(days=PUBLISH_SPAN_DAYS) + timedelta(hours=MAX_FIVE_MIN_SLOTS // 12 + 48)
    n_days = horizon.days + 1
    return [(SIM_EPOCH + timedelta(days=i)).date() for i in range(n_days)]


def make_channel_state(config: SimConfig, channel_index: int) -> ChannelState:
    """Deterministic channel draws from (rng_seed, channel_index)."""
    rng = np.random.default_rng(
        np.random.SeedSequence(config.rng_seed, spawn_key=(1, channel_index))
    )
    lo, hi = config.burst_scale_range
    scale = float(np.exp(rng.uniform(math.log(lo), math.log(hi))))
    if config.fake_rate_coefficient > 0:
        kernel_total = float(decay_kernel(MAX_FIVE_MIN_SLOTS, config.decay_exponent).sum())
        expected_channel_views = config.videos_per_channel * scale / 12.0 * kernel_total
        noise = 10.0 ** rng.normal(0.0, FAKE_SPREAD_LOG10)
        multiplier = (
            config.fake_rate_coefficient
            * expected_channel_views ** (config.fake_rate_exponent - 1.0)
            * noise
        )
    else:
        multiplier = 0.0
    wlo, whi = config.correction_window
    lo_min = int(round(wlo * 60))
    hi_min = int(round(whi * 60))
    pass_minutes = {
        d: int(rng.integers(lo_min, hi_min)) for d in _simulation_days(config)
    }
    return ChannelState(
        channel_id=_token("ch", config.rng_seed, channel_index),
        burst_scale=scale,
        fake_multiplier=multiplier,
        pass_minutes=pass_minutes,
    )


def _pass_slots(anchor: datetime, n_slots: int, state: ChannelState) -> List[int]:
    slots = []
    end = anchor + n_slots * timedelta(minutes=5)
    d = anchor.date()
    while d <= end.date():
        minute = state.pass_minutes.get(d)
        if minute is not None:
            pass_dt = datetime.combine(d, time(minute // 60, minute % 60))
            offset = (pass_dt - anchor).total_seconds()
            if 0 <= offset < n_slots * 300:
                slots.append(int(offset // 300))
        d = d + timedelta(days=1)
    return sorted(slots)


def generate_video(
    config: SimConfig,
    state: ChannelState,
    rng: np.random.Generator,
    n_slots: int = MAX_FIVE_MIN_SLOTS,
) -> GroundTruthSeries:
    """One synthetic 5-minute ground-truth series.

    Draw order is fixed (publish time, burst jitter, legit counts, fake
    counts, removals) so a given generator state always produces the same
    series.
    """
    uid = int(rng.integers(1 << 62))
    publish_minute = int(rng.integers(0, PUBLISH_SPAN_DAYS * 24 * 60))
    published_at = SIM_EPOCH + timedelta(minutes=publish_minute)
    scale = state.burst_scale * float(np.exp(rng.normal(0.0, VIDEO_JITTER_SIGMA)))

    t = np.arange(n_slots, dtype=np.float64)
    hod = (published_at.hour + t / 12.0) % 24.0
    circadian = 1.0 + config.circadian_amplitude * np.cos(
        2.0 * math.pi * (hod - CIRCADIAN_PEAK_HOUR) / 24.0
    )
    lam = scale / 12.0 * decay_kernel(n_slots, config.decay_exponent) * circadian
    legit = rng.poisson(lam)
    if state.fake_multiplier > 0:
        fake = rng.poisson(state.fake_multiplier * lam)
    else:
        fake = np.zeros(n_slots, dtype=np.int64)
    views = legit + fake

    anchor = floor_to_hour(published_at)
    passes = _pass_slots(anchor, n_slots, state)
    corrections = np.zeros(n_slots, dtype=np.int64)
    q = config.daily_correction_completeness
    r = config.residual_correction_rate
    if r == 0.0:
        # Only daily passes touch the pool; walk them directly.
        cum_fake = np.cumsum(fake)
        removed = 0
        for s in passes:
            pool = int(cum_fake[s]) - removed
            take = int(math.floor(q * pool + 1e-9))
            corrections[s] += take
            removed += take
    else:
        pass_set = set(passes)
        pool = 0
        for s in range(n_slots):
            pool += int(fake[s])
            take = 0
            if s in pass_set:
                take += int(math.floor(q * pool + 1e-9))
            residual = int(rng.binomial(pool - take, r)) if pool - take > 0 else 0
            take += residual
            corrections[s] = take
            pool -= take

    return GroundTruthSeries(
        video_id=_token("vid", state.channel_id, uid),
        channel_id=state.channel_id,
        published_at=published_at,
        resolution=Resolution.FIVE_MIN,
        views=tuple(views.tolist()),
        corrections=tuple(corrections.tolist()),
    )


def video_rng(config: SimConfig, channel_index: int, video_index: int) -> np.random.Generator:
    """Independent per-video stream; identical regardless of generation order."""
    return np.random.default_rng(
        np.random.SeedSequence(config.rng_seed, spawn_key=(2, channel_index, video_index))
    )


def generate_channel(config: SimConfig, channel_index: int) -> List[GroundTruthSeries]:
    state = make_channel_state(config, channel_index)
    return [
        generate_video(config, state, video_rng(config, channel_index, vi))
        for vi in range(config.videos_per_channel)
    ]


def generate_corpus(config: SimConfig) -> List[GroundTruthSeries]:
    """All channels' videos, deterministic in ``config.rng_seed``."""
    config.validate()
    corpus: List[GroundTruthSeries] = []
    for ci in range(config.num_channels):
        corpus.extend(generate_channel(config, ci))
    return corpus

"""Heuristic correction estimator driven by negative observed deltas.

In an hour where the counter went down, the removal must have been at least
as large as the drop, plus however many new views the hour would normally
have collected.  The expected views are proxied by a statistic (minimum or
mean) of the neighboring hours' deltas inside a symmetric window; negative
neighbors are floored at zero so one removal cannot contaminate the proxy of
another.  Hours with nonnegative deltas estimate zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from . import metrics
from .core import CorrectionEstimate, GroundTruthSeries, Resolution, ViewSeries


class Statistic(str, Enum):
    MINIMUM = "minimum"
    MEAN = "mean"


@dataclass(frozen=True)
class WindowSpec:
    """Symmetric neighbor window: ``half_width_hours`` on each side."""

    half_width_hours: int = 1
    statistic: Statistic = Statistic.MINIMUM

    def __post_init__(self) -> None:
        object.__setattr__(self, "statistic", Statistic(self.statistic))
        if self.half_width_hours < 1:
            raise ValueError("half_width_hours must be >= 1")


DEFAULT_WINDOW = WindowSpec(1, Statistic.MINIMUM)


def expected_views(deltas: np.ndarray, hour: int, window: WindowSpec) -> float:
    """Window statistic of the clamped neighbor deltas around ``hour``.

    Only in-range, non-missing neighbors enter the statistic, each floored at
    zero.  An empty neighborhood yields 0.
    """
    lo = max(0, hour - window.half_width_hours)
    hi = min(len(deltas), hour + window.half_width_hours + 1)
    neigh = np.concatenate([deltas[lo:hour], deltas[hour + 1 : hi]])
    neigh = neigh[~np.isnan(neigh)]
    if neigh.size == 0:
        return 0.0
    neigh = np.maximum(neigh, 0.0)
    if window.statistic is Statistic.MINIMUM:
        return float(neigh.min())
    return float(neigh.mean())


def benchmark_estimate(
    observed: ViewSeries, window: WindowSpec = DEFAULT_WINDOW
) -> CorrectionEstimate:
    """Estimate corrections at negative-delta hours: drop size plus expected views."""
    if observed.resolution is not Resolution.HOUR:
        raise ValueError("benchmark_estimate requires hourly resolution")
    deltas = observed.deltas_array()
    est = np.zeros(len(deltas), dtype=np.int64)
    negative = np.flatnonzero(deltas < 0)
    for h in negative:
        est[h] = max(0, int(-deltas[h] + expected_views(deltas, int(h), window)))
    return CorrectionEstimate(video_id=observed.video_id, estimates=tuple(est.tolist()))


def window_sweep(
    truths: Sequence[GroundTruthSeries],
    half_widths: Iterable[int],
    statistics: Iterable[Statistic],
) -> List[Tuple[WindowSpec, metrics.ReconstructionReport]]:
    """Score the benchmark estimator over a grid of window settings."""
    half_widths = list(half_widths)
    statistics = [Statistic(s) for s in statistics]
    if not half_widths or not statistics:
        raise ValueError("window_sweep requires nonempty grids")
    results = []
    for stat in statistics:
        for hw in half_widths:
            spec = WindowSpec(hw, stat)
            report = metrics.evaluate(
                truths, lambda obs, s=spec: benchmark_estimate(obs, s)
            )
            results.append((spec, report))
    return results


def sweep_rows(results) -> List[dict]:
    """Flatten sweep results for CSV emission."""
    rows = []
    for spec, report in results:
        rows.append(
            {
                "half_width_hours": spec.half_width_hours,
                "statistic": spec.statistic.value,
                **report.to_obj(),
            }
        )
    return rows

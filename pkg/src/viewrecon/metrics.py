"""Corpus-level reconstruction-error fractions and the naive hourly baseline.

Four errors quantify how well a set of per-hour correction estimates matches
ground truth, pooled over all (hour, video) slots:

* lost corrections:   under-estimated correction mass / true correction mass
* added corrections:  over-estimated correction mass / true correction mass
* lost interventions: true-correction slots with a zero estimate / true slots
* added interventions: spurious estimated slots / true slots

Correction masses compare magnitudes slot by slot; intervention counts only
ask whether a slot was flagged at all.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Sequence, Tuple

import numpy as np

from .core import (
    CorrectionEstimate,
    GroundTruthSeries,
    Resolution,
    ViewSeries,
    hourly_truth,
    observe,
)


class UndefinedMetricError(ValueError):
    """Raised when a fraction's denominator is zero."""


@dataclass(frozen=True)
class ReconstructionReport:
    """The four pooled error fractions plus their denominators."""

    lost_corrections: float
    added_corrections: float
    lost_interventions: float
    added_interventions: float
    total_corrections: int
    total_intervention_slots: int

    def to_obj(self) -> dict:
        return {
            "lost_corrections": self.lost_corrections,
            "added_corrections": self.added_corrections,
            "lost_interventions": self.lost_interventions,
            "added_interventions": self.added_interventions,
            "total_corrections": self.total_corrections,
            "total_intervention_slots": self.total_intervention_slots,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_obj())


def naive_estimate(observed: ViewSeries) -> CorrectionEstimate:
    """Baseline: corrections are the negative deltas, nothing more.

    Missing slots contribute zero.
    """
    if observed.resolution is not Resolution.HOUR:
        raise ValueError("naive_estimate requires hourly resolution")
    est = tuple(0 if d is None else max(0, -d) for d in observed.deltas)
    return CorrectionEstimate(video_id=observed.video_id, estimates=est)


def _pair_arrays(
    truths: Sequence[GroundTruthSeries], estimates: Sequence[CorrectionEstimate]
) -> Iterable[Tuple[np.ndarray, np.ndarray]]:
    """Match estimates to hourly truths by video_id; validate alignment."""
    by_id: Dict[str, CorrectionEstimate] = {e.video_id: e for e in estimates}
    if len(by_id) != len(estimates):
        raise ValueError("duplicate video_id in estimates")
    for truth in truths:
        est = by_id.pop(truth.video_id, None)
        if est is None:
            raise ValueError(f"no estimate for video {truth.video_id}")
        hourly = hourly_truth(truth)
        if len(est) != len(hourly):
            raise ValueError(
                f"{truth.video_id}: estimate length {len(est)} != "
                f"{len(hourly)} hourly slots"
            )
        yield hourly.corrections_array(), est.estimates_array()
    if by_id:
        raise ValueError(f"estimates for unknown videos: {sorted(by_id)}")


def _sums(truths, estimates) -> Tuple[int, int, int, int, int, int]:
    lost_mass = added_mass = total_mass = 0
    lost_slots = added_slots = true_slots = 0
    for c, e in _pair_arrays(truths, estimates):
        diff = c - e
        lost_mass += int(diff[diff > 0].sum())
        added_mass += int((-diff[diff < 0]).sum())
        total_mass += int(c.sum())
        c_pos = c > 0
        e_pos = e > 0
        true_slots += int(c_pos.sum())
        lost_slots += int((c_pos & ~e_pos).sum())
        added_slots += int((e_pos & ~c_pos).sum())
    return lost_mass, added_mass, total_mass, lost_slots, added_slots, true_slots


def lost_corrections(truths, estimates) -> float:
    """Under-estimated correction mass as a fraction of true correction mass."""
    lost, _, total, _, _, _ = _sums(truths, estimates)
    if total == 0:
        raise UndefinedMetricError("no true corrections in corpus")
    return lost / total


def added_corrections(truths, estimates) -> float:
    """Over-estimated correction mass as a fraction of true correction mass."""
    _, added, total, _, _, _ = _sums(truths, estimates)
    if total == 0:
        raise UndefinedMetricError("no true corrections in corpus")
    return added / total


def lost_interventions(truths, estimates) -> float:
    """Fraction of true-correction slots the estimate leaves at zero."""
    _, _, _, lost, _, true = _sums(truths, estimates)
    if true == 0:
        raise UndefinedMetricError("no intervention slots in corpus")
    return lost / true


def added_interventions(truths, estimates) -> float:
    """Spurious estimated slots relative to the true intervention-slot count."""
    _, _, _, _, added, true = _sums(truths, estimates)
    if true == 0:
        raise UndefinedMetricError("no intervention slots in corpus")
    return added / true


Estimator = Callable[[ViewSeries], CorrectionEstimate]


def evaluate(truths: Sequence[GroundTruthSeries], estimator: Estimator) -> ReconstructionReport:
    """Run ``estimator`` on the observable side of ``truths``, score all four errors.

    5-minute truth is aggregated to the hourly grid first; the estimator only
    ever sees the hourly observed series, exactly as a real collector would.
    """
    hourly = [hourly_truth(t) for t in truths]
    estimates = [estimator(observe(t)) for t in hourly]
    lost, added, total, lost_n, added_n, true_n = _sums(hourly, estimates)
    if total == 0:
        raise UndefinedMetricError("no true corrections in corpus")
    if true_n == 0:
        raise UndefinedMetricError("no intervention slots in corpus")
    return ReconstructionReport(
        lost_corrections=lost / total,
        added_corrections=added / total,
        lost_interventions=lost_n / true_n,
        added_interventions=added_n / true_n,
        total_corrections=total,
        total_intervention_slots=true_n,
    )


_ROWS = (
    ("Lost Corrections", "lost_corrections"),
    ("Added Corrections", "added_corrections"),
    ("Lost Interventions", "lost_interventions"),
    ("Added Interventions", "added_interventions"),
)


def format_report_table(reports: Dict[str, ReconstructionReport]) -> str:
    """Render reports as a table: one column per method, one row per error."""
    methods = list(reports)
    header = [""] + methods
    lines = []
    widths = [22] + [max(len(m), 10) + 2 for m in methods]
    lines.append("".join(h.ljust(w) for h, w in zip(header, widths)))
    lines.append("-" * sum(widths))
    for label, attr in _ROWS:
        cells = [label.ljust(widths[0])]
        for m, w in zip(methods, widths[1:]):
            cells.append(f"{getattr(reports[m], attr) * 100:.2f}%".rjust(w - 2) + "  ")
        lines.append("".join(cells).rstrip())
    return "\n".join(lines)

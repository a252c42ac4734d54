"""Independent brute-force oracles used to pin expected values.

Everything here is deliberately naive plain-Python arithmetic: explicit
double loops over (video, slot), no numpy, no imports from the estimator
paths under test.  Keep it that way.
"""

from __future__ import annotations

from datetime import datetime, timedelta


def error_fractions(truth_corrections, estimates):
    """The four reconstruction-error fractions from aligned per-slot lists.

    Args:
        truth_corrections: list (per video) of lists of true corrections.
        estimates: list (per video) of lists of estimated corrections.

    Returns a dict with the four fractions plus raw numerators/denominators.
    """
    lost_mass = 0
    added_mass = 0
    total_mass = 0
    lost_slots = 0
    added_slots = 0
    true_slots = 0
    for c_series, e_series in zip(truth_corrections, estimates):
        assert len(c_series) == len(e_series)
        for c, e in zip(c_series, e_series):
            total_mass += c
            if c > e:
                lost_mass += c - e
            if e > c:
                added_mass += e - c
            if c > 0:
                true_slots += 1
                if e == 0:
                    lost_slots += 1
            if e > 0 and c == 0:
                added_slots += 1
    return {
        "lost_corrections": lost_mass / total_mass if total_mass else None,
        "added_corrections": added_mass / total_mass if total_mass else None,
        "lost_interventions": lost_slots / true_slots if true_slots else None,
        "added_interventions": added_slots / true_slots if true_slots else None,
        "lost_mass": lost_mass,
        "added_mass": added_mass,
        "total_mass": total_mass,
        "lost_slots": lost_slots,
        "added_slots": added_slots,
        "true_slots": true_slots,
    }


def hourly_sums(values, slots_per_hour=12):
    """Sum a 5-minute list into hours, zero-padding the final partial hour."""
    out = []
    for start in range(0, len(values), slots_per_hour):
        chunk = values[start : start + slots_per_hour]
        out.append(sum(chunk))
    return out


def naive_from_deltas(deltas):
    return [max(0, -d) for d in deltas]


def benchmark_from_deltas(deltas, half_width=1, statistic="minimum"):
    """Direct transcription of the negative-delta heuristic."""
    out = []
    for h, d in enumerate(deltas):
        if d >= 0:
            out.append(0)
            continue
        lo = max(0, h - half_width)
        hi = min(len(deltas), h + half_width + 1)
        neighbors = [max(0, deltas[i]) for i in range(lo, hi) if i != h]
        if not neighbors:
            stat = 0.0
        elif statistic == "minimum":
            stat = min(neighbors)
        else:
            stat = sum(neighbors) / len(neighbors)
        out.append(max(0, int(-d + stat)))
    return out


def ols_line(xs, ys):
    """Textbook least squares: returns (slope, intercept)."""
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    slope = sxy / sxx
    return slope, my - slope * mx


def gini_single_holder(n):
    """Closed form for one holder among n equal claimants."""
    return (n - 1) / n


def random_truth_corpus(rng, max_videos=10, max_hours=12, max_correction=20):
    """Random hourly ground-truth material for oracle comparisons.

    Returns (views, corrections) lists of per-video lists; views are drawn
    large enough that some corrections hide and some invert the delta sign.
    """
    n_videos = int(rng.integers(1, max_videos + 1))
    views_all = []
    corr_all = []
    for _ in range(n_videos):
        n = int(rng.integers(1, max_hours + 1))
        views = [int(rng.integers(0, 15)) for _ in range(n)]
        corrections = []
        for v in views:
            if rng.random() < 0.4:
                corrections.append(int(rng.integers(0, max_correction + 1)))
            else:
                corrections.append(0)
        views_all.append(views)
        corr_all.append(corrections)
    return views_all, corr_all

"""Matplotlib renderers for the analysis CSV outputs.

Every renderer draws from already-computed rows, writes a single SVG, and
keeps to line/scatter primitives.  Rendering failures are the caller's
problem to swallow: data emission must never depend on a figure.
"""

from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _new_axes(xlabel: str, ylabel: str, title: str = ""):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _finish(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_lorenz(curves: Dict[str, Sequence[Tuple[float, float]]], path) -> None:
    fig, ax = _new_axes("cumulative share of videos", "cumulative share of mass")
    ax.plot([0, 1], [0, 1], color="gray", linestyle="--", linewidth=1, label="equality")
    for label, pts in curves.items():
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        ax.plot(xs, ys, label=label)
    ax.legend()
    _finish(fig, path)


def plot_rhythm(rows: List[dict], path, ylabel: str) -> None:
    hours = [r["hour"] for r in rows]
    med = [r["median"] for r in rows]
    q1 = [r["q1"] for r in rows]
    q3 = [r["q3"] for r in rows]
    fig, ax = _new_axes("hour of day", ylabel)
    ax.plot(hours, med, marker="o", markersize=3, label="median")
    ax.fill_between(hours, q1, q3, alpha=0.25, label="quartiles")
    ax.set_xticks(range(0, 24, 2))
    ax.legend()
    _finish(fig, path)


def plot_midnight(offsets, views, corrections, corrected_videos, path) -> None:
    fig, ax = _new_axes("hours since midnight before publication", "normalized total")
    ax.plot(offsets, views, label="views")
    ax.plot(offsets, corrections, label="corrections")
    ax.plot(offsets, corrected_videos, label="corrected videos")
    ax.legend()
    _finish(fig, path)


def plot_timing(percentiles, fraction_before, fraction_after_stop: float, path) -> None:
    fig, ax = _new_axes("share of real views reached", "share of corrections made")
    ax.plot([p * 100 for p in percentiles], fraction_before, marker="o", markersize=3)
    ax.axhline(
        1.0 - fraction_after_stop,
        color="gray",
        linestyle=":",
        label=f"{fraction_after_stop * 100:.0f}% after views stop",
    )
    ax.set_ylim(0, 1.05)
    ax.legend()
    _finish(fig, path)


def plot_regression(points: Sequence[Tuple[float, float]], slope: float, intercept: float, path) -> None:
    v = np.array([p[0] for p in points], dtype=np.float64)
    c = np.array([p[1] for p in points], dtype=np.float64)
    fig, ax = _new_axes("real views per channel", "corrections per channel")
    ax.scatter(v, c, s=12, alpha=0.7)
    grid = np.logspace(np.log10(v.min()), np.log10(v.max()), 50)
    ax.plot(grid, 10**intercept * grid**slope, color="crimson",
            label=f"slope {slope:.3f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.legend()
    _finish(fig, path)


def plot_sweep(rows: List[dict], path) -> None:
    """Lost/added corrections vs window half-width, one line pair per statistic."""
    fig, ax = _new_axes("window half-width (hours)", "error fraction")
    stats = sorted({r["statistic"] for r in rows})
    for stat in stats:
        sub = sorted((r for r in rows if r["statistic"] == stat),
                     key=lambda r: r["half_width_hours"])
        hw = [r["half_width_hours"] for r in sub]
        ax.plot(hw, [r["lost_corrections"] for r in sub], marker="o",
                markersize=3, label=f"lost ({stat})")
        ax.plot(hw, [r["added_corrections"] for r in sub], marker="s",
                markersize=3, linestyle="--", label=f"added ({stat})")
    ax.legend()
    _finish(fig, path)


def plot_cv_table(rows: List[dict], path) -> None:
    """Mean F1 vs tree depth, one line per (learning rate, l1) combination."""
    fig, ax = _new_axes("max depth", "mean F1")
    combos = sorted({(r["learning_rate"], r["l1_regularization"]) for r in rows})
    for lr, l1 in combos:
        sub = sorted(
            (r for r in rows if r["learning_rate"] == lr and r["l1_regularization"] == l1),
            key=lambda r: r["max_depth"],
        )
        ax.plot(
            [r["max_depth"] for r in sub],
            [r["mean_f1"] for r in sub],
            marker="o",
            markersize=3,
            label=f"lr={lr}, l1={l1}",
        )
    ax.legend(fontsize=7)
    _finish(fig, path)

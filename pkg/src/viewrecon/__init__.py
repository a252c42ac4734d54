"""Reconstruct hidden view-count corrections from coarse platform telemetry."""

__version__ = "0.1.0"

from .core import (
    CorrectionEstimate,
    GroundTruthSeries,
    InterventionEvent,
    Resolution,
    ViewSeries,
    aggregate_to_hour,
    observe,
)
from .metrics import ReconstructionReport, evaluate, naive_estimate
from .benchmark import Statistic, WindowSpec, benchmark_estimate, window_sweep
from .gbdt import ModelParams, TreeEnsembleModel
from .simgen import SimConfig, generate_corpus

__all__ = [
    "CorrectionEstimate",
    "GroundTruthSeries",
    "InterventionEvent",
    "ModelParams",
    "ReconstructionReport",
    "Resolution",
    "SimConfig",
    "Statistic",
    "TreeEnsembleModel",
    "ViewSeries",
    "WindowSpec",
    "aggregate_to_hour",
    "benchmark_estimate",
    "evaluate",
    "generate_corpus",
    "naive_estimate",
    "observe",
    "window_sweep",
    "__version__",
]

"""Hierarchical dynamic search for anomalous processes in aggregated trees."""

from .dist_models import (
    ExpRate,
    FiniteSet,
    Gauss,
    GaussBox,
    RateHalfLine,
    ShiftMix,
    Singleton,
    kl_div,
    log_density,
    mle,
    sample,
)
from .harness import CATALOG, ExperimentConfig, RiskReport, emit_report, read_report, run_monte_carlo
from .local_tests import ALLR, Active, FixedSize, KnownLLR, SeqGLLR, TestConfig
from .process_tree import NodeId, ProcessTree, validate_scenario
from .scenarios import BernoulliInterference, ExpHeavyHitter, GaussModel, KnownHypotheses
from .search_policies import DetectionResult, WalkConfig, run_hds, run_irw, run_single_walk

__version__ = "0.1.0"

__all__ = [
    "ALLR",
    "Active",
    "BernoulliInterference",
    "CATALOG",
    "DetectionResult",
    "ExpHeavyHitter",
    "ExpRate",
    "ExperimentConfig",
    "FiniteSet",
    "FixedSize",
    "Gauss",
    "GaussBox",
    "GaussModel",
    "KnownHypotheses",
    "KnownLLR",
    "NodeId",
    "ProcessTree",
    "RateHalfLine",
    "RiskReport",
    "SeqGLLR",
    "ShiftMix",
    "Singleton",
    "TestConfig",
    "WalkConfig",
    "emit_report",
    "kl_div",
    "log_density",
    "mle",
    "read_report",
    "run_hds",
    "run_irw",
    "run_monte_carlo",
    "run_single_walk",
    "sample",
    "validate_scenario",
]

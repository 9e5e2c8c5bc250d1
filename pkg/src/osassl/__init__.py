"""One-step-ahead sequential super learning for city-level cost panels."""

from .core import (
    CovariateEntry,
    CovariateSchema,
    DependencyGraph,
    Observation,
    Panel,
    PanelSlice,
    degree_stats,
    history_prefix,
    read_panel_csv,
    write_panel_csv,
)
from .learners import (
    AverageLearner,
    BoostedLinearLearner,
    KSKnnLearner,
    MeanLearner,
    MedianLearner,
    RidgeLearner,
    learner_from_config,
    screen,
)
from .superlearner import ForecastReport, ScheduleConfig, epsilon_net, run_schedule
from .synthgen import GeneratorSpec, GroundTruth, generate

__version__ = "0.1.0"

__all__ = [
    "AverageLearner", "BoostedLinearLearner", "CovariateEntry", "CovariateSchema", "DependencyGraph",
    "ForecastReport", "GeneratorSpec", "GroundTruth", "KSKnnLearner", "MeanLearner", "MedianLearner",
    "Observation", "Panel", "PanelSlice", "RidgeLearner", "ScheduleConfig", "degree_stats", "epsilon_net",
    "generate", "history_prefix", "learner_from_config", "read_panel_csv", "run_schedule", "screen",
    "write_panel_csv",
]

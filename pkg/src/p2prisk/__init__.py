"""Credit risk prediction on imbalanced peer-to-peer lending data."""

from .data_model import ClassCounts, ColumnStats, Dataset, FeatureSchema, class_counts, column_stats, select_rows
from .harness import ExperimentConfig, SyntheticSpec, generate_synthetic, render_report, run_grid
from .metrics import MetricsReport, confusion, evaluate, g_mean, roc_auc
from .resampling import ResamplePlan, resample

__version__ = "0.1.0"

__all__ = [
    "ClassCounts",
    "ColumnStats",
    "Dataset",
    "ExperimentConfig",
    "FeatureSchema",
    "MetricsReport",
    "ResamplePlan",
    "SyntheticSpec",
    "class_counts",
    "column_stats",
    "confusion",
    "evaluate",
    "g_mean",
    "generate_synthetic",
    "render_report",
    "resample",
    "roc_auc",
    "run_grid",
    "select_rows",
]

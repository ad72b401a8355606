"""Training, evaluation, benchmarking and the patch-drop experiment."""

from .benchmark import ablation_suite, default_suite, desk_config, run_benchmark
from .checkpoint import load_checkpoint, save_checkpoint
from .diagnostics import equivariance_error, group_center_statistics
from .patch_drop import patch_drop_experiment
from .records import BenchmarkReport, EpochRecord, PatchDropReport, RunRecord, RunStatus, StepRecord
from .training import evaluate, fit, load_training_data, score_predictions, train

__all__ = [
    "BenchmarkReport",
    "EpochRecord",
    "PatchDropReport",
    "RunRecord",
    "RunStatus",
    "StepRecord",
    "ablation_suite",
    "default_suite",
    "desk_config",
    "equivariance_error",
    "evaluate",
    "fit",
    "group_center_statistics",
    "load_checkpoint",
    "load_training_data",
    "patch_drop_experiment",
    "run_benchmark",
    "save_checkpoint",
    "score_predictions",
    "train",
]

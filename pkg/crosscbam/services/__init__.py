"""Service layer: metrics, profiling, training, inference, verification and the run store."""
from .inference import InferenceService, predict_labels, predict_logits
from .metrics import ConfusionMatrix, miou
from .profiler import bench_latency, count_flops, count_params, profile_config
from .run_service import RunService, TrainingRunStore
from .trainer import Trainer
from .verification import run_suites

__all__ = [
    "ConfusionMatrix",
    "InferenceService",
    "RunService",
    "Trainer",
    "TrainingRunStore",
    "bench_latency",
    "count_flops",
    "count_params",
    "miou",
    "predict_labels",
    "predict_logits",
    "profile_config",
    "run_suites",
]

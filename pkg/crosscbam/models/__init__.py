"""Dataclass records shared by the services, CLI and REST surface."""
from .data import Checkpoint, Sample, SyntheticSceneSpec
from .network_config import NetworkConfig, Variant
from .reports import CheckResult, FlopReport, LatencyStats, ProfileReport, VerificationReport
from .training import AugmentConfig, LossConfig, OptimConfig, RunStatus, TrainingRun

__all__ = [
    "AugmentConfig",
    "CheckResult",
    "Checkpoint",
    "FlopReport",
    "LatencyStats",
    "LossConfig",
    "NetworkConfig",
    "OptimConfig",
    "ProfileReport",
    "RunStatus",
    "Sample",
    "SyntheticSceneSpec",
    "TrainingRun",
    "Variant",
    "VerificationReport",
]

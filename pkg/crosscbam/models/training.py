"""Training hyperparameter records and the training-run record."""
from __future__ import annotations

import uuid
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from crosscbam.errors import ConfigurationError


@dataclass(frozen=True)
class LossConfig:
    """Weights of the composite objective ``alpha*CE + (1-alpha)*FL`` (+ aux term)."""
    alpha: float = 0.7
    gamma: float = 2.0
    ignore_index: int = 255
    aux_weight: float = 0.4

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigurationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma <= 5.0:
            raise ConfigurationError(f"gamma must lie in [0, 5], got {self.gamma}")
        if self.aux_weight < 0:
            raise ConfigurationError(f"aux_weight must be non-negative, got {self.aux_weight}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class OptimConfig:
    base_lr: float = 0.01
    min_lr: float = 1e-4
    power: float = 0.9
    momentum: float = 0.9
    weight_decay: float = 5e-4
    max_iter: int = 160000

    def __post_init__(self) -> None:
        if not 0 <= self.min_lr < self.base_lr:
            raise ConfigurationError(f"min_lr ({self.min_lr}) must be below base_lr ({self.base_lr})")
        if self.power <= 0:
            raise ConfigurationError(f"power must be positive, got {self.power}")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigurationError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be positive, got {self.max_iter}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class AugmentConfig:
    crop: Tuple[int, int] = (512, 1024)
    scale_range: Tuple[float, float] = (0.125, 0.5)
    flip_prob: float = 0.5
    ignore_index: int = 255
    pad_to_crop: bool = True

    def __post_init__(self) -> None:
        if len(self.crop) != 2 or min(self.crop) < 1:
            raise ConfigurationError(f"crop must be two positive ints, got {self.crop}")
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ConfigurationError(f"scale_range must satisfy 0 < lo <= hi, got {self.scale_range}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigurationError(f"flip_prob must lie in [0, 1], got {self.flip_prob}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "crop": list(self.crop),
            "scale_range": list(self.scale_range),
            "flip_prob": self.flip_prob,
            "ignore_index": self.ignore_index,
            "pad_to_crop": self.pad_to_crop,
        }


class RunStatus(Enum):
    """Lifecycle of a training run."""
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    STOPPED = "stopped"
    FAILED = "failed"


@dataclass
class TrainingRun:
    """Progress record of one training run, shared with the REST surface."""
    run_id: str = field(default_factory=lambda: str(uuid.uuid4()))
    status: RunStatus = RunStatus.PENDING
    created_at: str = field(default_factory=lambda: datetime.now(tz=timezone.utc).isoformat())
    updated_at: str = field(default_factory=lambda: datetime.now(tz=timezone.utc).isoformat())
    completed_at: Optional[str] = None

    config: Dict[str, Any] = field(default_factory=dict)
    iteration: int = 0
    max_iter: int = 0
    losses: List[Dict[str, float]] = field(default_factory=list)
    val_miou: List[Dict[str, float]] = field(default_factory=list)
    train_miou: Optional[float] = None
    checkpoints: List[str] = field(default_factory=list)
    error_message: Optional[str] = None

    def _touch(self) -> None:
        self.updated_at = datetime.now(tz=timezone.utc).isoformat()

    def start(self) -> None:
        self.status = RunStatus.RUNNING
        self._touch()

    def log_loss(self, iteration: int, lr: float, loss: float) -> None:
        self.iteration = iteration
        self.losses.append({"iter": iteration, "lr": lr, "loss": loss})
        self._touch()

    def log_validation(self, iteration: int, miou: float) -> None:
        self.val_miou.append({"iter": iteration, "miou": miou})
        self._touch()

    def complete(self) -> None:
        self.status = RunStatus.COMPLETED
        self._touch()
        self.completed_at = self.updated_at

    def stop(self) -> None:
        """Ended early on request; whatever was trained so far is kept."""
        self.status = RunStatus.STOPPED
        self._touch()
        self.completed_at = self.updated_at

    def fail(self, message: str) -> None:
        self.status = RunStatus.FAILED
        self.error_message = message
        self._touch()
        self.completed_at = self.updated_at

    @property
    def progress(self) -> float:
        return 0.0 if not self.max_iter else min(1.0, self.iteration / self.max_iter)

    @property
    def best_miou(self) -> Optional[float]:
        return max((entry["miou"] for entry in self.val_miou), default=None)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "run_id": self.run_id,
            "status": self.status.value,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
            "completed_at": self.completed_at,
            "config": self.config,
            "iteration": self.iteration,
            "max_iter": self.max_iter,
            "progress": self.progress,
            "last_loss": self.losses[-1]["loss"] if self.losses else None,
            "val_miou": self.val_miou,
            "best_miou": self.best_miou,
            "train_miou": self.train_miou,
            "checkpoints": self.checkpoints,
            "error_message": self.error_message,
        }


__all__ = ["AugmentConfig", "LossConfig", "OptimConfig", "RunStatus", "TrainingRun"]

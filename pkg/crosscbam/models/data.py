"""Records for samples, synthetic scene generation and checkpoints."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from crosscbam.errors import ConfigurationError, DataError

SHAPE_KINDS = ("rectangle", "disc", "stripe")


@dataclass
class Sample:
    """An ``(3, h, w)`` float image in [0, 1] and its ``(h, w)`` label map."""
    image: np.ndarray
    mask: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise DataError(f"sample image must be (3, h, w), got {self.image.shape}")
        if self.mask.shape != self.image.shape[1:]:
            raise DataError(f"sample mask {self.mask.shape} does not match image {self.image.shape}")

    def validate_labels(self, num_classes: int, ignore_index: int = 255) -> None:
        bad = (self.mask != ignore_index) & ((self.mask < 0) | (self.mask >= num_classes))
        if bad.any():
            raise DataError(f"sample '{self.name}' has labels outside [0, {num_classes}) ∪ {{{ignore_index}}}")


@dataclass(frozen=True)
class SyntheticSceneSpec:
    seed: int = 0
    n_samples: int = 64
    num_classes: int = 3
    canvas: Tuple[int, int] = (64, 64)
    shape_kinds: Tuple[str, ...] = SHAPE_KINDS
    noise: float = 0.0
    max_shapes: int = 3
    # when set, pixel noise comes from its own stream so the same scenes can be re-noised
    noise_seed: Optional[int] = None

    def __post_init__(self) -> None:
        if self.num_classes < 2:
            raise ConfigurationError(f"synthetic scenes need at least 2 classes, got {self.num_classes}")
        if self.n_samples < 0:
            raise ConfigurationError(f"n_samples must be non-negative, got {self.n_samples}")
        if min(self.canvas) < 1:
            raise ConfigurationError(f"canvas must be positive, got {self.canvas}")
        unknown = set(self.shape_kinds) - set(SHAPE_KINDS)
        if unknown or not self.shape_kinds:
            raise ConfigurationError(f"shape kinds must be a non-empty subset of {SHAPE_KINDS}")
        if self.noise < 0:
            raise ConfigurationError(f"noise must be non-negative, got {self.noise}")
        if self.max_shapes < 1:
            raise ConfigurationError(f"max_shapes must be at least 1, got {self.max_shapes}")
        if self.noise_seed is not None and self.noise_seed < 0:
            raise ConfigurationError(f"noise_seed must be non-negative, got {self.noise_seed}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "n_samples": self.n_samples,
            "num_classes": self.num_classes,
            "canvas": list(self.canvas),
            "shape_kinds": list(self.shape_kinds),
            "noise": self.noise,
            "max_shapes": self.max_shapes,
            "noise_seed": self.noise_seed,
        }


@dataclass
class Checkpoint:
    """Config echo plus named float32 tensors, in file order."""
    config: Dict[str, Any] = field(default_factory=dict)
    tensors: Dict[str, np.ndarray] = field(default_factory=dict)
    version: int = 1

    @property
    def num_values(self) -> int:
        return sum(int(t.size) for t in self.tensors.values())


__all__ = ["Checkpoint", "SHAPE_KINDS", "Sample", "SyntheticSceneSpec"]

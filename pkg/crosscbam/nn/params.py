"""Parameter records consumed by the functional ops."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from crosscbam.errors import ConfigurationError
from crosscbam.nn.tensor import Tensor


class Mode(Enum):
    """Execution mode of a forward pass."""
    TRAIN = "train"
    INFER = "infer"

    @classmethod
    def parse(cls, value: "Mode | str") -> "Mode":
        return value if isinstance(value, cls) else cls(str(value).lower())


@dataclass
class ConvParams:
    """Convolution weights ``(out_ch, in_ch, kh, kw)`` plus geometry."""
    weight: Tensor
    bias: Optional[Tensor] = None
    stride: int = 1
    padding: int = 0
    dilation: int = 1

    def __post_init__(self) -> None:
        if self.weight.ndim != 4:
            raise ConfigurationError(f"conv weight must be 4-D, got shape {self.weight.shape}")
        if self.stride < 1 or self.dilation < 1 or self.padding < 0:
            raise ConfigurationError(
                f"invalid conv geometry stride={self.stride} padding={self.padding} dilation={self.dilation}"
            )
        if self.bias is not None and self.bias.shape != (self.out_channels,):
            raise ConfigurationError(
                f"conv bias shape {self.bias.shape} does not match {self.out_channels} output channels"
            )

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def kernel_size(self) -> Tuple[int, int]:
        return self.weight.shape[2], self.weight.shape[3]


@dataclass
class BatchNormParams:
    """Affine parameters and running statistics of a batch-norm layer."""
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.1
    mode: Mode = Mode.TRAIN

    def __post_init__(self) -> None:
        channels = self.gamma.shape
        if self.beta.shape != channels or self.running_mean.shape != channels or self.running_var.shape != channels:
            raise ConfigurationError("batch-norm gamma, beta and running statistics must share one channel shape")
        if self.epsilon <= 0:
            raise ConfigurationError(f"batch-norm epsilon must be positive, got {self.epsilon}")
        if not 0.0 < self.momentum < 1.0:
            raise ConfigurationError(f"batch-norm momentum must lie in (0, 1), got {self.momentum}")
        if np.any(self.running_var <= 0):
            raise ConfigurationError("batch-norm running_var must be strictly positive")

    @property
    def channels(self) -> int:
        return self.gamma.shape[0]


__all__ = ["BatchNormParams", "ConvParams", "Mode"]

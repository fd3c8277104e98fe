"""Squeeze-and-excitation atrous pyramid head applied to the deepest encoder stage."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from crosscbam.errors import ConfigurationError
from crosscbam.nn import functional as F
from crosscbam.nn.attention import REDUCTION, SEBlock
from crosscbam.nn.layers import ConvX, Module, ModuleList, convx_param_count
from crosscbam.nn.tensor import Precision, Tensor

SE_INPUTS = ("input", "atrous_sum")


@dataclass(frozen=True)
class SeAsppConfig:
    in_ch: int = 1024
    branch_ch: int = 256
    dilations: Tuple[int, ...] = field(default=(1, 3))
    r: int = REDUCTION
    se_input: str = "input"

    def __post_init__(self) -> None:
        if self.in_ch < 1 or self.branch_ch < 1:
            raise ConfigurationError(f"SE-ASPP widths must be positive, got {self.in_ch}->{self.branch_ch}")
        if not self.dilations:
            raise ConfigurationError("SE-ASPP needs at least one dilation rate")
        if any(int(d) < 1 for d in self.dilations):
            raise ConfigurationError(f"dilation rates must be >= 1, got {self.dilations}")
        if len(set(self.dilations)) != len(self.dilations):
            raise ConfigurationError(f"dilation rates must be distinct, got {self.dilations}")
        if self.branch_ch % self.r:
            raise ConfigurationError(f"SE-ASPP branch width {self.branch_ch} must be divisible by {self.r}")
        if self.se_input not in SE_INPUTS:
            raise ConfigurationError(f"se_input must be one of {SE_INPUTS}, got '{self.se_input}'")

    def to_dict(self) -> Dict[str, object]:
        return {
            "in_ch": self.in_ch,
            "branch_ch": self.branch_ch,
            "dilations": list(self.dilations),
            "r": self.r,
            "se_input": self.se_input,
        }


def branch_kernel(dilation: int) -> int:
    """Rate 1 is a plain 1x1 conv; every other rate is a dilated 3x3."""
    return 1 if dilation == 1 else 3


class SeAspp(Module):
    def __init__(
        self,
        cfg: SeAsppConfig,
        *,
        rng: np.random.Generator,
        dtype: "Precision | str" = Precision.SINGLE,
    ) -> None:
        super().__init__()
        self.cfg = cfg
        self.branches = ModuleList()
        for rate in cfg.dilations:
            self.branches.append(
                ConvX(cfg.in_ch, cfg.branch_ch, branch_kernel(rate), rng=rng, dilation=rate, dtype=dtype)
            )
        se_in = cfg.in_ch if cfg.se_input == "input" else cfg.branch_ch
        self.se_reduce = ConvX(se_in, cfg.branch_ch, 1, rng=rng, dtype=dtype)
        self.se = SEBlock(cfg.branch_ch, rng=rng, r=cfg.r, dtype=dtype)
        self.project = ConvX(2 * cfg.branch_ch, cfg.branch_ch, 1, rng=rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.cfg.in_ch:
            raise ConfigurationError(f"SE-ASPP expects {self.cfg.in_ch} input channels, got shape {x.shape}")
        atrous = None
        for branch in self.branches:
            out = branch(x)
            atrous = out if atrous is None else F.add(atrous, out)
        se_source = x if self.cfg.se_input == "input" else atrous
        se_out = self.se(self.se_reduce(se_source))
        return self.project(F.concat_channels([atrous, se_out]))


def se_aspp_forward(module: SeAspp, x: Tensor) -> Tensor:
    return module(x)


def se_aspp_param_count(cfg: SeAsppConfig) -> int:
    """Closed-form count of every trainable scalar in an :class:`SeAspp` built from ``cfg``."""
    c = cfg.branch_ch
    total = sum(convx_param_count(cfg.in_ch, c, branch_kernel(rate)) for rate in cfg.dilations)
    se_in = cfg.in_ch if cfg.se_input == "input" else c
    total += convx_param_count(se_in, c, 1)
    hidden = c // cfg.r
    total += c * hidden + hidden + hidden * c + c
    total += convx_param_count(2 * c, c, 1)
    return total


__all__ = ["SE_INPUTS", "SeAspp", "SeAsppConfig", "branch_kernel", "se_aspp_forward", "se_aspp_param_count"]

"""Channel attention, spatial attention, squeeze-excite and the cross fusion block.

The functional forms take parameter records so they can be exercised in
isolation (the scalar oracles in ``reference`` mirror them); the module classes
own the parameters and delegate to the functional forms.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from crosscbam.errors import ConfigurationError, UsageError
from crosscbam.nn import functional as F
from crosscbam.nn.layers import Conv2d, Module
from crosscbam.nn.params import ConvParams
from crosscbam.nn.tensor import Precision, Tensor

REDUCTION = 16


def _check_reduction(channels: int, r: int) -> None:
    if r < 1 or channels % r or channels < r:
        raise ConfigurationError(f"attention width {channels} must be divisible by the reduction ratio {r}")


@dataclass
class ChannelAttnParams:
    """Bottleneck C -> C/r -> C; ``max_reduce``/``max_expand`` set only when the two pooled branches do not share it."""
    reduce: ConvParams
    expand: ConvParams
    r: int = REDUCTION
    max_reduce: Optional[ConvParams] = None
    max_expand: Optional[ConvParams] = None

    def __post_init__(self) -> None:
        _check_reduction(self.channels, self.r)
        if self.reduce.out_channels != self.channels // self.r or self.expand.out_channels != self.channels:
            raise ConfigurationError(
                f"channel attention bottleneck {self.channels}->{self.reduce.out_channels}->"
                f"{self.expand.out_channels} does not match r={self.r}"
            )
        if (self.max_reduce is None) != (self.max_expand is None):
            raise ConfigurationError("separate max-branch bottleneck needs both reduce and expand convs")

    @property
    def channels(self) -> int:
        return self.reduce.in_channels

    @property
    def shared(self) -> bool:
        return self.max_reduce is None


@dataclass
class SpatialAttnParams:
    fuse: ConvParams

    def __post_init__(self) -> None:
        if self.fuse.kernel_size != (1, 1) or self.fuse.in_channels != 2 or self.fuse.out_channels != 1:
            raise ConfigurationError(
                f"spatial attention needs a 1x1 conv 2->1, got weight shape {self.fuse.weight.shape}"
            )


@dataclass
class SEParams:
    squeeze: ConvParams
    excite: ConvParams
    r: int = REDUCTION

    def __post_init__(self) -> None:
        _check_reduction(self.channels, self.r)
        if self.squeeze.out_channels != self.channels // self.r or self.excite.out_channels != self.channels:
            raise ConfigurationError(f"SE bottleneck does not match {self.channels} channels with r={self.r}")

    @property
    def channels(self) -> int:
        return self.squeeze.in_channels


@dataclass
class CcbamParams:
    ca_high: ChannelAttnParams
    ca_low: ChannelAttnParams
    sa_high: SpatialAttnParams
    sa_low: SpatialAttnParams

    def __post_init__(self) -> None:
        if self.ca_high.channels != self.ca_low.channels:
            raise ConfigurationError(
                f"fusion branches disagree on width: {self.ca_high.channels} vs {self.ca_low.channels}"
            )

    @property
    def channels(self) -> int:
        return self.ca_high.channels


def _bottleneck(x: Tensor, reduce: ConvParams, expand: ConvParams) -> Tensor:
    return F.conv2d(F.relu(F.conv2d(x, reduce)), expand)


def channel_attention(x: Tensor, p: ChannelAttnParams) -> Tensor:
    """Per-channel gates ``(n, C, 1, 1)`` in (0, 1)."""
    if x.ndim != 4 or x.shape[1] != p.channels:
        raise ConfigurationError(f"channel attention built for {p.channels} channels, got input {x.shape}")
    avg_branch = _bottleneck(F.global_pool(x, "avg"), p.reduce, p.expand)
    if p.shared:
        max_branch = _bottleneck(F.global_pool(x, "max"), p.reduce, p.expand)
    else:
        max_branch = _bottleneck(F.global_pool(x, "max"), p.max_reduce, p.max_expand)
    return F.sigmoid(F.add(max_branch, avg_branch))


def spatial_attention(x: Tensor, p: SpatialAttnParams) -> Tensor:
    """Per-pixel gate ``(n, 1, h, w)`` from the channel max map then the channel mean map."""
    pooled = F.concat_channels([F.channelwise_reduce(x, "max"), F.channelwise_reduce(x, "avg")])
    return F.sigmoid(F.conv2d(pooled, p.fuse))


def se_block(x: Tensor, p: SEParams) -> Tensor:
    if x.ndim != 4 or x.shape[1] != p.channels:
        raise ConfigurationError(f"SE block built for {p.channels} channels, got input {x.shape}")
    gates = F.sigmoid(_bottleneck(F.global_pool(x, "avg"), p.squeeze, p.excite))
    return F.mul(x, gates)


def ccbam_fuse(input_high: Tensor, input_low: Tensor, p: CcbamParams) -> Tensor:
    """Cross fusion: each level is gated by the other level's channel attention,
    then each gated map is weighted by the other's spatial attention and the two are summed."""
    if input_high.shape != input_low.shape:
        dims = [
            f"{axis}: {a} vs {b}"
            for axis, a, b in zip(("n", "c", "h", "w"), input_high.shape, input_low.shape)
            if a != b
        ]
        raise UsageError(
            f"fusion inputs must have identical shapes, got high {input_high.shape} and low "
            f"{input_low.shape} ({', '.join(dims) or 'rank'})"
        )
    c_high = channel_attention(input_high, p.ca_high)
    c_low = channel_attention(input_low, p.ca_low)
    f_high = F.mul(input_low, c_high)
    f_low = F.mul(input_high, c_low)
    s_high = spatial_attention(f_high, p.sa_high)
    s_low = spatial_attention(f_low, p.sa_low)
    return F.add(F.mul(f_low, s_high), F.mul(f_high, s_low))


class ChannelAttention(Module):
    def __init__(
        self,
        channels: int,
        *,
        rng: np.random.Generator,
        r: int = REDUCTION,
        shared_mlp: bool = True,
        dtype: "Precision | str" = Precision.SINGLE,
    ) -> None:
        super().__init__()
        _check_reduction(channels, r)
        self.fc1 = Conv2d(channels, channels // r, 1, rng=rng, dtype=dtype)
        self.fc2 = Conv2d(channels // r, channels, 1, rng=rng, dtype=dtype)
        max_reduce = max_expand = None
        if not shared_mlp:
            self.max_fc1 = Conv2d(channels, channels // r, 1, rng=rng, dtype=dtype)
            self.max_fc2 = Conv2d(channels // r, channels, 1, rng=rng, dtype=dtype)
            max_reduce, max_expand = self.max_fc1.params, self.max_fc2.params
        self.params = ChannelAttnParams(self.fc1.params, self.fc2.params, r, max_reduce, max_expand)

    def forward(self, x: Tensor) -> Tensor:
        return channel_attention(x, self.params)


class SpatialAttention(Module):
    def __init__(self, *, rng: np.random.Generator, dtype: "Precision | str" = Precision.SINGLE) -> None:
        super().__init__()
        self.fuse = Conv2d(2, 1, 1, rng=rng, dtype=dtype)
        self.params = SpatialAttnParams(self.fuse.params)

    def forward(self, x: Tensor) -> Tensor:
        return spatial_attention(x, self.params)


class SEBlock(Module):
    def __init__(
        self,
        channels: int,
        *,
        rng: np.random.Generator,
        r: int = REDUCTION,
        dtype: "Precision | str" = Precision.SINGLE,
    ) -> None:
        super().__init__()
        _check_reduction(channels, r)
        self.squeeze = Conv2d(channels, channels // r, 1, rng=rng, dtype=dtype)
        self.excite = Conv2d(channels // r, channels, 1, rng=rng, dtype=dtype)
        self.params = SEParams(self.squeeze.params, self.excite.params, r)

    def forward(self, x: Tensor) -> Tensor:
        return se_block(x, self.params)


class Ccbam(Module):
    """Cross fusion block with independent high and low attention stacks."""

    def __init__(
        self,
        channels: int,
        *,
        rng: np.random.Generator,
        r: int = REDUCTION,
        shared_mlp: bool = True,
        dtype: "Precision | str" = Precision.SINGLE,
    ) -> None:
        super().__init__()
        self.ca_high = ChannelAttention(channels, rng=rng, r=r, shared_mlp=shared_mlp, dtype=dtype)
        self.ca_low = ChannelAttention(channels, rng=rng, r=r, shared_mlp=shared_mlp, dtype=dtype)
        self.sa_high = SpatialAttention(rng=rng, dtype=dtype)
        self.sa_low = SpatialAttention(rng=rng, dtype=dtype)
        self.params = CcbamParams(
            self.ca_high.params, self.ca_low.params, self.sa_high.params, self.sa_low.params
        )

    def forward(self, input_high: Tensor, input_low: Tensor) -> Tensor:
        return ccbam_fuse(input_high, input_low, self.params)


def ccbam_param_count(channels: int, r: int = REDUCTION, shared_mlp: bool = True) -> int:
    bottleneck = channels * (channels // r) + channels // r + (channels // r) * channels + channels
    per_branch = bottleneck * (1 if shared_mlp else 2) + 3
    return 2 * per_branch


__all__ = [
    "REDUCTION",
    "Ccbam",
    "CcbamParams",
    "ChannelAttention",
    "ChannelAttnParams",
    "SEBlock",
    "SEParams",
    "SpatialAttention",
    "SpatialAttnParams",
    "ccbam_fuse",
    "ccbam_param_count",
    "channel_attention",
    "se_block",
    "spatial_attention",
]

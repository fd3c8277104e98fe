"""STDC encoder: dense-concatenate modules and the five-stage STDC1/STDC2 backbones."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from crosscbam.errors import ConfigurationError, UsageError
from crosscbam.nn import functional as F
from crosscbam.nn.layers import ConvX, Module, ModuleList
from crosscbam.nn.tensor import Precision, Tensor

DEFAULT_BLOCKS = 4
REQUIRED_DIVISOR = 32

# stride-1 repeats per stage after the leading stride-2 module
STAGE_REPEATS: Dict[str, Tuple[int, int, int]] = {
    "stdc1": (1, 1, 1),
    "stdc2": (3, 4, 2),
}


def stdc_block_channels(out_ch: int, n_blocks: int = DEFAULT_BLOCKS) -> List[int]:
    """Halving block widths whose last two entries match, summing to ``out_ch``."""
    if n_blocks < 2:
        raise ConfigurationError(f"an STDC module needs at least 2 blocks, got {n_blocks}")
    divisor = 2 ** (n_blocks - 1)
    if out_ch < divisor or out_ch % divisor:
        raise ConfigurationError(
            f"STDC module width {out_ch} must be divisible by 2^(n_blocks-1) = {divisor}"
        )
    widths = [out_ch // 2 ** i for i in range(1, n_blocks)]
    widths.append(widths[-1])
    return widths


@dataclass(frozen=True)
class StdcModuleSpec:
    in_ch: int
    out_ch: int
    n_blocks: int = DEFAULT_BLOCKS
    stride: int = 1

    def __post_init__(self) -> None:
        if self.stride not in (1, 2):
            raise ConfigurationError(f"STDC module stride must be 1 or 2, got {self.stride}")
        if self.in_ch < 1:
            raise ConfigurationError(f"STDC module in_ch must be positive, got {self.in_ch}")
        stdc_block_channels(self.out_ch, self.n_blocks)

    @property
    def block_channels(self) -> List[int]:
        return stdc_block_channels(self.out_ch, self.n_blocks)


@dataclass(frozen=True)
class StageSpec:
    out_ch: int
    repeats: int
    stride: int = 2


@dataclass(frozen=True)
class BackboneSpec:
    """Stage layout of an STDC encoder; ``base_ch`` scales every width."""
    variant: str = "stdc1"
    base_ch: int = 64
    n_blocks: int = DEFAULT_BLOCKS
    stages: Tuple[StageSpec, ...] = field(default=())

    @classmethod
    def for_variant(cls, variant: str, base_ch: int = 64, n_blocks: int = DEFAULT_BLOCKS) -> "BackboneSpec":
        key = variant.lower()
        if key not in STAGE_REPEATS:
            raise ConfigurationError(f"unknown backbone variant '{variant}', expected one of {sorted(STAGE_REPEATS)}")
        if base_ch < 2 or base_ch % 2:
            raise ConfigurationError(f"backbone base_ch must be an even positive integer, got {base_ch}")
        widths = (4 * base_ch, 8 * base_ch, 16 * base_ch)
        stages = tuple(StageSpec(out_ch=w, repeats=r) for w, r in zip(widths, STAGE_REPEATS[key]))
        return cls(variant=key, base_ch=base_ch, n_blocks=n_blocks, stages=stages)

    @property
    def stem_channels(self) -> Tuple[int, int]:
        return self.base_ch // 2, self.base_ch

    @property
    def stage_channels(self) -> Tuple[int, int, int]:
        return tuple(stage.out_ch for stage in self.stages)  # type: ignore[return-value]


class StdcModule(Module):
    """Block 1 is a 1x1 ConvX, blocks 2..n are 3x3; all block outputs are concatenated."""

    def __init__(self, spec: StdcModuleSpec, *, rng: np.random.Generator, dtype: "Precision | str") -> None:
        super().__init__()
        self.spec = spec
        widths = spec.block_channels
        self.blocks = ModuleList()
        in_ch = spec.in_ch
        for index, width in enumerate(widths):
            kernel = 1 if index == 0 else 3
            stride = spec.stride if index == 1 else 1
            self.blocks.append(ConvX(in_ch, width, kernel, rng=rng, stride=stride, dtype=dtype))
            in_ch = width

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.spec.in_ch:
            raise ConfigurationError(
                f"STDC module expects {self.spec.in_ch} input channels, got {x.shape[1]}"
            )
        outputs: List[Tensor] = []
        out = x
        for block in self.blocks:
            out = block(out)
            outputs.append(out)
        if self.spec.stride == 2:
            outputs[0] = F.pool2d(outputs[0], "avg", 3, 2, 1)
        return F.concat_channels(outputs)


def stdc_module_forward(module: StdcModule, x: Tensor) -> Tensor:
    return module(x)


class StdcBackbone(Module):
    def __init__(
        self,
        spec: BackboneSpec,
        *,
        rng: np.random.Generator,
        dtype: "Precision | str" = Precision.SINGLE,
    ) -> None:
        super().__init__()
        self.spec = spec
        c1, c2 = spec.stem_channels
        self.convx1 = ConvX(3, c1, 3, rng=rng, stride=2, dtype=dtype)
        self.convx2 = ConvX(c1, c2, 3, rng=rng, stride=2, dtype=dtype)
        in_ch = c2
        for index, stage in enumerate(spec.stages, start=3):
            modules = ModuleList()
            modules.append(StdcModule(StdcModuleSpec(in_ch, stage.out_ch, spec.n_blocks, 2), rng=rng, dtype=dtype))
            for _ in range(stage.repeats):
                modules.append(
                    StdcModule(StdcModuleSpec(stage.out_ch, stage.out_ch, spec.n_blocks, 1), rng=rng, dtype=dtype)
                )
            setattr(self, f"stage{index}", modules)
            in_ch = stage.out_ch

    def forward(self, image: Tensor) -> Dict[str, Tensor]:
        if image.ndim != 4 or image.shape[1] != 3:
            raise UsageError(f"backbone expects an (n, 3, h, w) image, got shape {image.shape}")
        h, w = image.shape[2], image.shape[3]
        if h % REQUIRED_DIVISOR or w % REQUIRED_DIVISOR:
            raise UsageError(
                f"input height and width must be divisible by {REQUIRED_DIVISOR}, got {h}x{w}"
            )
        out = self.convx2(self.convx1(image))
        features: Dict[str, Tensor] = {}
        for name in ("stage3", "stage4", "stage5"):
            for module in getattr(self, name):
                out = module(out)
            features[name] = out
        return features


def backbone_forward(backbone: StdcBackbone, image: Tensor) -> Dict[str, Tensor]:
    return backbone(image)


__all__ = [
    "BackboneSpec",
    "DEFAULT_BLOCKS",
    "REQUIRED_DIVISOR",
    "StageSpec",
    "StdcBackbone",
    "StdcModule",
    "StdcModuleSpec",
    "backbone_forward",
    "stdc_block_channels",
    "stdc_module_forward",
]

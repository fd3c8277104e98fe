"""Cross-CBAM network assembly: STDC encoder, SE-ASPP context, two cross-fusion steps and heads."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from crosscbam.models.network_config import NetworkConfig
from crosscbam.nn import functional as F
from crosscbam.nn.attention import Ccbam
from crosscbam.nn.backbone import BackboneSpec, StdcBackbone
from crosscbam.nn.layers import Conv2d, ConvX, Module
from crosscbam.nn.params import Mode
from crosscbam.nn.se_aspp import SeAspp
from crosscbam.nn.tensor import Precision, Tensor


@dataclass
class ModelOutput:
    logits: Tensor
    aux_logits: Optional[Tensor] = None


class SegHead(Module):
    """3x3 ConvX followed by a 1x1 classifier."""

    def __init__(self, channels: int, num_classes: int, *, rng: np.random.Generator, dtype: "Precision | str") -> None:
        super().__init__()
        self.conv = ConvX(channels, channels, 3, rng=rng, dtype=dtype)
        self.classifier = Conv2d(channels, num_classes, 1, rng=rng, bias=True, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.classifier(self.conv(x))


class CrossCbamNet(Module):
    def __init__(
        self,
        cfg: NetworkConfig,
        *,
        rng: np.random.Generator,
        dtype: "Precision | str" = Precision.SINGLE,
    ) -> None:
        super().__init__()
        self.cfg = cfg
        self.dtype = Precision.parse(dtype)
        c3, c4, c5 = cfg.encoder_channels
        c = cfg.decoder_ch
        self.backbone = StdcBackbone(
            BackboneSpec.for_variant(cfg.variant.backbone, base_ch=cfg.base_ch), rng=rng, dtype=dtype
        )
        if cfg.use_se_aspp:
            self.context = SeAspp(cfg.se_aspp, rng=rng, dtype=dtype)
        else:
            self.context = ConvX(c5, c, 1, rng=rng, dtype=dtype)
        self.proj4 = ConvX(c4, c, cfg.proj_kernel, rng=rng, dtype=dtype)
        self.proj3 = ConvX(c3, c, cfg.proj_kernel, rng=rng, dtype=dtype)
        if cfg.use_ccbam:
            self.fuse4 = Ccbam(c, rng=rng, shared_mlp=cfg.ca_shared_mlp, dtype=dtype)
            self.fuse3 = Ccbam(c, rng=rng, shared_mlp=cfg.ca_shared_mlp, dtype=dtype)
        self.head = SegHead(c, cfg.num_classes, rng=rng, dtype=dtype)
        if cfg.aux_head:
            self.aux = SegHead(c, cfg.num_classes, rng=rng, dtype=dtype)

    def _fuse(self, name: str, high: Tensor, low: Tensor) -> Tensor:
        if not self.cfg.use_ccbam:
            return F.add(high, low)
        return getattr(self, name)(high, low)

    def forward(self, image: Tensor) -> ModelOutput:
        h, w = image.shape[2], image.shape[3]
        features: Dict[str, Tensor] = self.backbone(image)
        stage4, stage3 = features["stage4"], features["stage3"]

        high = self.context(features["stage5"])
        high = F.bilinear_resize(high, stage4.shape[2], stage4.shape[3])
        fused4 = self._fuse("fuse4", high, self.proj4(stage4))

        high = F.bilinear_resize(fused4, stage3.shape[2], stage3.shape[3])
        fused3 = self._fuse("fuse3", high, self.proj3(stage3))

        logits = F.bilinear_resize(self.head(fused3), h, w)
        aux_logits = None
        if self.cfg.aux_head and self.mode is Mode.TRAIN:
            aux_logits = F.bilinear_resize(self.aux(fused4), h, w)
        return ModelOutput(logits=logits, aux_logits=aux_logits)


def build_network(
    cfg: NetworkConfig,
    seed: int = 0,
    dtype: "Precision | str" = Precision.SINGLE,
) -> CrossCbamNet:
    """Build a network whose every parameter is drawn, in registration order, from ``seed``."""
    return CrossCbamNet(cfg, rng=np.random.default_rng(seed), dtype=dtype)


def forward(model: CrossCbamNet, image: Tensor, mode: "Mode | str" = Mode.INFER) -> ModelOutput:
    model.set_mode(mode)
    return model(image)


__all__ = ["CrossCbamNet", "ModelOutput", "SegHead", "build_network", "forward"]

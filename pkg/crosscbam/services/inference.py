"""Inference helpers: padded forward, label prediction and mask files."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from crosscbam.data.checkpoint import read_checkpoint, restore
from crosscbam.data.image_io import read_image, write_color_mask, write_overlay
from crosscbam.errors import ConfigurationError
from crosscbam.models.network_config import NetworkConfig
from crosscbam.nn.backbone import REQUIRED_DIVISOR
from crosscbam.nn.network import CrossCbamNet, build_network
from crosscbam.nn.params import Mode
from crosscbam.nn.tensor import Tensor, no_grad


def _pad_amount(size: int) -> int:
    return (-size) % REQUIRED_DIVISOR


def predict_logits(model: CrossCbamNet, images: np.ndarray) -> np.ndarray:
    """Infer-mode logits for an ``(n, 3, h, w)`` batch of any size; zero-pads to the network's stride."""
    if images.ndim == 3:
        images = images[None]
    n, _, h, w = images.shape
    ph, pw = _pad_amount(h), _pad_amount(w)
    if ph or pw:
        images = np.pad(images, ((0, 0), (0, 0), (0, ph), (0, pw)))
    dtype = model.dtype.dtype
    model.set_mode(Mode.INFER)
    with no_grad():
        logits = model(Tensor(np.ascontiguousarray(images, dtype=dtype))).logits.data
    return logits[:, :, :h, :w]


def predict_labels(model: CrossCbamNet, images: np.ndarray) -> np.ndarray:
    return predict_logits(model, images).argmax(axis=1)


class InferenceService:
    """Loads a model (optionally from a checkpoint) and writes color-mapped masks."""

    def __init__(
        self,
        cfg: Optional[NetworkConfig] = None,
        checkpoint: "str | Path | None" = None,
        seed: int = 0,
        logger: Optional[logging.Logger] = None,
    ):
        self.logger = logger or logging.getLogger(__name__)
        if checkpoint is not None:
            stored = read_checkpoint(checkpoint)
            echo = stored.config.get("network")
            if cfg is None:
                if not echo:
                    raise ConfigurationError(f"checkpoint {checkpoint} carries no network config; pass one explicitly")
                cfg = NetworkConfig.from_dict(echo)
            self.model = build_network(cfg, seed=seed)
            restore(self.model, stored)
            self.logger.info(f"Loaded {cfg.variant.name} model from {checkpoint}")
        else:
            cfg = cfg or NetworkConfig()
            self.model = build_network(cfg, seed=seed)
            self.logger.warning("No checkpoint given; predictions come from freshly initialized weights")
        self.cfg = cfg

    def predict(self, image: np.ndarray) -> np.ndarray:
        """``(h, w)`` label map for a ``(3, h, w)`` float image."""
        return predict_labels(self.model, image[None])[0]

    def infer_file(
        self,
        image_path: "str | Path",
        output_path: "str | Path",
        overlay_path: "str | Path | None" = None,
    ) -> Dict[str, object]:
        image = read_image(image_path)
        labels = self.predict(image)
        write_color_mask(output_path, labels)
        if overlay_path is not None:
            write_overlay(overlay_path, image, labels)
        classes, counts = np.unique(labels, return_counts=True)
        self.logger.info(f"Wrote mask for {image_path} to {output_path}")
        return {
            "input": str(image_path),
            "output": str(output_path),
            "shape": list(labels.shape),
            "class_pixels": {int(c): int(k) for c, k in zip(classes, counts)},
        }


__all__ = ["InferenceService", "predict_labels", "predict_logits"]

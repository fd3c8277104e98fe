"""Confusion-matrix bookkeeping and mean intersection-over-union."""
from __future__ import annotations

import logging
from typing import Dict, List, Optional

import numpy as np

from crosscbam.errors import ConfigurationError, DataError


class ConfusionMatrix:
    """K x K pixel counts, rows ground truth and columns prediction."""

    def __init__(self, num_classes: int, ignore_index: int = 255, logger: Optional[logging.Logger] = None):
        if num_classes < 1:
            raise ConfigurationError(f"num_classes must be positive, got {num_classes}")
        self.num_classes = num_classes
        self.ignore_index = ignore_index
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        self.logger = logger or logging.getLogger(__name__)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accumulate(self, pred: np.ndarray, target: np.ndarray) -> "ConfusionMatrix":
        pred = np.asarray(pred)
        target = np.asarray(target)
        if pred.shape != target.shape:
            raise DataError(f"prediction shape {pred.shape} does not match target shape {target.shape}")
        k = self.num_classes
        valid = target != self.ignore_index
        t = target[valid].astype(np.int64)
        p = pred[valid].astype(np.int64)
        if t.size and (t.min() < 0 or t.max() >= k):
            raise DataError(f"target labels must lie in [0, {k}) or equal {self.ignore_index}")
        if p.size and (p.min() < 0 or p.max() >= k):
            raise DataError(f"predicted labels must lie in [0, {k}), got range [{p.min()}, {p.max()}]")
        self.counts += np.bincount(t * k + p, minlength=k * k).reshape(k, k)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ConfigurationError(
                f"cannot merge a {other.num_classes}-class matrix into a {self.num_classes}-class one"
            )
        merged = ConfusionMatrix(self.num_classes, self.ignore_index, self.logger)
        merged.counts = self.counts + other.counts
        return merged

    def per_class_iou(self) -> np.ndarray:
        """IoU per class; NaN where the class never occurs in target or prediction."""
        tp = np.diag(self.counts).astype(np.float64)
        union = self.counts.sum(axis=0) + self.counts.sum(axis=1) - tp
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(union > 0, tp / union, np.nan)

    def miou(self) -> float:
        if self.total == 0:
            self.logger.warning("mIoU requested from an empty confusion matrix; returning 0")
            return 0.0
        iou = self.per_class_iou()
        return float(np.nanmean(iou))

    def pixel_accuracy(self) -> float:
        total = self.total
        return float(np.trace(self.counts) / total) if total else 0.0

    def reset(self) -> None:
        self.counts[:] = 0

    def to_dict(self, class_names: Optional[List[str]] = None) -> Dict[str, object]:
        iou = self.per_class_iou()
        names = class_names or [str(i) for i in range(self.num_classes)]
        return {
            "miou": self.miou() if self.total else 0.0,
            "pixel_accuracy": self.pixel_accuracy(),
            "per_class_iou": {name: (None if np.isnan(v) else float(v)) for name, v in zip(names, iou)},
            "pixels": self.total,
        }


def confusion_accumulate(cm: ConfusionMatrix, pred: np.ndarray, target: np.ndarray) -> ConfusionMatrix:
    return cm.accumulate(pred, target)


def miou(cm: ConfusionMatrix) -> float:
    return cm.miou()


__all__ = ["ConfusionMatrix", "confusion_accumulate", "miou"]

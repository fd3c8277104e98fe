"""Pixel-wise cross-entropy, focal loss and the weighted composite objective."""
from __future__ import annotations

import logging
from typing import List, Optional

import numpy as np

from crosscbam.errors import ConfigurationError, DataError
from crosscbam.models.training import LossConfig
from crosscbam.nn import functional as F
from crosscbam.nn.tensor import Tensor, make_result

logger = logging.getLogger(__name__)


def _validate_target(logits: Tensor, target: np.ndarray, ignore_index: int) -> np.ndarray:
    if logits.ndim != 4:
        raise ConfigurationError(f"logits must be (n, K, h, w), got {logits.shape}")
    n, k, h, w = logits.shape
    target = np.asarray(target)
    if target.shape != (n, h, w):
        raise ConfigurationError(f"target shape {target.shape} does not match logits {logits.shape}")
    if not np.issubdtype(target.dtype, np.integer):
        raise DataError(f"target labels must be integers, got dtype {target.dtype}")
    valid = target != ignore_index
    bad = valid & ((target < 0) | (target >= k))
    if bad.any():
        raise DataError(
            f"target contains {int(bad.sum())} labels outside [0, {k}) that are not ignore_index={ignore_index}"
        )
    return valid


def _focal_family(logits: Tensor, target: np.ndarray, gamma: float, ignore_index: int, op: str) -> Tensor:
    """Mean of ``-(1 - p_t)^gamma * log(p_t)`` over non-ignored pixels; gamma 0 is cross-entropy."""
    valid = _validate_target(logits, target, ignore_index)
    dtype = logits.data.dtype
    count = int(valid.sum())
    if count == 0:
        logger.warning(f"{op}: every target pixel equals ignore_index={ignore_index}; loss defined as 0")

        def zero_backward(g: np.ndarray) -> List[Optional[np.ndarray]]:
            return [np.zeros_like(logits.data)]

        return make_result(np.zeros((1, 1, 1, 1), dtype=dtype), op, [logits], zero_backward)

    z = logits.data - logits.data.max(axis=1, keepdims=True)
    exp_z = np.exp(z)
    sum_exp = exp_z.sum(axis=1, keepdims=True)
    log_probs = z - np.log(sum_exp)
    safe_target = np.where(valid, target, 0)[:, None]
    log_pt = np.take_along_axis(log_probs, safe_target, axis=1)[:, 0]
    one_minus = -np.expm1(log_pt)
    weight = one_minus ** gamma
    per_pixel = np.where(valid, -weight * log_pt, 0.0)
    loss = np.asarray(per_pixel.sum() / count, dtype=dtype).reshape(1, 1, 1, 1)

    def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
        pt = np.exp(log_pt)
        d_logpt = -weight
        if gamma != 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                slope = np.where(one_minus > 0, gamma * one_minus ** (gamma - 1.0) * pt * log_pt, 0.0)
            d_logpt = d_logpt + slope
        d_logpt = np.where(valid, d_logpt, 0.0) * (float(g.reshape(-1)[0]) / count)
        softmax = exp_z / sum_exp
        grad = -softmax * d_logpt[:, None]
        np.put_along_axis(
            grad, safe_target, np.take_along_axis(grad, safe_target, axis=1) + d_logpt[:, None], axis=1
        )
        return [grad.astype(dtype, copy=False)]

    return make_result(loss, op, [logits], backward_fn, saved={"count": count})


def cross_entropy(logits: Tensor, target: np.ndarray, ignore_index: int = 255) -> Tensor:
    return _focal_family(logits, target, 0.0, ignore_index, "cross_entropy")


def focal_loss(logits: Tensor, target: np.ndarray, gamma: float = 2.0, ignore_index: int = 255) -> Tensor:
    if gamma < 0:
        raise ConfigurationError(f"focal gamma must be non-negative, got {gamma}")
    return _focal_family(logits, target, float(gamma), ignore_index, "focal_loss")


def _weighted(logits: Tensor, target: np.ndarray, cfg: LossConfig) -> Tensor:
    if cfg.alpha == 1.0:
        return cross_entropy(logits, target, cfg.ignore_index)
    if cfg.alpha == 0.0:
        return focal_loss(logits, target, cfg.gamma, cfg.ignore_index)
    ce = cross_entropy(logits, target, cfg.ignore_index)
    fl = focal_loss(logits, target, cfg.gamma, cfg.ignore_index)
    return F.add(F.scale(ce, cfg.alpha), F.scale(fl, 1.0 - cfg.alpha))


def composite_loss(output, target: np.ndarray, cfg: Optional[LossConfig] = None) -> Tensor:
    """Weighted CE/focal objective on the main logits plus the weighted aux term when present.

    ``output`` is a ``ModelOutput`` or a bare logits tensor.
    """
    cfg = cfg or LossConfig()
    logits = output if isinstance(output, Tensor) else output.logits
    aux_logits = None if isinstance(output, Tensor) else output.aux_logits
    loss = _weighted(logits, target, cfg)
    if aux_logits is not None and cfg.aux_weight > 0:
        loss = F.add(loss, F.scale(_weighted(aux_logits, target, cfg), cfg.aux_weight))
    return loss


__all__ = ["composite_loss", "cross_entropy", "focal_loss"]

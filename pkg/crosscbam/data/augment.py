"""Random resize, crop and horizontal flip for (image, mask) pairs."""
from __future__ import annotations

from typing import Tuple

import numpy as np

from crosscbam.errors import ConfigurationError
from crosscbam.models.data import Sample
from crosscbam.models.training import AugmentConfig
from crosscbam.nn.functional import resize_array


def nearest_indices(in_size: int, out_size: int) -> np.ndarray:
    """Half-pixel nearest-neighbour source index for each output position."""
    src = np.floor((np.arange(out_size) + 0.5) * in_size / out_size).astype(np.int64)
    return np.clip(src, 0, in_size - 1)


def resize_sample(sample: Sample, out_h: int, out_w: int) -> Sample:
    """Bilinear for the image, nearest-neighbour for the mask."""
    h, w = sample.mask.shape
    if (out_h, out_w) == (h, w):
        return sample
    image = np.clip(resize_array(sample.image.astype(np.float64), out_h, out_w), 0.0, 1.0)
    mask = sample.mask[np.ix_(nearest_indices(h, out_h), nearest_indices(w, out_w))]
    return Sample(image=image.astype(sample.image.dtype), mask=mask, name=sample.name)


def pad_sample(sample: Sample, min_h: int, min_w: int, ignore_index: int) -> Sample:
    h, w = sample.mask.shape
    ph, pw = max(0, min_h - h), max(0, min_w - w)
    if not ph and not pw:
        return sample
    image = np.pad(sample.image, ((0, 0), (0, ph), (0, pw)), constant_values=0.0)
    mask = np.pad(sample.mask, ((0, ph), (0, pw)), constant_values=ignore_index)
    return Sample(image=image, mask=mask, name=sample.name)


def crop_sample(sample: Sample, top: int, left: int, crop: Tuple[int, int]) -> Sample:
    ch, cw = crop
    return Sample(
        image=np.ascontiguousarray(sample.image[:, top : top + ch, left : left + cw]),
        mask=np.ascontiguousarray(sample.mask[top : top + ch, left : left + cw]),
        name=sample.name,
    )


def hflip(sample: Sample) -> Sample:
    return Sample(
        image=np.ascontiguousarray(sample.image[:, :, ::-1]),
        mask=np.ascontiguousarray(sample.mask[:, ::-1]),
        name=sample.name,
    )


def augment(sample: Sample, cfg: AugmentConfig, rng: np.random.Generator) -> Sample:
    """Scale drawn from ``cfg.scale_range``, random crop (padding if short), then a coin-flip mirror."""
    h, w = sample.mask.shape
    lo, hi = cfg.scale_range
    s = float(rng.uniform(lo, hi))
    out = resize_sample(sample, max(1, int(round(h * s))), max(1, int(round(w * s))))

    ch, cw = cfg.crop
    rh, rw = out.mask.shape
    if cfg.pad_to_crop:
        out = pad_sample(out, ch, cw, cfg.ignore_index)
    elif ch > rh or cw > rw:
        raise ConfigurationError(f"crop {ch}x{cw} is larger than the resized canvas {rh}x{rw}")
    rh, rw = out.mask.shape
    top = int(rng.integers(0, rh - ch + 1))
    left = int(rng.integers(0, rw - cw + 1))
    out = crop_sample(out, top, left, (ch, cw))

    if rng.random() < cfg.flip_prob:
        out = hflip(out)
    return out


__all__ = ["augment", "crop_sample", "hflip", "nearest_indices", "pad_sample", "resize_sample"]

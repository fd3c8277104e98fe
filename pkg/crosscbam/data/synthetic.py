"""Deterministic synthetic street-scene stand-ins: shapes of distinct classes on a class-0 background."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from crosscbam.data.image_io import PALETTE
from crosscbam.errors import ConfigurationError
from crosscbam.models.data import Sample, SyntheticSceneSpec


@dataclass(frozen=True)
class ShapeSpec:
    """One filled shape. ``box`` is (top, left, bottom, right) in pixels, exclusive at the end."""
    kind: str
    label: int
    box: Tuple[int, int, int, int]
    vertical: bool = False


def class_color(label: int) -> np.ndarray:
    if label < len(PALETTE):
        return PALETTE[label].astype(np.float32) / 255.0
    return np.random.default_rng(label).random(3).astype(np.float32)


def _shape_mask(shape: ShapeSpec, h: int, w: int) -> np.ndarray:
    top, left, bottom, right = shape.box
    yy, xx = np.mgrid[0:h, 0:w]
    if shape.kind == "rectangle":
        return (yy >= top) & (yy < bottom) & (xx >= left) & (xx < right)
    if shape.kind == "disc":
        cy, cx = (top + bottom - 1) / 2.0, (left + right - 1) / 2.0
        radius = min(bottom - top, right - left) / 2.0
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
    if shape.kind == "stripe":
        return (xx >= left) & (xx < right) if shape.vertical else (yy >= top) & (yy < bottom)
    raise ConfigurationError(f"unknown shape kind '{shape.kind}'")


def render_scene(
    shapes: Sequence[ShapeSpec],
    canvas: Tuple[int, int],
    noise: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    name: str = "",
) -> Sample:
    """Paint shapes in order over class 0; noise perturbs the image only."""
    h, w = canvas
    mask = np.zeros((h, w), dtype=np.int64)
    for shape in shapes:
        mask[_shape_mask(shape, h, w)] = shape.label
    colors = np.stack([class_color(k) for k in range(int(mask.max()) + 1)])
    image = colors[mask].transpose(2, 0, 1).astype(np.float32)
    if noise > 0:
        rng = rng or np.random.default_rng(0)
        image = np.clip(image + noise * rng.standard_normal(image.shape).astype(np.float32), 0.0, 1.0)
    return Sample(image=image, mask=mask, name=name)


def _random_shape(rng: np.random.Generator, kind: str, label: int, h: int, w: int) -> ShapeSpec:
    bh = int(rng.integers(max(2, h // 6), max(3, h // 2) + 1))
    bw = int(rng.integers(max(2, w // 6), max(3, w // 2) + 1))
    top = int(rng.integers(0, max(1, h - bh + 1)))
    left = int(rng.integers(0, max(1, w - bw + 1)))
    return ShapeSpec(kind, label, (top, left, top + bh, left + bw), vertical=bool(rng.integers(0, 2)))


def gen_synthetic(spec: SyntheticSceneSpec) -> List[Sample]:
    """Scenes fully determined by ``spec``; sample ``i`` draws from its own seeded stream."""
    h, w = spec.canvas
    samples: List[Sample] = []
    for index in range(spec.n_samples):
        rng = np.random.default_rng([spec.seed, index])
        n_shapes = int(rng.integers(1, min(spec.max_shapes, spec.num_classes - 1) + 1))
        labels = rng.choice(np.arange(1, spec.num_classes), size=n_shapes, replace=False)
        shapes = [
            _random_shape(rng, spec.shape_kinds[int(rng.integers(0, len(spec.shape_kinds)))], int(label), h, w)
            for label in labels
        ]
        noise_rng = rng if spec.noise_seed is None else np.random.default_rng([spec.noise_seed, index])
        samples.append(render_scene(shapes, spec.canvas, spec.noise, noise_rng, name=f"synthetic_{index:05d}"))
    return samples


def class_histogram(samples: Sequence[Sample], num_classes: int) -> np.ndarray:
    hist = np.zeros(num_classes, dtype=np.int64)
    for sample in samples:
        hist += np.bincount(sample.mask.ravel(), minlength=num_classes)[:num_classes]
    return hist


__all__ = ["ShapeSpec", "class_color", "class_histogram", "gen_synthetic", "render_scene"]

"""Dataset readers and deterministic batch assembly."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from crosscbam.data.augment import augment
from crosscbam.data.image_io import read_image, read_mask
from crosscbam.data.synthetic import gen_synthetic
from crosscbam.errors import ConfigurationError, DataError
from crosscbam.models.data import Sample, SyntheticSceneSpec
from crosscbam.models.training import AugmentConfig

Batch = Tuple[np.ndarray, np.ndarray]


class SegmentationDataset:
    """Indexable collection of :class:`Sample` objects."""

    num_classes: int = 19

    def __len__(self) -> int:  # pragma: no cover - interface
        raise NotImplementedError

    def __getitem__(self, index: int) -> Sample:  # pragma: no cover - interface
        raise NotImplementedError


class InMemoryDataset(SegmentationDataset):
    def __init__(self, samples: Sequence[Sample], num_classes: int):
        self.samples = list(samples)
        self.num_classes = num_classes

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> Sample:
        return self.samples[index]


class SyntheticDataset(InMemoryDataset):
    def __init__(self, spec: SyntheticSceneSpec):
        super().__init__(gen_synthetic(spec), spec.num_classes)
        self.spec = spec


class FilePairDataset(SegmentationDataset):
    """Image/label-map file pairs read lazily from disk."""

    def __init__(self, pairs: Sequence[Tuple[Path, Path]], num_classes: int, name: str):
        if not pairs:
            raise DataError(f"{name}: no image/label pairs found")
        self.pairs = list(pairs)
        self.num_classes = num_classes
        self.name = name

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, index: int) -> Sample:
        image_path, mask_path = self.pairs[index]
        return Sample(image=read_image(image_path), mask=read_mask(mask_path), name=image_path.stem)


def cityscapes(root: "str | Path", split: str = "train") -> FilePairDataset:
    """``leftImg8bit/<split>/<city>/*_leftImg8bit.png`` with ``gtFine/<split>/<city>/*_gtFine_labelTrainIds.png``."""
    root = Path(root)
    pairs = []
    for image_path in sorted((root / "leftImg8bit" / split).glob("*/*_leftImg8bit.png")):
        stem = image_path.name[: -len("_leftImg8bit.png")]
        mask_path = root / "gtFine" / split / image_path.parent.name / f"{stem}_gtFine_labelTrainIds.png"
        if not mask_path.exists():
            raise DataError(f"missing label map {mask_path} for {image_path}")
        pairs.append((image_path, mask_path))
    return FilePairDataset(pairs, 19, f"cityscapes/{split}")


def camvid(root: "str | Path", split: str = "train") -> FilePairDataset:
    """``<split>/*.png`` with same-named label maps in ``<split>annot/``."""
    root = Path(root)
    pairs = []
    for image_path in sorted((root / split).glob("*.png")):
        mask_path = root / f"{split}annot" / image_path.name
        if not mask_path.exists():
            raise DataError(f"missing label map {mask_path} for {image_path}")
        pairs.append((image_path, mask_path))
    return FilePairDataset(pairs, 11, f"camvid/{split}")


def open_dataset(kind: str, root: "str | Path", split: str) -> FilePairDataset:
    readers = {"cityscapes": cityscapes, "camvid": camvid}
    if kind not in readers:
        raise ConfigurationError(f"unknown dataset '{kind}', expected one of {sorted(readers)}")
    return readers[kind](root, split)


def epoch_order(n: int, epoch: int, seed: int, shuffle: bool = True) -> np.ndarray:
    if not shuffle:
        return np.arange(n)
    return np.random.default_rng([seed, epoch]).permutation(n)


def _prepare(
    dataset: SegmentationDataset,
    index: int,
    epoch: int,
    seed: int,
    augment_cfg: Optional[AugmentConfig],
) -> Sample:
    sample = dataset[index]
    if augment_cfg is None:
        return sample
    return augment(sample, augment_cfg, np.random.default_rng([seed, epoch, index]))


def iterate_batches(
    dataset: SegmentationDataset,
    batch_size: int,
    *,
    epoch: int = 0,
    seed: int = 0,
    augment_cfg: Optional[AugmentConfig] = None,
    shuffle: bool = True,
    workers: int = 0,
    logger: Optional[logging.Logger] = None,
) -> Iterator[Batch]:
    """Fixed-size batches, last partial batch dropped.

    Sample order depends only on ``(seed, epoch)`` and each sample's augmentation
    stream only on ``(seed, epoch, index)``, so a worker pool returns the same
    batches as a serial loop.
    """
    logger = logger or logging.getLogger(__name__)
    if batch_size < 1:
        raise ConfigurationError(f"batch_size must be positive, got {batch_size}")
    order = epoch_order(len(dataset), epoch, seed, shuffle)
    n_batches = len(order) // batch_size
    if n_batches == 0:
        logger.warning(f"Dataset of {len(dataset)} samples yields no full batch of {batch_size}")
        return
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 0 else None
    try:
        for b in range(n_batches):
            indices = [int(i) for i in order[b * batch_size : (b + 1) * batch_size]]
            if pool is None:
                samples: List[Sample] = [_prepare(dataset, i, epoch, seed, augment_cfg) for i in indices]
            else:
                samples = list(pool.map(lambda i: _prepare(dataset, i, epoch, seed, augment_cfg), indices))
            shapes = {s.mask.shape for s in samples}
            if len(shapes) != 1:
                raise DataError(f"samples in one batch have different sizes {sorted(shapes)}; set a crop size")
            yield np.stack([s.image for s in samples]), np.stack([s.mask for s in samples])
    finally:
        if pool is not None:
            pool.shutdown(wait=True)


__all__ = [
    "FilePairDataset",
    "InMemoryDataset",
    "SegmentationDataset",
    "SyntheticDataset",
    "camvid",
    "cityscapes",
    "epoch_order",
    "iterate_batches",
    "open_dataset",
]

"""Synthetic scenes, augmentation, image files, checkpoints and dataset readers."""
from .augment import augment, hflip
from .checkpoint import load_checkpoint, read_checkpoint, save_checkpoint
from .datasets import SyntheticDataset, iterate_batches, open_dataset
from .image_io import read_image, read_mask, write_color_mask, write_image, write_mask
from .synthetic import gen_synthetic, render_scene

__all__ = [
    "SyntheticDataset",
    "augment",
    "gen_synthetic",
    "hflip",
    "iterate_batches",
    "load_checkpoint",
    "open_dataset",
    "read_checkpoint",
    "read_image",
    "read_mask",
    "render_scene",
    "save_checkpoint",
    "write_color_mask",
    "write_image",
    "write_mask",
]

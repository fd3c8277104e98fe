"""XCBM checkpoint codec.

Layout, all integers little-endian u32::

    b"XCBM" | version | config_len | config JSON (UTF-8) | count
    count x ( name_len | name (UTF-8) | rank | dims[rank] | float32 payload )

A file is parsed completely before anything is assigned to a model, so a
truncated or mismatched file never leaves a model half-restored.
"""
from __future__ import annotations

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from crosscbam.errors import ConfigurationError, DataError
from crosscbam.models.data import Checkpoint
from crosscbam.nn.layers import Module, state_dict

MAGIC = b"XCBM"
VERSION = 1
_U32 = struct.Struct("<I")


def encode(checkpoint: Checkpoint) -> bytes:
    parts = [MAGIC, _U32.pack(checkpoint.version)]
    config = json.dumps(checkpoint.config, sort_keys=True).encode("utf-8")
    parts += [_U32.pack(len(config)), config, _U32.pack(len(checkpoint.tensors))]
    for name, array in checkpoint.tensors.items():
        encoded = name.encode("utf-8")
        parts += [_U32.pack(len(encoded)), encoded, _U32.pack(array.ndim)]
        parts += [_U32.pack(int(d)) for d in array.shape]
        parts.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, raw: bytes, source: str):
        self.raw = raw
        self.source = source
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        end = self.offset + n
        if end > len(self.raw):
            raise DataError(
                f"{self.source}: truncated checkpoint, {what} needs {n} bytes at offset {self.offset} "
                f"but the file has {len(self.raw)}"
            )
        chunk = self.raw[self.offset : end]
        self.offset = end
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def decode(raw: bytes, source: str = "<bytes>") -> Checkpoint:
    reader = _Reader(raw, source)
    if reader.take(4, "magic") != MAGIC:
        raise DataError(f"{source}: not an XCBM checkpoint (bad magic at offset 0)")
    version = reader.u32("version")
    if version != VERSION:
        raise DataError(f"{source}: unsupported checkpoint version {version}, this build reads version {VERSION}")
    config_bytes = reader.take(reader.u32("config length"), "config")
    try:
        config = json.loads(config_bytes.decode("utf-8")) if config_bytes else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{source}: config echo is not valid JSON: {exc}") from exc
    count = reader.u32("tensor count")
    tensors: Dict[str, np.ndarray] = {}
    for index in range(count):
        start = reader.offset
        raw_name = reader.take(reader.u32(f"tensor {index} name length"), f"tensor {index} name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataError(f"{source}: tensor {index} name at offset {start} is not valid UTF-8") from exc
        rank = reader.u32(f"{name} rank")
        dims = tuple(reader.u32(f"{name} dim") for _ in range(rank))
        size = int(np.prod(dims, dtype=np.int64)) if dims else 1
        payload = reader.take(4 * size, f"{name} payload")
        if name in tensors:
            raise DataError(f"{source}: duplicate tensor name '{name}'")
        tensors[name] = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)
    if reader.offset != len(raw):
        raise DataError(f"{source}: {len(raw) - reader.offset} trailing bytes after offset {reader.offset}")
    return Checkpoint(config=config, tensors=tensors, version=version)


def model_state(model: Module) -> Dict[str, np.ndarray]:
    return state_dict(model)


def _config_echo(model: Module) -> Dict[str, Any]:
    cfg = getattr(model, "cfg", None)
    return cfg.to_dict() if cfg is not None and hasattr(cfg, "to_dict") else {}


def save_checkpoint(
    model: Module,
    path: "str | Path",
    extra: Optional[Dict[str, Any]] = None,
    logger: Optional[logging.Logger] = None,
) -> Path:
    logger = logger or logging.getLogger(__name__)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    config = {"network": _config_echo(model), **(extra or {})}
    checkpoint = Checkpoint(config=config, tensors=model_state(model))
    path.write_bytes(encode(checkpoint))
    logger.info(f"Saved checkpoint with {len(checkpoint.tensors)} tensors to {path}")
    return path


def read_checkpoint(path: "str | Path") -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such checkpoint")
    return decode(path.read_bytes(), str(path))


def restore(model: Module, checkpoint: Checkpoint) -> None:
    """Validate every tensor and the config echo against the model, then assign them all."""
    state = model_state(model)
    names = list(state)
    stored = list(checkpoint.tensors)
    for position, name in enumerate(names):
        if position >= len(stored):
            raise ConfigurationError(f"checkpoint is missing tensor '{name}'")
        if stored[position] != name:
            raise ConfigurationError(
                f"tensor mismatch at position {position}: model has '{name}', checkpoint has '{stored[position]}'"
            )
        if checkpoint.tensors[name].shape != state[name].shape:
            raise ConfigurationError(
                f"tensor '{name}' has shape {checkpoint.tensors[name].shape} in the checkpoint "
                f"but {state[name].shape} in the model"
            )
    if len(stored) > len(names):
        raise ConfigurationError(f"checkpoint has unexpected tensor '{stored[len(names)]}'")
    echo = checkpoint.config.get("network")
    expected = _config_echo(model)
    if echo and expected and echo != expected:
        diffs = sorted(k for k in set(echo) | set(expected) if echo.get(k) != expected.get(k))
        raise ConfigurationError(f"checkpoint was saved from a different network config (keys: {', '.join(diffs)})")
    for name in names:
        state[name][...] = checkpoint.tensors[name]


def load_checkpoint(model: Module, path: "str | Path", logger: Optional[logging.Logger] = None) -> Checkpoint:
    logger = logger or logging.getLogger(__name__)
    checkpoint = read_checkpoint(path)
    restore(model, checkpoint)
    logger.info(f"Restored {len(checkpoint.tensors)} tensors from {path}")
    return checkpoint


__all__ = [
    "MAGIC",
    "VERSION",
    "decode",
    "encode",
    "load_checkpoint",
    "model_state",
    "read_checkpoint",
    "restore",
    "save_checkpoint",
]

"""Image and label-map files: 8-bit PNG through Pillow, ASCII PGM/PPM as a fallback."""
from __future__ import annotations

import io
from pathlib import Path
from typing import List, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError

from crosscbam.errors import DataError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"

# 19-class street-scene palette (trainId order).
PALETTE: np.ndarray = np.array(
    [
        (128, 64, 128),
        (244, 35, 232),
        (70, 70, 70),
        (102, 102, 156),
        (190, 153, 153),
        (153, 153, 153),
        (250, 170, 30),
        (220, 220, 0),
        (107, 142, 35),
        (152, 251, 152),
        (70, 130, 180),
        (220, 20, 60),
        (255, 0, 0),
        (0, 0, 142),
        (0, 0, 70),
        (0, 60, 100),
        (0, 80, 100),
        (0, 0, 230),
        (119, 11, 32),
    ],
    dtype=np.uint8,
)
CLASS_NAMES: Tuple[str, ...] = (
    "road", "sidewalk", "building", "wall", "fence", "pole", "traffic light", "traffic sign",
    "vegetation", "terrain", "sky", "person", "rider", "car", "truck", "bus", "train",
    "motorcycle", "bicycle",
)
IGNORE_COLOR = np.array((0, 0, 0), dtype=np.uint8)


# ---------------------------------------------------------------------------
# PNG
# ---------------------------------------------------------------------------

def _check_png(raw: bytes, path: Path) -> None:
    head = raw[: len(PNG_SIGNATURE)]
    for offset, (got, want) in enumerate(zip(head, PNG_SIGNATURE)):
        if got != want:
            raise DataError(f"{path}: bad PNG signature byte at offset {offset} (0x{got:02x} != 0x{want:02x})")
    if len(head) < len(PNG_SIGNATURE):
        raise DataError(f"{path}: file ends at byte offset {len(head)} inside the PNG signature")


def _open_png(path: Path) -> Image.Image:
    raw = path.read_bytes()
    _check_png(raw, path)
    try:
        img = Image.open(io.BytesIO(raw))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DataError(f"{path}: malformed PNG after the signature (offset {len(PNG_SIGNATURE)}): {exc}") from exc
    return img


# ---------------------------------------------------------------------------
# ASCII PGM (P2) / PPM (P3)
# ---------------------------------------------------------------------------

def _netpbm_tokens(raw: bytes, path: Path) -> List[Tuple[int, bytes]]:
    """Whitespace-separated tokens with their byte offsets; ``#`` comments dropped."""
    tokens: List[Tuple[int, bytes]] = []
    i, n = 0, len(raw)
    while i < n:
        ch = raw[i : i + 1]
        if ch.isspace():
            i += 1
        elif ch == b"#":
            while i < n and raw[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        else:
            start = i
            while i < n and not raw[i : i + 1].isspace() and raw[i : i + 1] != b"#":
                i += 1
            tokens.append((start, raw[start:i]))
    return tokens


def _read_netpbm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    tokens = _netpbm_tokens(raw, path)
    if not tokens or tokens[0][1] not in (b"P2", b"P3"):
        offset = tokens[0][0] if tokens else 0
        raise DataError(f"{path}: expected ASCII PGM/PPM magic 'P2' or 'P3' at byte offset {offset}")
    channels = 3 if tokens[0][1] == b"P3" else 1
    if len(tokens) < 4:
        raise DataError(f"{path}: header truncated at byte offset {len(raw)}")

    def as_int(index: int, what: str) -> int:
        offset, tok = tokens[index]
        try:
            value = int(tok)
        except ValueError:
            raise DataError(f"{path}: invalid {what} {tok!r} at byte offset {offset}") from None
        if value < 0:
            raise DataError(f"{path}: negative {what} at byte offset {offset}")
        return value

    width, height, maxval = as_int(1, "width"), as_int(2, "height"), as_int(3, "maxval")
    if width == 0 or height == 0 or not 0 < maxval <= 255:
        raise DataError(f"{path}: unsupported header values {width}x{height} maxval {maxval} at byte offset {tokens[1][0]}")
    expected = width * height * channels
    body = tokens[4:]
    if len(body) < expected:
        raise DataError(
            f"{path}: expected {expected} samples but data ends at byte offset {len(raw)} after {len(body)}"
        )
    values = np.empty(expected, dtype=np.int64)
    for k in range(expected):
        values[k] = as_int(4 + k, "sample")
        if values[k] > maxval:
            raise DataError(f"{path}: sample {values[k]} exceeds maxval {maxval} at byte offset {body[k][0]}")
    if maxval != 255 and channels == 3:
        values = np.round(values * (255.0 / maxval)).astype(np.int64)
    shape = (height, width, channels) if channels == 3 else (height, width)
    return values.reshape(shape).astype(np.uint8)


def _write_netpbm(path: Path, array: np.ndarray) -> None:
    if array.ndim == 2:
        magic, rows = "P2", [" ".join(str(int(v)) for v in row) for row in array]
    else:
        magic, rows = "P3", [" ".join(str(int(v)) for v in row.reshape(-1)) for row in array]
    h, w = array.shape[:2]
    path.write_text(f"{magic}\n{w} {h}\n255\n" + "\n".join(rows) + "\n", encoding="ascii")


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def _read_raw(path: "str | Path", palette_as_rgb: bool = False) -> np.ndarray:
    """Pixel array of a PNG or netpbm file; palette PNGs keep their indices unless ``palette_as_rgb``."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        return _read_netpbm(path)
    img = _open_png(path)
    if img.mode == "P" and palette_as_rgb:
        img = img.convert("RGB")
    if img.mode in ("L", "P", "RGB"):
        return np.asarray(img)
    if img.mode in ("RGBA", "LA", "I;16", "I"):
        return np.asarray(img.convert("RGB" if "A" in img.mode else "L"))
    raise DataError(f"{path}: unsupported PNG mode {img.mode}")


def _write_raw(path: "str | Path", array: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        _write_netpbm(path, array)
    else:
        Image.fromarray(array).save(path, format="PNG")
    return path


def read_image(path: "str | Path") -> np.ndarray:
    """Float ``(3, h, w)`` image in [0, 1]; grey files are replicated to three channels."""
    raw = _read_raw(path, palette_as_rgb=True)
    if raw.ndim == 2:
        raw = np.repeat(raw[:, :, None], 3, axis=2)
    return (raw.astype(np.float32) / 255.0).transpose(2, 0, 1)


def write_image(path: "str | Path", image: np.ndarray) -> Path:
    """Write a float ``(3, h, w)`` image, quantized to 8 bits."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise DataError(f"expected a (3, h, w) image, got {image.shape}")
    quantized = np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    return _write_raw(path, quantized.transpose(1, 2, 0))


def read_mask(path: "str | Path") -> np.ndarray:
    raw = _read_raw(path)
    if raw.ndim != 2:
        raise DataError(f"{path}: a label map must be single-channel, got shape {raw.shape}")
    return raw.astype(np.int64)


def write_mask(path: "str | Path", mask: np.ndarray) -> Path:
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise DataError(f"a label map must be 2-D, got shape {mask.shape}")
    if mask.size and (mask.min() < 0 or mask.max() > 255):
        raise DataError("label values must fit in 8 bits")
    return _write_raw(path, mask.astype(np.uint8))


def colorize(mask: np.ndarray, palette: np.ndarray = PALETTE) -> np.ndarray:
    """``(h, w, 3)`` uint8 colors; labels outside the palette are painted black."""
    mask = np.asarray(mask)
    out = np.broadcast_to(IGNORE_COLOR, mask.shape + (3,)).copy()
    known = (mask >= 0) & (mask < len(palette))
    out[known] = palette[mask[known]]
    return out


def decolorize(rgb: np.ndarray, palette: np.ndarray = PALETTE, ignore_index: int = 255) -> np.ndarray:
    """Invert :func:`colorize`; black maps to ``ignore_index``, any other unknown color is an error."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    codes = (rgb[..., 0].astype(np.int64) << 16) | (rgb[..., 1].astype(np.int64) << 8) | rgb[..., 2]
    table = {int(r) << 16 | int(g) << 8 | int(b): k for k, (r, g, b) in enumerate(palette)}
    out = np.full(codes.shape, ignore_index, dtype=np.int64)
    unknown = codes != 0
    for code, label in table.items():
        hit = codes == code
        out[hit] = label
        unknown &= ~hit
    if unknown.any():
        y, x = np.argwhere(unknown)[0]
        raise DataError(f"color {tuple(int(v) for v in rgb[y, x])} at pixel ({y}, {x}) is not in the palette")
    return out


def write_color_mask(path: "str | Path", mask: np.ndarray) -> Path:
    return _write_raw(path, colorize(mask))


def read_color_mask(path: "str | Path", ignore_index: int = 255) -> np.ndarray:
    raw = _read_raw(path, palette_as_rgb=True)
    if raw.ndim != 3:
        raise DataError(f"{path}: a color mask must have three channels")
    return decolorize(raw, ignore_index=ignore_index)


def overlay(image: np.ndarray, mask: np.ndarray, alpha: float = 0.5) -> np.ndarray:
    """Blend palette colors over a float ``(3, h, w)`` image; returns ``(h, w, 3)`` uint8."""
    base = np.clip(np.asarray(image, dtype=np.float64).transpose(1, 2, 0) * 255.0, 0, 255)
    blended = (1.0 - alpha) * base + alpha * colorize(mask).astype(np.float64)
    return np.round(blended).astype(np.uint8)


def write_overlay(path: "str | Path", image: np.ndarray, mask: np.ndarray, alpha: float = 0.5) -> Path:
    return _write_raw(path, overlay(image, mask, alpha))


__all__ = [
    "CLASS_NAMES",
    "PALETTE",
    "PNG_SIGNATURE",
    "colorize",
    "decolorize",
    "overlay",
    "read_color_mask",
    "read_image",
    "read_mask",
    "write_color_mask",
    "write_image",
    "write_mask",
    "write_overlay",
]

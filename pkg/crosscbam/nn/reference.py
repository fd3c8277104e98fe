"""Straight-line scalar implementations used as oracles for the vectorized ops.

Everything here works on plain float64 arrays with explicit loops, sharing no
code with :mod:`crosscbam.nn.functional`.
"""
from __future__ import annotations

import math
from typing import Dict, Optional

import numpy as np


def conv2d_ref(
    x: np.ndarray,
    weight: np.ndarray,
    bias: Optional[np.ndarray] = None,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
) -> np.ndarray:
    n, c, h, w = x.shape
    oc, _, kh, kw = weight.shape
    oh = (h + 2 * padding - dilation * (kh - 1) - 1) // stride + 1
    ow = (w + 2 * padding - dilation * (kw - 1) - 1) // stride + 1
    out = np.zeros((n, oc, oh, ow))
    for b in range(n):
        for o in range(oc):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0 if bias is None else float(bias[o])
                    for ci in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                y = i * stride - padding + u * dilation
                                xx = j * stride - padding + v * dilation
                                if 0 <= y < h and 0 <= xx < w:
                                    acc += float(x[b, ci, y, xx]) * float(weight[o, ci, u, v])
                    out[b, o, i, j] = acc
    return out


def pool2d_ref(x: np.ndarray, kind: str, k: int, stride: int, pad: int = 0) -> np.ndarray:
    n, c, h, w = x.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    out = np.zeros((n, c, oh, ow))
    for b in range(n):
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    values = []
                    for u in range(k):
                        for v in range(k):
                            y = i * stride - pad + u
                            xx = j * stride - pad + v
                            if 0 <= y < h and 0 <= xx < w:
                                values.append(float(x[b, ch, y, xx]))
                    out[b, ch, i, j] = max(values) if kind == "max" else sum(values) / len(values)
    return out


def _sample_1d(size_in: int, size_out: int, o: int):
    src = (o + 0.5) * size_in / size_out - 0.5
    if src < 0:
        src = 0.0
    lo = int(math.floor(src))
    hi = min(lo + 1, size_in - 1)
    return lo, hi, src - lo


def bilinear_ref(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    n, c, h, w = x.shape
    out = np.zeros((n, c, out_h, out_w))
    for b in range(n):
        for ch in range(c):
            for i in range(out_h):
                y0, y1, fy = _sample_1d(h, out_h, i)
                for j in range(out_w):
                    x0, x1, fx = _sample_1d(w, out_w, j)
                    top = (1 - fx) * x[b, ch, y0, x0] + fx * x[b, ch, y0, x1]
                    bottom = (1 - fx) * x[b, ch, y1, x0] + fx * x[b, ch, y1, x1]
                    out[b, ch, i, j] = (1 - fy) * top + fy * bottom
    return out


def sigmoid_ref(v: float) -> float:
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def _dense(vec, weight: np.ndarray, bias: np.ndarray):
    """A 1x1 conv on a single pixel: ``weight`` is (out, in, 1, 1)."""
    out_ch, in_ch = weight.shape[:2]
    return [
        float(bias[o]) + sum(float(weight[o, i, 0, 0]) * vec[i] for i in range(in_ch))
        for o in range(out_ch)
    ]


def _mlp(vec, w1, b1, w2, b2):
    hidden = [max(0.0, v) for v in _dense(vec, w1, b1)]
    return _dense(hidden, w2, b2)


def channel_attention_ref(x: np.ndarray, p: Dict[str, np.ndarray]) -> np.ndarray:
    """``p`` holds w1, b1, w2, b2 of the shared bottleneck (optionally mw1.. for the max branch)."""
    n, c, h, w = x.shape
    out = np.zeros((n, c, 1, 1))
    for b in range(n):
        avg = [sum(float(v) for v in x[b, ch].ravel()) / (h * w) for ch in range(c)]
        mx = [max(float(v) for v in x[b, ch].ravel()) for ch in range(c)]
        a = _mlp(avg, p["w1"], p["b1"], p["w2"], p["b2"])
        if "mw1" in p:
            m = _mlp(mx, p["mw1"], p["mb1"], p["mw2"], p["mb2"])
        else:
            m = _mlp(mx, p["w1"], p["b1"], p["w2"], p["b2"])
        for ch in range(c):
            out[b, ch, 0, 0] = sigmoid_ref(m[ch] + a[ch])
    return out


def spatial_attention_ref(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    out = np.zeros((n, 1, h, w))
    for b in range(n):
        for i in range(h):
            for j in range(w):
                column = [float(x[b, ch, i, j]) for ch in range(c)]
                mx, avg = max(column), sum(column) / c
                pre = float(bias[0]) + float(weight[0, 0, 0, 0]) * mx + float(weight[0, 1, 0, 0]) * avg
                out[b, 0, i, j] = sigmoid_ref(pre)
    return out


def se_block_ref(x: np.ndarray, p: Dict[str, np.ndarray]) -> np.ndarray:
    n, c, h, w = x.shape
    out = np.zeros_like(x, dtype=np.float64)
    for b in range(n):
        squeeze = [sum(float(v) for v in x[b, ch].ravel()) / (h * w) for ch in range(c)]
        gates = [sigmoid_ref(v) for v in _mlp(squeeze, p["w1"], p["b1"], p["w2"], p["b2"])]
        for ch in range(c):
            out[b, ch] = x[b, ch] * gates[ch]
    return out


def ccbam_ref(high: np.ndarray, low: np.ndarray, p: Dict[str, Dict[str, np.ndarray]]) -> np.ndarray:
    """``p`` has ca_high, ca_low (bottleneck dicts) and sa_high, sa_low (dicts with weight, bias)."""
    c_high = channel_attention_ref(high, p["ca_high"])
    c_low = channel_attention_ref(low, p["ca_low"])
    f_high = low * c_high
    f_low = high * c_low
    s_high = spatial_attention_ref(f_high, p["sa_high"]["weight"], p["sa_high"]["bias"])
    s_low = spatial_attention_ref(f_low, p["sa_low"]["weight"], p["sa_low"]["bias"])
    return f_low * s_high + f_high * s_low


def pixel_losses_ref(logits: np.ndarray, target: np.ndarray, gamma: float, ignore_index: int = 255) -> float:
    """Mean focal term over non-ignored pixels; gamma 0 gives cross-entropy."""
    n, k, h, w = logits.shape
    total, count = 0.0, 0
    for b in range(n):
        for i in range(h):
            for j in range(w):
                t = int(target[b, i, j])
                if t == ignore_index:
                    continue
                scores = [float(logits[b, cls, i, j]) for cls in range(k)]
                top = max(scores)
                lse = top + math.log(sum(math.exp(s - top) for s in scores))
                log_pt = scores[t] - lse
                total += -((1.0 - math.exp(log_pt)) ** gamma) * log_pt
                count += 1
    return total / count if count else 0.0


__all__ = [
    "bilinear_ref",
    "ccbam_ref",
    "channel_attention_ref",
    "conv2d_ref",
    "pixel_losses_ref",
    "pool2d_ref",
    "se_block_ref",
    "sigmoid_ref",
    "spatial_attention_ref",
]

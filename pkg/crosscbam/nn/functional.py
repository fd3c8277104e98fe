"""Differentiable NCHW operations.

Every op validates its geometry, reports its cost to the active op counter and,
when gradients are needed, records a closure on the tape. All reductions use a
fixed association order, so repeated runs are bit-identical.
"""
from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import as_strided

from crosscbam.errors import ConfigurationError
from crosscbam.nn import tracing
from crosscbam.nn.params import BatchNormParams, ConvParams, Mode
from crosscbam.nn.tensor import Tensor, make_result

POOL_KINDS = ("max", "avg")
ELEMENTWISE_KINDS = ("add", "mul")
ACTIVATION_KINDS = ("relu", "sigmoid")


def _require_4d(x: Tensor, op: str) -> Tuple[int, int, int, int]:
    if x.ndim != 4:
        raise ConfigurationError(f"{op} expects an (n, c, h, w) tensor, got shape {x.shape}")
    n, c, h, w = x.shape
    return n, c, h, w


def _placeholder(shape: Sequence[int], dtype: np.dtype) -> Tensor:
    return Tensor(np.broadcast_to(np.zeros((), dtype=dtype), tuple(shape)))


def _check_kind(kind: str, allowed: Sequence[str], op: str) -> None:
    if kind not in allowed:
        raise ConfigurationError(f"{op} kind must be one of {allowed}, got {kind!r}")


def output_size(size: int, kernel: int, stride: int, padding: int, dilation: int = 1) -> int:
    """Sliding-window output length; raises when the window does not fit."""
    extent = dilation * (kernel - 1) + 1
    if extent > size + 2 * padding:
        raise ConfigurationError(
            f"effective kernel extent {extent} exceeds padded input extent {size + 2 * padding}"
        )
    out = (size + 2 * padding - extent) // stride + 1
    if out < 1:
        raise ConfigurationError(f"non-positive output size {out}")
    return out


def _windows(
    xp: np.ndarray, kh: int, kw: int, stride: int, dilation: int, oh: int, ow: int
) -> np.ndarray:
    n, c = xp.shape[:2]
    sn, sc, sh, sw = xp.strides
    return as_strided(
        xp,
        shape=(n, c, kh, kw, oh, ow),
        strides=(sn, sc, sh * dilation, sw * dilation, sh * stride, sw * stride),
        writeable=False,
    )


def _scatter_windows(
    target: np.ndarray, values: np.ndarray, i0: int, j0: int, stride: int, oh: int, ow: int
) -> None:
    target[:, :, i0 : i0 + stride * (oh - 1) + 1 : stride, j0 : j0 + stride * (ow - 1) + 1 : stride] += values


def _pad(x: np.ndarray, padding: int, value: float = 0.0) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)), constant_values=value)


def conv2d(x: Tensor, p: ConvParams) -> Tensor:
    n, c, h, w = _require_4d(x, "conv2d")
    if c != p.in_channels:
        raise ConfigurationError(f"conv2d expects {p.in_channels} input channels, got {c}")
    kh, kw = p.kernel_size
    s, pad, d = p.stride, p.padding, p.dilation
    oh = output_size(h, kh, s, pad, d)
    ow = output_size(w, kw, s, pad, d)
    oc = p.out_channels
    tracing.record("conv2d", macs=n * oc * oh * ow * c * kh * kw)
    if tracing.shape_only():
        return _placeholder((n, oc, oh, ow), x.data.dtype)

    weight = p.weight.data
    xp = _pad(x.data, pad)
    cols = _windows(xp, kh, kw, s, d, oh, ow)
    out = np.tensordot(cols, weight, axes=([1, 2, 3], [1, 2, 3]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if p.bias is not None:
        out += p.bias.data.reshape(1, -1, 1, 1)

    def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
        grads: List[Optional[np.ndarray]] = [None, None]
        if x.requires_grad:
            dcols = np.tensordot(g, weight, axes=([1], [0]))
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    _scatter_windows(gxp, dcols[..., i, j].transpose(0, 3, 1, 2), i * d, j * d, s, oh, ow)
            grads[0] = gxp[:, :, pad : pad + h, pad : pad + w] if pad else gxp
        if p.weight.requires_grad:
            grads[1] = np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5]))
        if p.bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)) if p.bias.requires_grad else None)
        return grads

    inputs = [x, p.weight] + ([p.bias] if p.bias is not None else [])
    return make_result(out, "conv2d", inputs, backward_fn)


def batch_norm(x: Tensor, p: BatchNormParams) -> Tensor:
    n, c, h, w = _require_4d(x, "batch_norm")
    if c != p.channels:
        raise ConfigurationError(f"batch_norm expects {p.channels} channels, got {c}")
    tracing.record("batch_norm", elementwise=x.size)
    if tracing.shape_only():
        return _placeholder(x.shape, x.data.dtype)

    axes = (0, 2, 3)
    gamma = p.gamma.data.reshape(1, -1, 1, 1)
    beta = p.beta.data.reshape(1, -1, 1, 1)
    if p.mode is Mode.TRAIN:
        count = n * h * w
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        inv_std = 1.0 / np.sqrt(var + p.epsilon)
        xhat = (x.data - mean.reshape(1, -1, 1, 1)) * inv_std.reshape(1, -1, 1, 1)
        unbiased = var * count / (count - 1) if count > 1 else var
        p.running_mean[...] = (1.0 - p.momentum) * p.running_mean + p.momentum * mean
        p.running_var[...] = (1.0 - p.momentum) * p.running_var + p.momentum * unbiased
    else:
        count = 0
        inv_std = 1.0 / np.sqrt(p.running_var + p.epsilon)
        xhat = (x.data - p.running_mean.reshape(1, -1, 1, 1)) * inv_std.reshape(1, -1, 1, 1)
    out = (gamma * xhat + beta).astype(x.data.dtype, copy=False)
    training = p.mode is Mode.TRAIN

    def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
        gx = None
        if x.requires_grad:
            gxhat = g * gamma
            scale = inv_std.reshape(1, -1, 1, 1)
            if training:
                gx = (scale / count) * (
                    count * gxhat
                    - gxhat.sum(axis=axes, keepdims=True)
                    - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
                )
            else:
                gx = gxhat * scale
        ggamma = (g * xhat).sum(axis=axes) if p.gamma.requires_grad else None
        gbeta = g.sum(axis=axes) if p.beta.requires_grad else None
        return [gx, ggamma, gbeta]

    return make_result(out, "batch_norm", [x, p.gamma, p.beta], backward_fn)


def pool2d(x: Tensor, kind: str, k: int, stride: int, pad: int = 0) -> Tensor:
    """Max or average pooling; the average divides by the count of real (unpadded) cells."""
    _check_kind(kind, POOL_KINDS, "pool2d")
    n, c, h, w = _require_4d(x, "pool2d")
    if k < 1 or stride < 1 or pad < 0 or pad > k // 2:
        raise ConfigurationError(f"invalid pool geometry k={k} stride={stride} pad={pad}")
    oh = output_size(h, k, stride, pad)
    ow = output_size(w, k, stride, pad)
    tracing.record("pool2d", elementwise=n * c * oh * ow)
    if tracing.shape_only():
        return _placeholder((n, c, oh, ow), x.data.dtype)

    dtype = x.data.dtype
    if kind == "max":
        xp = _pad(x.data, pad, value=-np.inf)
        flat = _windows(xp, k, k, stride, 1, oh, ow).reshape(n, c, k * k, oh, ow)
        arg = flat.argmax(axis=2)
        out = np.take_along_axis(flat, arg[:, :, None], axis=2)[:, :, 0]
    else:
        xp = _pad(x.data, pad)
        ones = _pad(np.ones((1, 1, h, w), dtype=dtype), pad)
        counts = _windows(ones, k, k, stride, 1, oh, ow).sum(axis=(2, 3))
        out = _windows(xp, k, k, stride, 1, oh, ow).sum(axis=(2, 3)) / counts
    out = np.ascontiguousarray(out, dtype=dtype)

    def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        if kind == "max":
            for idx in range(k * k):
                i, j = divmod(idx, k)
                _scatter_windows(gxp, np.where(arg == idx, g, 0.0), i, j, stride, oh, ow)
        else:
            spread = g / counts
            for i in range(k):
                for j in range(k):
                    _scatter_windows(gxp, spread, i, j, stride, oh, ow)
        return [gxp[:, :, pad : pad + h, pad : pad + w] if pad else gxp]

    return make_result(out, f"{kind}_pool2d", [x], backward_fn)


def global_pool(x: Tensor, kind: str) -> Tensor:
    _check_kind(kind, POOL_KINDS, "global_pool")
    n, c, h, w = _require_4d(x, "global_pool")
    if h < 1 or w < 1:
        raise ConfigurationError(f"global_pool needs non-empty spatial dims, got {h}x{w}")
    tracing.record("global_pool", elementwise=x.size)
    if tracing.shape_only():
        return _placeholder((n, c, 1, 1), x.data.dtype)

    flat = x.data.reshape(n, c, h * w)
    if kind == "avg":
        out = flat.mean(axis=2).reshape(n, c, 1, 1)
    else:
        arg = flat.argmax(axis=2)
        out = np.take_along_axis(flat, arg[:, :, None], axis=2).reshape(n, c, 1, 1)

    def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
        if kind == "avg":
            return [np.broadcast_to(g / (h * w), (n, c, h, w)).copy()]
        gflat = np.zeros((n, c, h * w), dtype=g.dtype)
        np.put_along_axis(gflat, arg[:, :, None], g.reshape(n, c, 1), axis=2)
        return [gflat.reshape(n, c, h, w)]

    return make_result(out, f"global_{kind}_pool", [x], backward_fn)


def channelwise_reduce(x: Tensor, kind: str) -> Tensor:
    """Reduce across the channel axis to an ``(n, 1, h, w)`` map."""
    _check_kind(kind, POOL_KINDS, "channelwise_reduce")
    n, c, h, w = _require_4d(x, "channelwise_reduce")
    if c < 1:
        raise ConfigurationError("channelwise_reduce needs at least one channel")
    tracing.record("channelwise_reduce", elementwise=x.size)
    if tracing.shape_only():
        return _placeholder((n, 1, h, w), x.data.dtype)

    if kind == "avg":
        out = x.data.mean(axis=1, keepdims=True)
    else:
        arg = x.data.argmax(axis=1)[:, None]
        out = np.take_along_axis(x.data, arg, axis=1)

    def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
        if kind == "avg":
            return [np.broadcast_to(g / c, (n, c, h, w)).copy()]
        gx = np.zeros((n, c, h, w), dtype=g.dtype)
        np.put_along_axis(gx, arg, g, axis=1)
        return [gx]

    return make_result(out, f"channel_{kind}", [x], backward_fn)


def interpolation_matrix(in_size: int, out_size: int, dtype: np.dtype = np.float64) -> np.ndarray:
    """Row ``o`` holds the half-pixel bilinear weights of output sample ``o``."""
    scale = in_size / out_size
    src = np.maximum((np.arange(out_size, dtype=np.float64) + 0.5) * scale - 0.5, 0.0)
    lower = np.floor(src).astype(np.int64)
    upper = np.minimum(lower + 1, in_size - 1)
    frac = src - lower
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    rows = np.arange(out_size)
    np.add.at(matrix, (rows, lower), 1.0 - frac)
    np.add.at(matrix, (rows, upper), frac)
    return matrix.astype(dtype)


def resize_array(data: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of the two trailing axes of a plain array."""
    h, w = data.shape[-2:]
    rh = interpolation_matrix(h, out_h, data.dtype)
    rw = interpolation_matrix(w, out_w, data.dtype)
    return rh @ data @ rw.T


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Half-pixel-center bilinear resize (corners not aligned, borders clamped)."""
    n, c, h, w = _require_4d(x, "bilinear_resize")
    if out_h < 1 or out_w < 1:
        raise ConfigurationError(f"bilinear_resize target must be at least 1x1, got {out_h}x{out_w}")
    tracing.record("bilinear_resize", elementwise=n * c * out_h * out_w)
    if tracing.shape_only():
        return _placeholder((n, c, out_h, out_w), x.data.dtype)

    rh = interpolation_matrix(h, out_h, x.data.dtype)
    rw = interpolation_matrix(w, out_w, x.data.dtype)
    out = rh @ x.data @ rw.T

    def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
        return [rh.T @ g @ rw]

    return make_result(out, "bilinear_resize", [x], backward_fn)


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True) if axes else grad


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    """``a + b`` or ``a * b`` where ``b`` is same-shape, an (n,c,1,1) channel map or an (n,1,h,w) spatial map."""
    _check_kind(kind, ELEMENTWISE_KINDS, "elementwise")
    n, c, h, w = _require_4d(a, "elementwise")
    if b.ndim != 4 or b.shape not in {(n, c, h, w), (n, c, 1, 1), (n, 1, h, w)}:
        raise ConfigurationError(f"cannot broadcast shape {b.shape} onto {a.shape}")
    tracing.record(f"elementwise_{kind}", elementwise=a.size)
    if tracing.shape_only():
        return _placeholder(a.shape, a.data.dtype)

    out = a.data + b.data if kind == "add" else a.data * b.data
    b_shape = b.shape

    def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
        if kind == "add":
            return [g if a.requires_grad else None, _reduce_to(g, b_shape) if b.requires_grad else None]
        ga = g * b.data if a.requires_grad else None
        gb = _reduce_to(g * a.data, b_shape) if b.requires_grad else None
        return [ga, gb]

    return make_result(out, kind, [a, b], backward_fn)


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    return elementwise(a, b, "mul")


def sigmoid_array(v: np.ndarray) -> np.ndarray:
    """Overflow-free logistic function."""
    out = np.empty_like(v)
    positive = v >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-v[positive]))
    exp_v = np.exp(v[~positive])
    out[~positive] = exp_v / (1.0 + exp_v)
    return out


def activation(x: Tensor, kind: str) -> Tensor:
    _check_kind(kind, ACTIVATION_KINDS, "activation")
    tracing.record(kind, elementwise=x.size)
    if tracing.shape_only():
        return _placeholder(x.shape, x.data.dtype)

    if kind == "relu":
        out = np.maximum(x.data, 0).astype(x.data.dtype, copy=False)

        def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
            return [g * (x.data > 0)]
    else:
        out = sigmoid_array(x.data)

        def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
            return [g * out * (1.0 - out)]

    return make_result(out, kind, [x], backward_fn)


def relu(x: Tensor) -> Tensor:
    return activation(x, "relu")


def sigmoid(x: Tensor) -> Tensor:
    return activation(x, "sigmoid")


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    if not xs:
        raise ConfigurationError("concat_channels needs at least one input")
    n, _, h, w = _require_4d(xs[0], "concat_channels")
    for t in xs:
        tn, _, th, tw = _require_4d(t, "concat_channels")
        if (tn, th, tw) != (n, h, w):
            raise ConfigurationError(f"concat_channels spatial mismatch: {t.shape} vs {xs[0].shape}")
    widths = [t.shape[1] for t in xs]
    total = sum(widths)
    if tracing.shape_only():
        return _placeholder((n, total, h, w), xs[0].data.dtype)

    out = np.concatenate([t.data for t in xs], axis=1)
    bounds = np.cumsum([0] + widths)

    def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
        return [g[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]

    return make_result(out, "concat", list(xs), backward_fn)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    n, c, h, w = _require_4d(x, "slice_channels")
    if not 0 <= start < stop <= c:
        raise ConfigurationError(f"invalid channel slice [{start}, {stop}) of {c} channels")
    if tracing.shape_only():
        return _placeholder((n, stop - start, h, w), x.data.dtype)
    out = x.data[:, start:stop].copy()

    def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
        gx = np.zeros((n, c, h, w), dtype=g.dtype)
        gx[:, start:stop] = g
        return [gx]

    return make_result(out, "slice", [x], backward_fn)


def reduce_sum(x: Tensor) -> Tensor:
    """Sum of all elements as a (1, 1, 1, 1) scalar."""
    out = np.asarray(x.data.sum(), dtype=x.data.dtype).reshape(1, 1, 1, 1)
    shape = x.shape

    def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
        return [np.broadcast_to(g.reshape(()), shape).copy()]

    return make_result(out, "sum", [x], backward_fn)


def scale(x: Tensor, factor: float) -> Tensor:
    out = (x.data * factor).astype(x.data.dtype, copy=False)

    def backward_fn(g: np.ndarray) -> List[Optional[np.ndarray]]:
        return [g * factor]

    return make_result(out, "scale", [x], backward_fn)


__all__ = [
    "activation",
    "add",
    "batch_norm",
    "bilinear_resize",
    "channelwise_reduce",
    "concat_channels",
    "conv2d",
    "elementwise",
    "global_pool",
    "interpolation_matrix",
    "mul",
    "output_size",
    "pool2d",
    "reduce_sum",
    "relu",
    "resize_array",
    "scale",
    "sigmoid",
    "sigmoid_array",
    "slice_channels",
]

"""Model size, compute and latency measurement.

FLOPs are counted by a shape-only traced forward: every functional op reports
its cost and returns a placeholder without doing arithmetic, so counting a
full-resolution forward takes milliseconds.
"""
from __future__ import annotations

import logging
import os
import platform
import sys
import time
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from crosscbam.errors import ConfigurationError
from crosscbam.models.network_config import NetworkConfig
from crosscbam.models.reports import FlopReport, LatencyStats, ProfileReport
from crosscbam.nn import tracing
from crosscbam.nn.layers import Module
from crosscbam.nn.network import build_network
from crosscbam.nn.params import Mode
from crosscbam.nn.tensor import Tensor, no_grad

CONVENTIONS = ("macs", "flops2x")
DEFAULT_INPUT = (1, 3, 512, 1024)

# Reference (params M, FLOPs G) of the M-variant at 512x1024.
DILATION_REFERENCE: Dict[Tuple[int, ...], Tuple[float, float]] = {
    (1, 3): (12.21, 11.31),
    (2, 4): (14.31, 12.39),
    (3, 5): (14.31, 12.39),
    (1, 3, 5): (14.57, 12.52),
    (2, 4, 6): (16.67, 13.60),
}
CHANNEL_REFERENCE: Dict[int, Tuple[float, float]] = {
    128: (8.92, 9.67),
    256: (12.21, 11.31),
    512: (19.54, 14.77),
}


def count_params(model: Module) -> int:
    """Learnable scalars only; BN running statistics are buffers and not counted."""
    return model.num_parameters()


def param_breakdown(model: Module) -> Dict[str, int]:
    return {name: child.num_parameters() for name, child in model.children()}


def _placeholder_image(input_shape: Sequence[int], dtype: np.dtype) -> Tensor:
    if len(input_shape) != 4:
        raise ConfigurationError(f"input_shape must be (n, c, h, w), got {tuple(input_shape)}")
    return Tensor(np.broadcast_to(np.zeros((), dtype=dtype), tuple(int(v) for v in input_shape)))


def trace_ops(model: Module, input_shape: Sequence[int] = DEFAULT_INPUT) -> tracing.OpCounter:
    """Shape-only infer-mode forward; restores the model's previous mode."""
    previous = model.mode
    dtype = model.parameters()[0].data.dtype if model.parameters() else np.float32
    model.set_mode(Mode.INFER)
    try:
        with no_grad(), tracing.count_ops(shape_only=True) as counter:
            model(_placeholder_image(input_shape, dtype))
    finally:
        model.set_mode(previous)
    return counter


def flop_report(
    model: Module,
    input_shape: Sequence[int] = DEFAULT_INPUT,
    reference_g: Optional[float] = None,
) -> FlopReport:
    counter = trace_ops(model, input_shape)
    breakdown = {
        key: value["macs"] + value["elementwise"] for key, value in counter.by_component(depth=1).items()
    }
    return FlopReport(
        input_shape=tuple(input_shape),
        conv_macs=counter.total_macs(),
        elementwise=counter.total_elementwise(),
        breakdown=breakdown,
        reference_g=reference_g,
    )


def count_flops(model: Module, input_shape: Sequence[int] = DEFAULT_INPUT, convention: str = "macs") -> int:
    if convention not in CONVENTIONS:
        raise ConfigurationError(f"convention must be one of {CONVENTIONS}, got '{convention}'")
    return flop_report(model, input_shape).value(convention)


BLAS_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def environment_descriptor() -> Dict[str, str]:
    descriptor = {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
        "processor": platform.processor() or platform.machine(),
        "cpu_count": str(os.cpu_count()),
    }
    # read by BLAS when numpy loads; must be exported before launch
    for var in BLAS_THREAD_VARS:
        descriptor[var] = os.environ.get(var, "unset")
    return descriptor


def bench_latency(
    model: Module,
    input_shape: Sequence[int] = DEFAULT_INPUT,
    warmup: int = 2,
    reps: int = 10,
    seed: int = 0,
    logger: Optional[logging.Logger] = None,
) -> ProfileReport:
    """Wall-clock time of infer-mode forwards, warmup runs discarded; BLAS thread settings go into the report."""
    logger = logger or logging.getLogger(__name__)
    if warmup < 1 or reps < 10:
        raise ConfigurationError(f"latency benchmark needs warmup >= 1 and reps >= 10, got {warmup}/{reps}")
    loose = [var for var in BLAS_THREAD_VARS if os.environ.get(var) != "1"]
    if loose:
        logger.warning(f"BLAS may run multi-threaded; export {', '.join(v + '=1' for v in loose)} for single-threaded timings")
    dtype = model.parameters()[0].data.dtype if model.parameters() else np.float32
    image = Tensor(np.random.default_rng(seed).random(tuple(input_shape)).astype(dtype))
    model.set_mode(Mode.INFER)
    samples: List[float] = []
    with no_grad():
        for _ in range(warmup):
            model(image)
        for _ in range(reps):
            start = time.perf_counter()
            model(image)
            samples.append(time.perf_counter() - start)
    values = np.asarray(samples)
    stats = LatencyStats(
        samples=samples,
        mean=float(values.mean()),
        median=float(np.median(values)),
        p95=float(np.percentile(values, 95)),
    )
    logger.info(f"Latency over {reps} reps at {tuple(input_shape)}: mean {stats.mean * 1e3:.2f} ms, fps {stats.fps:.2f}")
    return ProfileReport(
        name=type(model).__name__,
        params=count_params(model),
        latency=stats,
        environment=environment_descriptor(),
    )


def reference_for(cfg: NetworkConfig) -> Tuple[Optional[float], Optional[float]]:
    """Reference figures for configurations that differ from the default only in dilations or width."""
    default = NetworkConfig()
    if cfg.variant is not default.variant or cfg.base_ch != default.base_ch or cfg.num_classes != 19:
        return None, None
    if cfg.decoder_ch == 256 and cfg.dilations in DILATION_REFERENCE:
        return DILATION_REFERENCE[cfg.dilations]
    if cfg.dilations == (1, 3) and cfg.decoder_ch in CHANNEL_REFERENCE:
        return CHANNEL_REFERENCE[cfg.decoder_ch]
    return None, None


def profile_config(
    cfg: NetworkConfig,
    input_shape: Sequence[int] = DEFAULT_INPUT,
    name: Optional[str] = None,
    seed: int = 0,
) -> ProfileReport:
    model = build_network(cfg, seed=seed)
    ref_params, ref_flops = reference_for(cfg)
    label = name or f"{cfg.variant.name} c={cfg.decoder_ch} d={','.join(map(str, cfg.dilations))}"
    return ProfileReport(
        name=label,
        params=count_params(model),
        param_breakdown=param_breakdown(model),
        flops=flop_report(model, input_shape, reference_g=ref_flops),
        environment=environment_descriptor(),
        reference_params_m=ref_params,
    )


def sweep_configs(base: Optional[NetworkConfig] = None) -> List[NetworkConfig]:
    """The dilation grid at the base width followed by the width grid at dilations (1, 3)."""
    base = base or NetworkConfig()
    configs = [base.replace(dilations=list(d)) for d in DILATION_REFERENCE]
    configs += [base.replace(decoder_ch=c, dilations=[1, 3]) for c in CHANNEL_REFERENCE if c != base.decoder_ch]
    return configs


def reports_frame(reports: Iterable[ProfileReport]) -> pd.DataFrame:
    return pd.DataFrame([report.to_row() for report in reports])


def format_table(reports: Iterable[ProfileReport]) -> str:
    frame = reports_frame(reports)
    return frame.to_string(index=False, float_format=lambda v: f"{v:.3f}")


def write_csv(reports: Iterable[ProfileReport], path: "str | Path") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    reports_frame(reports).to_csv(path, index=False)
    return path


__all__ = [
    "CHANNEL_REFERENCE",
    "CONVENTIONS",
    "BLAS_THREAD_VARS",
    "DEFAULT_INPUT",
    "DILATION_REFERENCE",
    "bench_latency",
    "count_flops",
    "count_params",
    "environment_descriptor",
    "flop_report",
    "format_table",
    "param_breakdown",
    "profile_config",
    "reference_for",
    "reports_frame",
    "sweep_configs",
    "trace_ops",
    "write_csv",
]

"""Configuration management: environment-driven service settings and run-config files."""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values

from crosscbam.errors import ConfigurationError, UsageError
from crosscbam.models.network_config import NetworkConfig
from crosscbam.models.training import AugmentConfig, LossConfig, OptimConfig


@dataclass
class AppSettings:
    """Structured application settings."""

    env: str
    log_level: str
    data_dir: str
    output_dir: str
    checkpoint_dir: str
    default_variant: str
    dtype: str
    gradcheck_seeds: int
    bench_warmup: int
    bench_reps: int


@lru_cache(maxsize=1)
def load_settings() -> AppSettings:
    env = os.getenv("APP_ENV") or os.getenv("FLASK_ENV") or "development"
    output_dir = os.getenv("CROSSCBAM_OUTPUT_DIR", "runs")
    return AppSettings(
        env=env,
        log_level=os.getenv("LOG_LEVEL", "INFO"),
        data_dir=os.getenv("CROSSCBAM_DATA_DIR", "data"),
        output_dir=output_dir,
        checkpoint_dir=os.getenv("CROSSCBAM_CHECKPOINT_DIR", os.path.join(output_dir, "checkpoints")),
        default_variant=os.getenv("CROSSCBAM_DEFAULT_VARIANT", "m"),
        dtype=os.getenv("CROSSCBAM_DTYPE", "float32"),
        gradcheck_seeds=int(os.getenv("CROSSCBAM_GRADCHECK_SEEDS", "20")),
        bench_warmup=int(os.getenv("CROSSCBAM_BENCH_WARMUP", "2")),
        bench_reps=int(os.getenv("CROSSCBAM_BENCH_REPS", "10")),
    )


class BaseConfig:
    SECRET_KEY = os.getenv("SECRET_KEY", "crosscbam-dev-secret")
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    DEBUG = False
    TESTING = False
    SETTINGS = load_settings()


class DevelopmentConfig(BaseConfig):
    DEBUG = True


class ProductionConfig(BaseConfig):
    pass


class TestingConfig(BaseConfig):
    TESTING = True
    DEBUG = True


def get_config(name: str | None = None) -> type[BaseConfig]:
    """Return the configuration class for the provided environment name."""

    config_name = (name or os.getenv("APP_ENV") or os.getenv("FLASK_ENV") or "development").lower()
    mapping: Dict[str, type[BaseConfig]] = {
        "development": DevelopmentConfig,
        "production": ProductionConfig,
        "testing": TestingConfig,
    }
    return mapping.get(config_name, DevelopmentConfig)


# ---------------------------------------------------------------------------
# Run configuration files
# ---------------------------------------------------------------------------

def _str_to_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in {"1", "true", "yes", "on"}:
        return True
    if lowered in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _int_list(value: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in value.replace(" ", "").split(",") if v)


def _float_pair(value: str) -> Tuple[float, float]:
    parts = [float(v) for v in value.replace(" ", "").split(",") if v]
    if len(parts) != 2:
        raise ValueError(f"expected two comma-separated numbers, got {value!r}")
    return parts[0], parts[1]


def _size(value: str) -> Tuple[int, int]:
    fields = value.lower().replace(" ", "").replace(",", "x").split("x")
    if not all(fields):
        raise ValueError(f"expected HxW, got {value!r}")
    parts = [int(v) for v in fields]
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise ValueError(f"expected HxW, got {value!r}")
    return parts[0], parts[1]


def parse_size(value: str, what: str = "size") -> Tuple[int, int]:
    """``HxW`` text from a flag or query string; malformed or non-positive sizes are usage errors."""
    try:
        height, width = _size(value)
    except ValueError:
        raise UsageError(f"{what} must look like HxW, got '{value}'") from None
    if height <= 0 or width <= 0:
        raise UsageError(f"{what} must be positive, got {height}x{width}")
    return height, width


KEY_PARSERS: Dict[str, Callable[[str], Any]] = {
    "preset": str,
    "variant": str,
    "channels": int,
    "dilations": _int_list,
    "num_classes": int,
    "base_ch": int,
    "proj_kernel": int,
    "aux_head": _str_to_bool,
    "use_se_aspp": _str_to_bool,
    "use_ccbam": _str_to_bool,
    "se_input": str,
    "ca_shared_mlp": _str_to_bool,
    "alpha": float,
    "gamma": float,
    "aux_weight": float,
    "ignore_index": int,
    "lr": float,
    "min_lr": float,
    "power": float,
    "momentum": float,
    "weight_decay": float,
    "max_iter": int,
    "batch_size": int,
    "crop": _size,
    "scale_range": _float_pair,
    "flip_prob": float,
    "seed": int,
    "val_interval": int,
    "checkpoint_interval": int,
    "log_interval": int,
    "n_train": int,
    "n_val": int,
    "canvas": _size,
    "noise": float,
    "dataset": str,
    "data_root": str,
    "output_dir": str,
    "workers": int,
    "val_split": str,
    "eval_train": _str_to_bool,
}

VAL_SPLITS = ("scenes", "noise")

PRESETS: Dict[str, Dict[str, str]] = {
    "cityscapes": {
        "dataset": "cityscapes",
        "num_classes": "19",
        "crop": "512x1024",
        "scale_range": "0.125,0.5",
        "batch_size": "16",
        "max_iter": "160000",
    },
    "camvid": {
        "dataset": "camvid",
        "num_classes": "11",
        "crop": "720x960",
        "scale_range": "0.5,2.5",
        "batch_size": "24",
        "max_iter": "10000",
    },
    "toy": {
        "dataset": "synthetic",
        "num_classes": "3",
        "channels": "64",
        "base_ch": "16",
        "canvas": "64x64",
        "crop": "64x64",
        "scale_range": "0.75,1.25",
        "batch_size": "4",
        "max_iter": "600",
        "lr": "0.05",
        "n_train": "32",
        "n_val": "8",
        "val_interval": "100",
        "checkpoint_interval": "300",
    },
}


@dataclass
class RunConfig:
    """Everything a training run needs, resolved from preset, file and overrides."""

    network: NetworkConfig = field(default_factory=NetworkConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    batch_size: int = 16
    seed: int = 0
    val_interval: int = 1000
    checkpoint_interval: int = 10000
    log_interval: int = 10
    dataset: str = "synthetic"
    data_root: str = "data"
    n_train: int = 64
    n_val: int = 16
    canvas: Tuple[int, int] = (64, 64)
    noise: float = 0.0
    output_dir: str = "runs"
    workers: int = 0
    val_split: str = "scenes"
    eval_train: bool = False
    source: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "network": self.network.to_dict(),
            "loss": self.loss.to_dict(),
            "optim": self.optim.to_dict(),
            "augment": self.augment.to_dict(),
            "batch_size": self.batch_size,
            "seed": self.seed,
            "val_interval": self.val_interval,
            "checkpoint_interval": self.checkpoint_interval,
            "log_interval": self.log_interval,
            "dataset": self.dataset,
            "data_root": self.data_root,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "canvas": list(self.canvas),
            "noise": self.noise,
            "output_dir": self.output_dir,
            "workers": self.workers,
            "val_split": self.val_split,
            "eval_train": self.eval_train,
        }


def _parse_values(raw: Mapping[str, Optional[str]], origin: str) -> Dict[str, Any]:
    parsed: Dict[str, Any] = {}
    for key, value in raw.items():
        key = key.strip().lower()
        if key not in KEY_PARSERS:
            raise ConfigurationError(f"{origin}: unknown config key '{key}'")
        if value is None or str(value).strip() == "":
            raise ConfigurationError(f"{origin}: key '{key}' has no value")
        try:
            parsed[key] = KEY_PARSERS[key](str(value).strip())
        except ValueError as exc:
            raise ConfigurationError(f"{origin}: invalid value for '{key}': {exc}") from None
    return parsed


def build_run_config(values: Mapping[str, Any], source: Optional[Dict[str, str]] = None) -> RunConfig:
    """Turn parsed key/values into validated config records."""
    v = dict(values)
    num_classes = v.get("num_classes", 19)
    ignore_index = v.get("ignore_index", 255)
    network = NetworkConfig(
        variant=v.get("variant", load_settings().default_variant),
        decoder_ch=v.get("channels", 256),
        dilations=v.get("dilations", (1, 3)),
        num_classes=num_classes,
        aux_head=v.get("aux_head", True),
        base_ch=v.get("base_ch", 64),
        proj_kernel=v.get("proj_kernel", 3),
        use_se_aspp=v.get("use_se_aspp", True),
        use_ccbam=v.get("use_ccbam", True),
        se_input=v.get("se_input", "input"),
        ca_shared_mlp=v.get("ca_shared_mlp", True),
    )
    loss = LossConfig(
        alpha=v.get("alpha", 0.7),
        gamma=v.get("gamma", 2.0),
        ignore_index=ignore_index,
        aux_weight=v.get("aux_weight", 0.4),
    )
    optim = OptimConfig(
        base_lr=v.get("lr", 0.01),
        min_lr=v.get("min_lr", 1e-4),
        power=v.get("power", 0.9),
        momentum=v.get("momentum", 0.9),
        weight_decay=v.get("weight_decay", 5e-4),
        max_iter=v.get("max_iter", 160000),
    )
    synthetic = v.get("dataset", "synthetic") == "synthetic"
    canvas = v.get("canvas", (64, 64))
    augment = AugmentConfig(
        crop=v.get("crop", canvas if synthetic else (512, 1024)),
        scale_range=v.get("scale_range", (1.0, 1.0) if synthetic else (0.125, 0.5)),
        flip_prob=v.get("flip_prob", 0.5),
        ignore_index=ignore_index,
    )
    for key in ("batch_size", "val_interval", "checkpoint_interval", "log_interval"):
        if key in v and v[key] < 1:
            raise ConfigurationError(f"{key} must be positive, got {v[key]}")
    val_split = v.get("val_split", "scenes")
    if val_split not in VAL_SPLITS:
        raise ConfigurationError(f"val_split must be one of {VAL_SPLITS}, got '{val_split}'")
    if val_split == "noise":
        if not synthetic:
            raise ConfigurationError("val_split=noise needs the synthetic dataset")
        if v.get("n_val", 16) > v.get("n_train", 64):
            raise ConfigurationError("val_split=noise re-noises training scenes, so n_val must not exceed n_train")
    return RunConfig(
        network=network,
        loss=loss,
        optim=optim,
        augment=augment,
        batch_size=v.get("batch_size", 16),
        seed=v.get("seed", 0),
        val_interval=v.get("val_interval", 1000),
        checkpoint_interval=v.get("checkpoint_interval", 10000),
        log_interval=v.get("log_interval", 10),
        dataset=v.get("dataset", "synthetic"),
        data_root=v.get("data_root", load_settings().data_dir),
        n_train=v.get("n_train", 64),
        n_val=v.get("n_val", 16),
        canvas=canvas,
        noise=v.get("noise", 0.0),
        output_dir=v.get("output_dir", load_settings().output_dir),
        workers=v.get("workers", 0),
        val_split=val_split,
        eval_train=v.get("eval_train", False),
        source=dict(source or {}),
    )


def _override_text(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    return str(value)


def load_run_config(
    path: "str | Path | None" = None,
    *,
    text: Optional[str] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Resolve preset, then file (or ``text``), then ``overrides``; later layers win."""
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"run config {path} does not exist")
        file_values = dotenv_values(path)
        origin = str(path)
    elif text is not None:
        file_values = dotenv_values(stream=io.StringIO(text))
        origin = "<text>"
    else:
        file_values, origin = {}, "<defaults>"

    override_values = {k: _override_text(val) for k, val in (overrides or {}).items() if val is not None}
    layered = {**file_values, **override_values}
    preset_name = layered.get("preset")
    raw: Dict[str, Optional[str]] = {}
    if preset_name:
        if preset_name not in PRESETS:
            raise ConfigurationError(f"unknown preset '{preset_name}', expected one of {sorted(PRESETS)}")
        raw.update(PRESETS[preset_name])
    raw.update(layered)
    return build_run_config(_parse_values(raw, origin), source={k: str(v) for k, v in raw.items()})


__all__ = [
    "AppSettings",
    "BaseConfig",
    "DevelopmentConfig",
    "KEY_PARSERS",
    "PRESETS",
    "ProductionConfig",
    "RunConfig",
    "TestingConfig",
    "VAL_SPLITS",
    "build_run_config",
    "get_config",
    "load_run_config",
    "load_settings",
    "parse_size",
]

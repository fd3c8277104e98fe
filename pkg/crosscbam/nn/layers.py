"""Module tree and the basic layers (Conv, BN, ConvX) the network is built from."""
from __future__ import annotations

from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from crosscbam.errors import ConfigurationError
from crosscbam.nn import functional as F
from crosscbam.nn import tracing
from crosscbam.nn.params import BatchNormParams, ConvParams, Mode
from crosscbam.nn.tensor import Precision, Tensor


class Module:
    """Named tree of parameters, buffers and child modules.

    Child modules assigned as attributes are registered in assignment order, which
    fixes both the initialization order and the checkpoint tensor order.
    """

    def __init__(self) -> None:
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "_parameters", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "scope_name", "")
        object.__setattr__(self, "mode", Mode.TRAIN)

    def __setattr__(self, key: str, value: object) -> None:
        if isinstance(value, Module):
            self._children[key] = value
            object.__setattr__(value, "scope_name", key)
        object.__setattr__(self, key, value)

    def register_parameter(self, name: str, tensor: Tensor) -> Tensor:
        tensor.requires_grad = True
        tensor.name = name
        self._parameters[name] = tensor
        return tensor

    def register_buffer(self, name: str, array: np.ndarray) -> np.ndarray:
        self._buffers[name] = array
        return array

    def children(self) -> Iterator[Tuple[str, "Module"]]:
        yield from self._children.items()

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self._children.items():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, module in self.named_modules(prefix):
            for pname, tensor in module._parameters.items():
                yield (f"{name}.{pname}" if name else pname), tensor

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, module in self.named_modules(prefix):
            for bname, array in module._buffers.items():
                yield (f"{name}.{bname}" if name else bname), array

    def parameters(self) -> List[Tensor]:
        return [t for _, t in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(t.size for t in self.parameters())

    def zero_grad(self) -> None:
        for tensor in self.parameters():
            tensor.zero_grad()

    def set_mode(self, mode: "Mode | str") -> "Module":
        mode = Mode.parse(mode)
        for _, module in self.named_modules():
            object.__setattr__(module, "mode", mode)
            module._on_mode_change(mode)
        return self

    def train(self) -> "Module":
        return self.set_mode(Mode.TRAIN)

    def eval(self) -> "Module":
        return self.set_mode(Mode.INFER)

    def _on_mode_change(self, mode: Mode) -> None:
        pass

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        with tracing.scope(self.scope_name):
            return self.forward(*args, **kwargs)


class ModuleList(Module):
    """Ordered container whose children are named ``0, 1, ...``."""

    def __init__(self, modules: Optional[List[Module]] = None) -> None:
        super().__init__()
        object.__setattr__(self, "_items", [])
        for module in modules or []:
            self.append(module)

    def append(self, module: Module) -> None:
        name = str(len(self._items))
        self._children[name] = module
        object.__setattr__(module, "scope_name", name)
        self._items.append(module)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]


def kaiming_normal(
    rng: np.random.Generator, shape: Tuple[int, int, int, int], dtype: np.dtype
) -> np.ndarray:
    """Fan-in scaled normal initialization for ReLU networks."""
    fan_in = shape[1] * shape[2] * shape[3]
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Module):
    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int,
        *,
        rng: np.random.Generator,
        stride: int = 1,
        padding: Optional[int] = None,
        dilation: int = 1,
        bias: bool = True,
        dtype: "Precision | str" = Precision.SINGLE,
    ) -> None:
        super().__init__()
        if in_ch < 1 or out_ch < 1 or kernel < 1:
            raise ConfigurationError(f"invalid conv layer {in_ch}->{out_ch} k={kernel}")
        np_dtype = Precision.parse(dtype).dtype
        if padding is None:
            padding = dilation * (kernel - 1) // 2
        weight = self.register_parameter(
            "weight", Tensor(kaiming_normal(rng, (out_ch, in_ch, kernel, kernel), np_dtype))
        )
        bias_tensor = self.register_parameter("bias", Tensor(np.zeros(out_ch, dtype=np_dtype))) if bias else None
        self.params = ConvParams(weight, bias_tensor, stride=stride, padding=padding, dilation=dilation)

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.params)


class BatchNorm2d(Module):
    def __init__(
        self,
        channels: int,
        *,
        dtype: "Precision | str" = Precision.SINGLE,
        epsilon: float = 1e-5,
        momentum: float = 0.1,
    ) -> None:
        super().__init__()
        np_dtype = Precision.parse(dtype).dtype
        gamma = self.register_parameter("gamma", Tensor(np.ones(channels, dtype=np_dtype)))
        beta = self.register_parameter("beta", Tensor(np.zeros(channels, dtype=np_dtype)))
        running_mean = self.register_buffer("running_mean", np.zeros(channels, dtype=np_dtype))
        running_var = self.register_buffer("running_var", np.ones(channels, dtype=np_dtype))
        self.params = BatchNormParams(
            gamma, beta, running_mean, running_var, epsilon=epsilon, momentum=momentum, mode=Mode.TRAIN
        )

    def _on_mode_change(self, mode: Mode) -> None:
        self.params.mode = mode

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(x, self.params)


class ConvX(Module):
    """Conv-BN-ReLU; the conv carries no bias because BN supplies the shift."""

    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int = 3,
        *,
        rng: np.random.Generator,
        stride: int = 1,
        dilation: int = 1,
        dtype: "Precision | str" = Precision.SINGLE,
    ) -> None:
        super().__init__()
        self.conv = Conv2d(in_ch, out_ch, kernel, rng=rng, stride=stride, dilation=dilation, bias=False, dtype=dtype)
        self.bn = BatchNorm2d(out_ch, dtype=dtype)
        self.in_ch = in_ch
        self.out_ch = out_ch

    def forward(self, x: Tensor) -> Tensor:
        return F.relu(self.bn(self.conv(x)))


def convx_param_count(in_ch: int, out_ch: int, kernel: int) -> int:
    """Closed-form size of one ConvX: conv weights plus BN gamma/beta."""
    return in_ch * out_ch * kernel * kernel + 2 * out_ch


def conv_param_count(in_ch: int, out_ch: int, kernel: int, bias: bool = True) -> int:
    return in_ch * out_ch * kernel * kernel + (out_ch if bias else 0)


def state_dict(module: Module) -> Dict[str, np.ndarray]:
    """Parameters then buffers, in registration order."""
    state: Dict[str, np.ndarray] = {name: t.data for name, t in module.named_parameters()}
    state.update(dict(module.named_buffers()))
    return state


__all__ = [
    "BatchNorm2d",
    "Conv2d",
    "ConvX",
    "Module",
    "ModuleList",
    "conv_param_count",
    "convx_param_count",
    "kaiming_normal",
    "state_dict",
]

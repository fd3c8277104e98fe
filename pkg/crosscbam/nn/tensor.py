"""Dense NCHW tensor with a reverse-mode tape."""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from crosscbam.errors import UsageError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_grad_state = threading.local()


class Precision(Enum):
    """Floating point precision of a tensor."""
    SINGLE = "float32"
    DOUBLE = "float64"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.value)

    @classmethod
    def parse(cls, value: "Precision | str | np.dtype | type | None") -> "Precision":
        if value is None:
            return cls.SINGLE
        if isinstance(value, cls):
            return value
        if isinstance(value, str) and value.lower() in {"single", "double"}:
            return cls.SINGLE if value.lower() == "single" else cls.DOUBLE
        return cls(np.dtype(value).name)


def grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable tape recording on the current thread."""
    previous = grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


@dataclass
class TapeNode:
    """One recorded op: its inputs and the closure that maps output grad to input grads."""
    op: str
    inputs: Tuple["Tensor", ...]
    backward_fn: BackwardFn
    saved: Dict[str, Any] = field(default_factory=dict)


class Tensor:
    """A dense array plus optional gradient buffer.

    Feature maps are 4-D in batch x channel x height x width order; parameters may
    use other ranks (a conv bias is 1-D).
    """

    def __init__(
        self,
        data: Any,
        *,
        requires_grad: bool = False,
        dtype: "Precision | str | np.dtype | None" = None,
        name: Optional[str] = None,
    ) -> None:
        if dtype is None and isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            array = data
        else:
            array = np.asarray(data, dtype=Precision.parse(dtype).dtype)
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.node: Optional[TapeNode] = None
        self.retains_grad = False

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def precision(self) -> Precision:
        return Precision(self.data.dtype.name)

    @property
    def is_leaf(self) -> bool:
        return self.node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, name=self.name)

    def retain_grad(self) -> "Tensor":
        self.retains_grad = True
        return self

    def zero_grad(self) -> None:
        self.grad = None

    def astype(self, precision: "Precision | str") -> "Tensor":
        dtype = Precision.parse(precision).dtype
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad, name=self.name)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        op = f", op={self.node.op}" if self.node else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}{flag}{op})"


def make_result(
    data: np.ndarray,
    op: str,
    inputs: Sequence[Tensor],
    backward_fn: BackwardFn,
    saved: Optional[Dict[str, Any]] = None,
) -> Tensor:
    """Wrap an op output and record it on the tape when any input needs gradients."""
    out = Tensor(data)
    if grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.node = TapeNode(op=op, inputs=tuple(inputs), backward_fn=backward_fn, saved=saved or {})
    return out


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited: set[int] = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        tensor, expanded = stack.pop()
        if expanded:
            order.append(tensor)
            continue
        if id(tensor) in visited:
            continue
        visited.add(id(tensor))
        stack.append((tensor, True))
        if tensor.node is not None:
            for parent in reversed(tensor.node.inputs):
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def backward(output: Tensor) -> None:
    """Populate ``.grad`` of every leaf reachable from a scalar output.

    Leaves used more than once accumulate by summation; an existing ``.grad`` is
    added to, so callers zero gradients between steps.
    """
    if output.size != 1:
        raise UsageError(f"backward() needs a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        raise UsageError("backward() called on a tensor that is not on the tape")

    grads: Dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    for tensor in reversed(_topological_order(output)):
        grad = grads.pop(id(tensor), None)
        if grad is None:
            continue
        if tensor.node is None or tensor.retains_grad:
            tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
        if tensor.node is None:
            continue
        input_grads = tensor.node.backward_fn(grad)
        for parent, parent_grad in zip(tensor.node.inputs, input_grads):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + parent_grad
            else:
                grads[key] = parent_grad


__all__ = [
    "Precision",
    "TapeNode",
    "Tensor",
    "backward",
    "grad_enabled",
    "make_result",
    "no_grad",
]

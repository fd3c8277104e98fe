"""Central finite-difference gradient oracle.

The oracle never touches the tape: it perturbs ``x.data`` in place, evaluates the
scalar function under ``no_grad`` and restores the original value.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from crosscbam.errors import UsageError
from crosscbam.nn.tensor import Tensor, no_grad

ScalarFn = Callable[[], Tensor]

DEFAULT_EPS = 1e-5
DEFAULT_RTOL = 1e-4
DEFAULT_ATOL = 1e-8


def _evaluate(f: ScalarFn) -> float:
    with no_grad():
        out = f()
    if out.size != 1:
        raise UsageError(f"finite differences need a scalar function, got shape {out.shape}")
    return float(out.data.reshape(-1)[0])


def finite_diff_at(f: ScalarFn, x: Tensor, flat_indices: Sequence[int], eps: float = DEFAULT_EPS) -> np.ndarray:
    """Central differences of ``f`` w.r.t. the selected flat coordinates of ``x``."""
    flat = x.data.reshape(-1)
    if not np.shares_memory(flat, x.data):
        raise UsageError("finite differences need a contiguous tensor")
    values = np.empty(len(flat_indices), dtype=np.float64)
    for k, idx in enumerate(flat_indices):
        original = flat[idx]
        flat[idx] = original + eps
        upper = _evaluate(f)
        flat[idx] = original - eps
        lower = _evaluate(f)
        flat[idx] = original
        values[k] = (upper - lower) / (2.0 * eps)
    return values


def finite_diff_grad(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = DEFAULT_EPS) -> Tensor:
    """Full central-difference gradient of the scalar function ``f(x)``."""
    grad = finite_diff_at(lambda: f(x), x, range(x.size), eps)
    return Tensor(grad.reshape(x.shape), dtype=np.float64)


@dataclass
class GradcheckResult:
    """Comparison of tape gradients against the finite-difference oracle."""
    name: str
    checked: int = 0
    max_rel_error: float = 0.0
    worst: Optional[str] = None
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "checked": self.checked,
            "max_rel_error": self.max_rel_error,
            "worst": self.worst,
            "passed": self.passed,
            "failures": self.failures[:10],
        }


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), np.finfo(np.float64).tiny)
    return np.abs(analytic - numeric) / scale


def check_gradients(
    f: ScalarFn,
    inputs: Dict[str, Tensor],
    *,
    name: str = "gradcheck",
    eps: float = DEFAULT_EPS,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    max_per_input: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradcheckResult:
    """Run ``f`` on the tape, backpropagate, and compare each input's gradient.

    With ``max_per_input`` only a random subset of coordinates per input is
    checked, drawn from ``rng``.
    """
    for tensor in inputs.values():
        tensor.requires_grad = True
        tensor.zero_grad()
    out = f()
    out.backward()

    result = GradcheckResult(name=name)
    rng = rng or np.random.default_rng(0)
    for input_name, tensor in inputs.items():
        analytic_full = np.zeros(tensor.shape) if tensor.grad is None else tensor.grad.astype(np.float64)
        if max_per_input is not None and tensor.size > max_per_input:
            indices = np.sort(rng.choice(tensor.size, size=max_per_input, replace=False))
        else:
            indices = np.arange(tensor.size)
        numeric = finite_diff_at(f, tensor, indices, eps)
        analytic = analytic_full.reshape(-1)[indices]
        errors = relative_error(analytic, numeric)
        result.checked += len(indices)
        bad = np.abs(analytic - numeric) > rtol * np.maximum(np.abs(analytic), np.abs(numeric)) + atol
        if len(errors):
            worst = int(np.argmax(errors))
            if errors[worst] > result.max_rel_error:
                result.max_rel_error = float(errors[worst])
                result.worst = f"{input_name}[{int(indices[worst])}]"
        for k in np.flatnonzero(bad):
            result.failures.append(
                f"{input_name}[{int(indices[k])}]: analytic={analytic[k]:.6e} numeric={numeric[k]:.6e}"
            )
    return result


__all__ = [
    "DEFAULT_ATOL",
    "DEFAULT_EPS",
    "DEFAULT_RTOL",
    "GradcheckResult",
    "check_gradients",
    "finite_diff_at",
    "finite_diff_grad",
    "relative_error",
]

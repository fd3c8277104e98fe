"""Operation counting hooks used by the profiler.

Functional ops report their cost to the active :class:`OpCounter`. In shape-only
mode the ops skip arithmetic entirely and return zero-strided placeholders, which
makes FLOP counting at full resolution cheap.
"""
from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

_state = threading.local()


@dataclass
class OpRecord:
    """Cost of one executed op."""

    scope: Tuple[str, ...]
    op: str
    macs: int = 0
    elementwise: int = 0


@dataclass
class OpCounter:
    """Collects :class:`OpRecord` entries for one traced forward pass."""

    shape_only: bool = False
    records: List[OpRecord] = field(default_factory=list)
    _scope: List[str] = field(default_factory=list)

    def record(self, op: str, *, macs: int = 0, elementwise: int = 0) -> None:
        self.records.append(OpRecord(tuple(self._scope), op, int(macs), int(elementwise)))

    def total_macs(self) -> int:
        return sum(r.macs for r in self.records)

    def total_elementwise(self) -> int:
        return sum(r.elementwise for r in self.records)

    def by_component(self, depth: int = 1) -> Dict[str, Dict[str, int]]:
        breakdown: Dict[str, Dict[str, int]] = {}
        for rec in self.records:
            key = ".".join(rec.scope[:depth]) or "<root>"
            entry = breakdown.setdefault(key, {"macs": 0, "elementwise": 0})
            entry["macs"] += rec.macs
            entry["elementwise"] += rec.elementwise
        return breakdown


def active_counter() -> Optional[OpCounter]:
    return getattr(_state, "counter", None)


def shape_only() -> bool:
    counter = active_counter()
    return counter is not None and counter.shape_only


@contextmanager
def count_ops(*, shape_only: bool = False) -> Iterator[OpCounter]:
    """Install a counter for the current thread for the duration of the block."""
    previous = active_counter()
    counter = OpCounter(shape_only=shape_only)
    _state.counter = counter
    try:
        yield counter
    finally:
        _state.counter = previous


@contextmanager
def scope(name: str) -> Iterator[None]:
    counter = active_counter()
    if counter is None or not name:
        yield
        return
    counter._scope.append(name)
    try:
        yield
    finally:
        counter._scope.pop()


def record(op: str, *, macs: int = 0, elementwise: int = 0) -> None:
    counter = active_counter()
    if counter is not None:
        counter.record(op, macs=macs, elementwise=elementwise)


__all__ = [
    "OpCounter",
    "OpRecord",
    "active_counter",
    "count_ops",
    "record",
    "scope",
    "shape_only",
]

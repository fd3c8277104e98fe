"""Profiling and verification report records."""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, List, Optional


@dataclass
class LatencyStats:
    samples: List[float] = field(default_factory=list)
    mean: float = 0.0
    median: float = 0.0
    p95: float = 0.0

    @property
    def fps(self) -> float:
        return 1.0 / self.mean if self.mean > 0 else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "reps": len(self.samples),
            "mean_s": self.mean,
            "median_s": self.median,
            "p95_s": self.p95,
            "fps": self.fps,
        }


@dataclass
class FlopReport:
    """Counts from one traced forward.

    ``macs`` totals conv multiply-accumulates plus one unit per element for every
    BN, activation, pooling, resize and elementwise pass; ``flops2x`` doubles it.
    """
    input_shape: tuple = ()
    conv_macs: int = 0
    elementwise: int = 0
    breakdown: Dict[str, int] = field(default_factory=dict)
    reference_g: Optional[float] = None

    @property
    def macs(self) -> int:
        return self.conv_macs + self.elementwise

    @property
    def flops2x(self) -> int:
        return 2 * self.macs

    def value(self, convention: str) -> int:
        return self.flops2x if convention == "flops2x" else self.macs

    @property
    def matching_convention(self) -> Optional[str]:
        """Convention whose total lies nearest the reference figure, if one is known."""
        if self.reference_g is None:
            return None
        target = self.reference_g * 1e9
        return min(("macs", "flops2x"), key=lambda c: abs(self.value(c) - target))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "input_shape": list(self.input_shape),
            "macs": self.macs,
            "conv_macs": self.conv_macs,
            "flops2x": self.flops2x,
            "elementwise": self.elementwise,
            "breakdown": dict(self.breakdown),
            "reference_g": self.reference_g,
            "matching_convention": self.matching_convention,
        }


@dataclass
class ProfileReport:
    name: str
    params: int = 0
    param_breakdown: Dict[str, int] = field(default_factory=dict)
    flops: Optional[FlopReport] = None
    latency: Optional[LatencyStats] = None
    environment: Dict[str, str] = field(default_factory=dict)
    reference_params_m: Optional[float] = None

    @property
    def fps(self) -> float:
        return self.latency.fps if self.latency else 0.0

    def to_row(self) -> Dict[str, Any]:
        """Flat record for tabular output."""
        row: Dict[str, Any] = {"name": self.name, "params_m": self.params / 1e6}
        if self.reference_params_m is not None:
            row["ref_params_m"] = self.reference_params_m
        if self.flops:
            row["gmacs"] = self.flops.macs / 1e9
            row["gflops2x"] = self.flops.flops2x / 1e9
            if self.flops.reference_g is not None:
                row["ref_g"] = self.flops.reference_g
                row["convention"] = self.flops.matching_convention
        if self.latency:
            row["mean_ms"] = self.latency.mean * 1e3
            row["median_ms"] = self.latency.median * 1e3
            row["p95_ms"] = self.latency.p95 * 1e3
            row["fps"] = self.latency.fps
        return row

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "params": self.params,
            "param_breakdown": self.param_breakdown,
            "flops": self.flops.to_dict() if self.flops else None,
            "latency": self.latency.to_dict() if self.latency else None,
            "environment": self.environment,
            "reference_params_m": self.reference_params_m,
        }


@dataclass
class CheckResult:
    """Outcome of one named verification check."""
    suite: str
    name: str
    passed: bool
    details: str = ""
    metrics: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "suite": self.suite,
            "name": self.name,
            "passed": self.passed,
            "details": self.details,
            "metrics": self.metrics,
        }


@dataclass
class VerificationReport:
    started_at: str = field(default_factory=lambda: datetime.now(tz=timezone.utc).isoformat())
    checks: List[CheckResult] = field(default_factory=list)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> Dict[str, Any]:
        return {
            "started_at": self.started_at,
            "total": len(self.checks),
            "passed": sum(c.passed for c in self.checks),
            "failed": len(self.failures),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {**self.summary(), "checks": [c.to_dict() for c in self.checks]}


__all__ = ["CheckResult", "FlopReport", "LatencyStats", "ProfileReport", "VerificationReport"]

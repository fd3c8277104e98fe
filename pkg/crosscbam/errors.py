"""Exception hierarchy shared by the numerical core, services, CLI and API."""
from __future__ import annotations


class CrossCbamError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(CrossCbamError):
    """Invalid shapes, geometry, widths or configuration values."""


class UsageError(CrossCbamError):
    """A call contract was violated (wrong call order, wrong input layout)."""


class DataError(CrossCbamError):
    """Malformed files, out-of-range labels or truncated payloads."""


class InternalError(CrossCbamError):
    """A broken internal invariant."""


__all__ = [
    "ConfigurationError",
    "CrossCbamError",
    "DataError",
    "InternalError",
    "UsageError",
]

"""Input validation helpers used by the public API surfaces."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def as_float_array(x, name: str, ndim: int | None = None) -> np.ndarray:
    """Coerce to a float64 array and optionally enforce dimensionality."""
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


def check_positive(value, name: str):
    if not value > 0:
        raise ConfigError(f"{name} must be > 0, got {value!r}")
    return value


def check_odd(value: int, name: str) -> int:
    if value < 1 or value % 2 == 0:
        raise ConfigError(f"{name} must be an odd integer >= 1, got {value!r}")
    return value


def check_unit_interval(arr: np.ndarray, name: str) -> np.ndarray:
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")

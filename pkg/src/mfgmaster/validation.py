"""Input checks shared by the solver modules."""

from __future__ import annotations

import numpy as np


class ValidationError(ValueError):
    """Raised for malformed or out-of-contract inputs."""


class ConvergenceError(RuntimeError):
    """An iteration hit its budget before reaching tolerance.

    ``history`` holds the recorded gap after every iteration.
    """

    def __init__(self, message: str, history):
        super().__init__(message)
        self.history = list(history)


def check_grid_function(values, n_x: int, name: str = "field") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != n_x:
        raise ValidationError(f"{name} must have shape ({n_x},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def check_space_time(values, n_t: int, n_x: int, name: str = "field",
                     allow_batch: bool = False) -> np.ndarray:
    """Validate a ``(n_t, n_x)`` array, or ``(n_t, n_x, B)`` with ``allow_batch``."""
    arr = np.asarray(values, dtype=float)
    ok = arr.shape[:2] == (n_t, n_x) and (arr.ndim == 2 or (allow_batch and arr.ndim == 3))
    if not ok:
        raise ValidationError(f"{name} must have shape ({n_t}, {n_x}[, B]), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def check_fraction(value: float, name: str, lower_open: bool = True) -> float:
    v = float(value)
    if not ((0.0 < v) if lower_open else (0.0 <= v)) or v > 1.0:
        raise ValidationError(f"{name} must lie in (0, 1], got {value}")
    return v


def check_positive(value: float, name: str) -> float:
    v = float(value)
    if not v > 0:
        raise ValidationError(f"{name} must be positive, got {value}")
    return v

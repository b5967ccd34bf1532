"""Shared array coercion/validation helpers."""

from __future__ import annotations

import numpy as np


def as_points(data, name: str = "data") -> np.ndarray:
    """Coerce to a float64 (n, p) array; 1-D input is read as n scalar points."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(
            f"{name} must be a nonempty 2-D array of points, got shape {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_vector(x, p: int, name: str = "x") -> np.ndarray:
    """Coerce to a float64 length-p vector, erroring on dimension mismatch."""
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if arr.ndim != 1 or arr.shape[0] != p:
        raise ValueError(
            f"{name} has dimension {arr.shape}, expected a length-{p} vector"
        )
    return arr


def frozen(arr) -> np.ndarray:
    """Contiguous float64 copy with the write flag cleared."""
    out = np.array(arr, dtype=np.float64, order="C", copy=True)
    out.setflags(write=False)
    return out

"""Input validation helpers shared by the estimators and the attack engine.

All public entry points funnel array-likes through these so that shape and
finiteness errors surface with a clear message instead of deep inside a
matmul. Vectors are always float64 and 1-D; the attack math depends on that
dtype for bit-exact revisit detection.
"""

from __future__ import annotations

import math

import numpy as np


def check_vector(x, dim: int | None = None, name: str = "x") -> np.ndarray:
    """Coerce to a finite, C-contiguous float64 1-D array."""
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"{name} has dim {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains NaN or Inf")
    return v


def check_matrix(a, shape: tuple[int, int] | None = None, name: str = "X") -> np.ndarray:
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if shape is not None and m.shape != shape:
        raise ValueError(f"{name} has shape {m.shape}, expected {shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN or Inf")
    return m


def check_X_y(X, y, n_classes: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Validate a (samples, labels) pair for fit/evaluate entry points."""
    Xv = check_matrix(X, name="X")
    yv = np.asarray(y)
    if yv.ndim != 1:
        raise ValueError(f"y must be 1-D, got shape {yv.shape}")
    if Xv.shape[0] != yv.shape[0]:
        raise ValueError(f"X and y disagree on sample count: {Xv.shape[0]} vs {yv.shape[0]}")
    if yv.shape[0] == 0:
        raise ValueError("empty dataset")
    if not np.issubdtype(yv.dtype, np.integer):
        yf = np.asarray(y, dtype=np.float64)
        if not np.all(yf == np.floor(yf)):
            raise ValueError("y must contain integer class labels")
        yv = yf.astype(np.int64)
    else:
        yv = yv.astype(np.int64)
    if np.any(yv < 0):
        raise ValueError("y contains negative labels")
    if n_classes is not None and np.any(yv >= n_classes):
        raise ValueError(f"y contains labels >= n_classes ({n_classes})")
    return Xv, yv


def check_label(y: int, n_classes: int) -> int:
    yi = int(y)
    if yi != y or not 0 <= yi < n_classes:
        raise ValueError(f"label {y!r} out of range [0, {n_classes})")
    return yi


def check_positive(value: float, name: str) -> float:
    v = float(value)
    if not math.isfinite(v) or v <= 0.0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return v

"""Minimal dense-array helpers shared by the rest of the kit.

Conventions: image-like data is a rank-3 float array laid out
(height, width, channels) in row-major order; flattened feature maps are
(height * width, channels) matrices with node index row * width + col.
All arithmetic is done in float64.
"""

from __future__ import annotations

import numpy as np


def as_tensor3(x, name: str = "tensor") -> np.ndarray:
    """Validate and return ``x`` as a float64 (H, W, C) array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"{name} must be rank-3 (H, W, C), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has a zero-sized dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Validate and return ``x`` as a float64 2-D array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be rank-2, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ValueError(f"{name} has a zero-sized dimension: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_mask(x, name: str = "mask") -> np.ndarray:
    """Validate and return ``x`` as a uint8 (H, W) array of 0/1 bits."""
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be rank-2 (H, W), got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 entries")
    return arr.astype(np.uint8)


def flatten(x) -> np.ndarray:
    """(H, W, C) -> (H*W, C); node i sits at row i // W, col i % W."""
    t = as_tensor3(x)
    h, w, c = t.shape
    return t.reshape(h * w, c)


def unflatten(m, height: int, width: int) -> np.ndarray:
    """Inverse of :func:`flatten` for the given spatial dims."""
    mat = as_matrix(m)
    if mat.shape[0] != height * width:
        raise ValueError(
            f"cannot unflatten {mat.shape[0]} rows into {height}x{width} grid"
        )
    return mat.reshape(height, width, mat.shape[1])


def matmul(a, b) -> np.ndarray:
    """Matrix product with float64 accumulation; rejects incompatible shapes."""
    am = as_matrix(a, "a")
    bm = as_matrix(b, "b")
    if am.shape[1] != bm.shape[0]:
        raise ValueError(
            f"matmul shape mismatch: ({am.shape[0]}x{am.shape[1]}) @ "
            f"({bm.shape[0]}x{bm.shape[1]})"
        )
    return am @ bm


def softmax_rows(m) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction for stability."""
    mat = as_matrix(m)
    shifted = mat - mat.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)

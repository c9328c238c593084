"""Small dense linear algebra layer shared by every module.

Matrices and vectors are plain numpy arrays: storage is float32 (checkpoint
precision), arithmetic is carried out in float64.
"""

import math

import numpy as np

STORAGE_DTYPE = np.float32
COMPUTE_DTYPE = np.float64


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


def as_matrix(data) -> np.ndarray:
    """Coerce to a 2-D float32 matrix, rejecting non-finite values."""
    m = np.asarray(data, dtype=STORAGE_DTYPE)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains NaN or Inf")
    return m


def as_vector(data) -> np.ndarray:
    """Coerce to a 1-D float32 vector, rejecting non-finite values."""
    v = np.asarray(data, dtype=STORAGE_DTYPE)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got ndim={v.ndim}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains NaN or Inf")
    return v


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product accumulated exactly per row (fsum), so results
    do not depend on summation order and dropping zero terms is a no-op."""
    if m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec shape mismatch: {m.shape} x {v.shape}")
    products = m.astype(COMPUTE_DTYPE) * v.astype(COMPUTE_DTYPE)
    return np.array([math.fsum(row) for row in products], dtype=COMPUTE_DTYPE)


def col_abs_sums(m: np.ndarray) -> np.ndarray:
    """Per-column sum of absolute values (out-strength of source nodes)."""
    return np.abs(m.astype(COMPUTE_DTYPE)).sum(axis=0)


def delete_row(m: np.ndarray, i: int) -> np.ndarray:
    if not 0 <= i < m.shape[0]:
        raise IndexError(f"row {i} out of range for {m.shape[0]} rows")
    return np.delete(m, i, axis=0)


def delete_col(m: np.ndarray, j: int) -> np.ndarray:
    if not 0 <= j < m.shape[1]:
        raise IndexError(f"column {j} out of range for {m.shape[1]} columns")
    return np.delete(m, j, axis=1)


def l2_norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(v, dtype=COMPUTE_DTYPE)))

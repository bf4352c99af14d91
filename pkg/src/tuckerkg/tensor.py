"""Dense matrix / rank-3 tensor kernels.

Storage convention (part of the public contract, the checkpoint format
depends on it): float64, C-contiguous, row-major. For a rank-3 tensor of
shape (dim1, dim2, dim3) the flat index of element (i, j, k) is
((i * dim2) + j) * dim3 + k, i.e. the last index varies fastest.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operands do not conform; the message names both shapes."""


def as_matrix(a) -> np.ndarray:
    """Coerce to a C-contiguous float64 matrix."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a matrix, got array of shape {m.shape}")
    return m


def as_tensor3(a) -> np.ndarray:
    """Coerce to a C-contiguous float64 rank-3 tensor."""
    t = np.ascontiguousarray(a, dtype=np.float64)
    if t.ndim != 3:
        raise ShapeError(f"expected a rank-3 tensor, got array of shape {t.shape}")
    return t


def as_vector(a) -> np.ndarray:
    v = np.ascontiguousarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a vector, got array of shape {v.shape}")
    return v


def mode_n_product(t, m, mode: int) -> np.ndarray:
    """Contract tensor `t` with matrix `m` along `mode` (1, 2 or 3).

    The size of `t` along `mode` must equal m.shape[1]; that axis is
    replaced by m.shape[0]:

        result[..., p, ...] = sum_i m[p, i] * t[..., i, ...]
    """
    t = as_tensor3(t)
    m = as_matrix(m)
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    if m.shape[1] != t.shape[mode - 1]:
        raise ShapeError(
            f"mode-{mode} product needs matrix columns == tensor dim {mode}: "
            f"matrix {m.shape} vs tensor {t.shape}"
        )
    if mode == 1:
        out = np.einsum("pi,ijk->pjk", m, t)
    elif mode == 2:
        out = np.einsum("pj,ijk->ipk", m, t)
    else:
        out = np.einsum("pk,ijk->ijp", m, t)
    return np.ascontiguousarray(out)


def mode_n_vec_product(t, v, mode: int) -> np.ndarray:
    """Contract tensor `t` with vector `v` along `mode`, dropping that axis.

    Returns the matrix sum_i v[i] * (slice i of t along mode).
    """
    t = as_tensor3(t)
    v = as_vector(v)
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    if v.shape[0] != t.shape[mode - 1]:
        raise ShapeError(
            f"mode-{mode} product needs vector length == tensor dim {mode}: "
            f"vector {v.shape} vs tensor {t.shape}"
        )
    if mode == 1:
        out = np.einsum("i,ijk->jk", v, t)
    elif mode == 2:
        out = np.einsum("j,ijk->ik", v, t)
    else:
        out = np.einsum("k,ijk->ij", v, t)
    return np.ascontiguousarray(out)


def matmul(a, b) -> np.ndarray:
    """Standard matrix product with a conformance check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return np.ascontiguousarray(a @ b)


def transpose(m) -> np.ndarray:
    """Matrix transpose, returned as a fresh row-major array."""
    return np.ascontiguousarray(as_matrix(m).T)

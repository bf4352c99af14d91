"""Constrained core tensors realizing earlier bilinear models.

Each builder returns a dense core such that the generic Tucker scoring,
applied with appropriately packed embedding vectors, reproduces the
original model's scoring function:

  distmult: superdiagonal ones; score is the trilinear dot product.
  complex:  entities/relations packed [real; imag]; score is the real part
            of the complex trilinear product with the object conjugated.
  simple:   entities packed [head; tail], relations packed
            [forward; inverse]; score is the averaged two-sided product.
  rescal:   the core's lateral slices are the per-relation matrices; the
            relation embedding matrix is the identity.
"""
from __future__ import annotations

import numpy as np

from .tensor import ShapeError, as_matrix, as_tensor3


def build_distmult_core(d: int) -> np.ndarray:
    """(d, d, d) core with ones where all three indices coincide."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    core = np.zeros((d, d, d))
    idx = np.arange(d)
    core[idx, idx, idx] = 1.0
    return core


def build_complex_core(d: int) -> np.ndarray:
    """(2d, 2d, 2d) core reproducing complex-valued trilinear scoring.

    Blocks (real/imag be the first/second halves of each packed vector):
    +1 on (re, re, re), +1 on (re, im, im), +1 on (im, re, im),
    -1 on (im, im, re).
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    core = np.zeros((2 * d, 2 * d, 2 * d))
    i = np.arange(d)
    core[i, i, i] = 1.0
    core[i, d + i, d + i] = 1.0
    core[d + i, i, d + i] = 1.0
    core[d + i, d + i, i] = -1.0
    return core


def build_simple_core(d: int) -> np.ndarray:
    """(2d, 2d, 2d) core averaging the forward and inverse head/tail products.

    1/2 on (head, forward, tail-of-object) and on
    (tail, inverse, head-of-object).
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    core = np.zeros((2 * d, 2 * d, 2 * d))
    i = np.arange(d)
    core[i, i, d + i] = 0.5
    core[d + i, d + i, i] = 0.5
    return core


def rescal_score(entity_emb, core, s: int, r: int, o: int) -> float:
    """Bilinear score subject_row @ core[:, r, :] @ object_row.

    The core's middle dimension indexes relations directly (identity
    relation embeddings), so each lateral slice is one relation's matrix.
    """
    entity_emb = as_matrix(entity_emb)
    core = as_tensor3(core)
    d_e = entity_emb.shape[1]
    if core.shape[0] != d_e or core.shape[2] != d_e:
        raise ShapeError(
            f"core entity modes {core.shape} must match embedding width {d_e}"
        )
    n_e = entity_emb.shape[0]
    if not 0 <= s < n_e:
        raise IndexError(f"entity id {s} out of range [0, {n_e})")
    if not 0 <= o < n_e:
        raise IndexError(f"entity id {o} out of range [0, {n_e})")
    if not 0 <= r < core.shape[1]:
        raise IndexError(f"relation id {r} out of range [0, {core.shape[1]})")
    return float(entity_emb[s] @ core[:, r, :] @ entity_emb[o])

"""Dense float32 tensor primitives used by the merging kernel.

Tensors are plain ``numpy.ndarray`` objects of dtype float32 in row-major
order. Reductions accumulate in float64 and round once to float32, which
keeps results independent of summation order at float32 precision.
"""

import numpy as np

from ._validation import check_tensor
from .exceptions import DimensionError

NORM_EPS = 1e-12


def l2_normalize_rows(t):
    """Scale every length-``D`` row along the last axis to unit L2 norm.

    Rows with norm below ``1e-12`` are divided by ``1e-12`` instead, so zero
    rows stay zero and no NaNs are produced.
    """
    t = check_tensor(t, "t")
    return normalize_rows64(t).astype(np.float32)


def normalize_rows64(t):
    """float64 variant of :func:`l2_normalize_rows` without the final rounding."""
    t64 = np.asarray(t, dtype=np.float64)
    norms = np.sqrt(np.einsum("...d,...d->...", t64, t64))
    return t64 / np.maximum(norms, NORM_EPS)[..., None]


def matmul_nt(a, b):
    """Return ``a @ b.T`` for ``a`` of shape (M, D) and ``b`` of shape (K, D)."""
    a = check_tensor(a, "a", ranks=(2,))
    b = check_tensor(b, "b", ranks=(2,))
    if a.shape[1] != b.shape[1]:
        raise DimensionError(
            f"inner dimensions differ: a{a.shape} vs b{b.shape}"
        )
    return (a.astype(np.float64) @ b.astype(np.float64).T).astype(np.float32)


def argmax_rows(s):
    """Row-wise argmax and maximum; ties resolve to the lowest column."""
    s = np.asarray(s)
    if s.ndim != 2 or s.shape[1] < 1:
        raise DimensionError(f"argmax_rows needs a rank-2 matrix with K >= 1, got {s.shape}")
    # np.argmax returns the first occurrence of the maximum.
    indices = np.argmax(s, axis=1)
    maxima = s[np.arange(s.shape[0]), indices]
    return indices, maxima


def gather_rows(ref, indices):
    """Copy ``ref[indices[i]]`` into row ``i`` of the output."""
    ref = check_tensor(ref, "ref", ranks=(2,))
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    n = ref.shape[0]
    bad = (idx < 0) | (idx >= n)
    if np.any(bad):
        raise IndexError(
            f"index {int(idx[bad][0])} out of range for {n} reference rows"
        )
    return ref[idx]

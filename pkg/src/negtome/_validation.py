"""Input validation helpers shared by the estimators and kernels."""

import math

import numpy as np

from .exceptions import ConfigurationError, DimensionError


def check_tensor(x, name="X", ranks=(2, 3), allow_empty=False):
    """Return ``x`` as a C-contiguous float32 array of an accepted rank.

    Arrays that are already float32 and contiguous are returned without a
    copy, so bit patterns survive validation untouched.
    """
    arr = np.ascontiguousarray(x, dtype=np.float32)
    if arr.ndim not in ranks:
        raise DimensionError(
            f"{name} must have rank in {tuple(ranks)}, got shape {arr.shape}"
        )
    if not allow_empty and any(extent < 1 for extent in arr.shape):
        raise DimensionError(f"{name} has an empty extent: shape {arr.shape}")
    return arr


def check_finite(x, name="X"):
    if not np.all(np.isfinite(x)):
        raise ConfigurationError(f"{name} contains non-finite values")
    return x


def check_scalar(value, name, *, min_value=None, max_value=None,
                 exclusive_min=False):
    """Validate a finite real scalar and return it as a Python float."""
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must be a real number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigurationError(f"{name} must be finite, got {value}")
    if min_value is not None:
        if exclusive_min and value <= min_value:
            raise ConfigurationError(f"{name} must be > {min_value}, got {value}")
        if not exclusive_min and value < min_value:
            raise ConfigurationError(f"{name} must be >= {min_value}, got {value}")
    if max_value is not None and value > max_value:
        raise ConfigurationError(f"{name} must be <= {max_value}, got {value}")
    return value


def check_mask(mask, n_ref):
    """Validate a flattened reference mask of length ``n_ref``."""
    m = np.ascontiguousarray(mask, dtype=np.float32).reshape(-1)
    if m.shape[0] != n_ref:
        raise DimensionError(
            f"mask length {m.shape[0]} does not match {n_ref} reference tokens"
        )
    if not np.all(np.isfinite(m)) or np.any(m < 0) or np.any(m > 1):
        raise ConfigurationError("mask weights must be finite and in [0, 1]")
    return m

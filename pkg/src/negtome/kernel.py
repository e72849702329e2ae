"""Negative token merging.

Each source token is matched to its most similar reference token by cosine
similarity and then pushed away from it by linear extrapolation::

    merged = src + alpha * (src - target)       # == (1 + alpha) src - alpha target

Tokens whose best similarity does not exceed ``tau`` are left untouched.
A negative ``alpha`` interpolates toward the reference instead.
"""

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_mask, check_scalar, check_tensor
from .exceptions import ConfigurationError, DimensionError
from .tensors import argmax_rows, gather_rows, normalize_rows64

DEFAULT_TAU = 0.7
DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class MatchResult:
    """Per-source-token matching outcome over the flattened (B*N) tokens."""

    target_index: np.ndarray
    max_sim: np.ndarray
    gate: Optional[np.ndarray] = None


@dataclass(frozen=True)
class MergeConfig:
    """Strength schedule and matching parameters.

    ``t_window`` is the inclusive ``(t_hi, t_lo)`` timestep interval in which
    merging is active.
    """

    alpha: float = 0.9
    tau: float = DEFAULT_TAU
    t_window: tuple = (1000, 600)
    schedule_kind: Literal["constant", "linear-decay"] = "constant"
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        check_scalar(self.alpha, "alpha")
        check_scalar(self.tau, "tau", min_value=-1.0, max_value=2.0)
        check_scalar(self.epsilon, "epsilon", min_value=0.0, exclusive_min=True)
        if len(self.t_window) != 2:
            raise ConfigurationError("t_window must be a pair (t_hi, t_lo)")
        t_hi, t_lo = self.t_window
        if not t_hi >= t_lo >= 0:
            raise ConfigurationError(
                f"t_window needs t_hi >= t_lo >= 0, got {tuple(self.t_window)}"
            )
        if self.schedule_kind not in ("constant", "linear-decay"):
            raise ConfigurationError(f"unknown schedule_kind {self.schedule_kind!r}")


def _flatten_src(src):
    src = check_tensor(src, "src", ranks=(2, 3))
    if src.ndim == 2:
        src = src[None]
    return src, src.reshape(-1, src.shape[-1])


def cosine_similarity(src, ref):
    """Similarity matrix of shape (B*N, N_ref) between normalized tokens."""
    _, flat = _flatten_src(src)
    ref = check_tensor(ref, "ref", ranks=(2,))
    if flat.shape[1] != ref.shape[1]:
        raise DimensionError(
            f"feature dimension mismatch: src D={flat.shape[1]}, ref D={ref.shape[1]}"
        )
    # same as matmul_nt(l2_normalize_rows(.), ...) minus two float32 round trips
    s = normalize_rows64(flat) @ normalize_rows64(ref).T
    return s.astype(np.float32)


def apply_mask_bias(s, mask, epsilon=DEFAULT_EPSILON):
    """Add ``log(mask + epsilon)`` to every row of the similarity matrix."""
    s = np.asarray(s, dtype=np.float32)
    m = check_mask(mask, s.shape[1])
    epsilon = check_scalar(epsilon, "epsilon", min_value=0.0, exclusive_min=True)
    bias = np.log(m.astype(np.float64) + epsilon)
    return (s.astype(np.float64) + bias[None, :]).astype(np.float32)


def match_targets(s):
    indices, maxima = argmax_rows(s)
    return MatchResult(target_index=indices, max_sim=maxima)


def gate_by_threshold(match, tau=DEFAULT_TAU):
    # strict: a similarity equal to tau does not merge
    return MatchResult(match.target_index, match.max_sim, match.max_sim > tau)


def extrapolate(src, target, gate, alpha):
    """Push gated rows of ``src`` away from ``target`` by ``alpha``.

    The update is written as ``src + alpha * (src - target)`` so that
    ``alpha == 0`` or ``target == src`` reproduce ``src`` bit-exactly.
    Ungated rows are copied unchanged.
    """
    alpha = check_scalar(alpha, "alpha")
    src = np.asarray(src, dtype=np.float32)
    target = np.asarray(target, dtype=np.float32)
    if src.shape != target.shape:
        raise DimensionError(f"src {src.shape} and target {target.shape} differ")
    gate = np.asarray(gate, dtype=bool).reshape(src.shape[:-1] + (1,))
    merged = src + np.float32(alpha) * (src - target)
    return np.where(gate, merged, src)


def match(src, ref, tau=DEFAULT_TAU, mask=None, epsilon=DEFAULT_EPSILON):
    """Similarity, optional mask bias, argmax and gating in one call."""
    s = cosine_similarity(src, ref)
    if mask is not None:
        s = apply_mask_bias(s, mask, epsilon)
    return gate_by_threshold(match_targets(s), tau)


def negtome(src, ref, alpha, tau=DEFAULT_TAU, epsilon=DEFAULT_EPSILON, mask=None,
            return_match=False):
    """Apply negative token merging to ``src`` (B, N, D) w.r.t. ``ref`` (N_ref, D).

    ``mask`` is an optional length-``N_ref`` weight vector in [0, 1]; the gate
    is evaluated on the mask-biased similarity.
    """
    alpha = check_scalar(alpha, "alpha")
    tau = check_scalar(tau, "tau")
    src3, flat = _flatten_src(src)
    ref = check_tensor(ref, "ref", ranks=(2,))
    if alpha == 0.0:
        if flat.shape[1] != ref.shape[1]:
            raise DimensionError(
                f"feature dimension mismatch: src D={flat.shape[1]}, ref D={ref.shape[1]}"
            )
        out = src3.copy()
        m = None
    else:
        m = match(flat, ref, tau=tau, mask=mask, epsilon=epsilon)
        target = gather_rows(ref, m.target_index)
        out = extrapolate(flat, target, m.gate, alpha).reshape(src3.shape)
    if np.ndim(src) == 2:
        out = out[0]
    if return_match:
        if m is None:
            m = match(flat, ref, tau=tau, mask=mask, epsilon=epsilon)
        return out, m
    return out


def alpha_at(cfg, t):
    """Merging strength at timestep ``t``; zero outside ``cfg.t_window``."""
    if t < 0:
        raise ConfigurationError(f"timestep must be >= 0, got {t}")
    t_hi, t_lo = cfg.t_window
    if not t_lo <= t <= t_hi:
        return 0.0
    if cfg.schedule_kind == "constant" or t_hi == t_lo:
        return float(cfg.alpha)
    return float(cfg.alpha) * (t - t_lo) / (t_hi - t_lo)


class NegativeTokenMerger(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`negtome`.

    ``fit`` stores the reference tokens (and optional mask); ``transform``
    merges source batches away from them.

    Parameters
    ----------
    alpha : float, default=0.9
        Extrapolation strength. Negative values pull toward the reference.
    tau : float, default=0.7
        Similarity threshold; only tokens with a best match above it change.
    epsilon : float, default=1e-6
        Offset inside the log mask bias.

    Examples
    --------
    >>> import numpy as np
    >>> m = NegativeTokenMerger(alpha=0.5).fit(np.eye(2, dtype=np.float32))
    >>> m.transform(np.array([[[0.6, 0.8]]], dtype=np.float32))
    array([[[0.9, 0.7]]], dtype=float32)
    """

    def __init__(self, alpha=0.9, tau=DEFAULT_TAU, epsilon=DEFAULT_EPSILON):
        self.alpha = alpha
        self.tau = tau
        self.epsilon = epsilon

    def fit(self, X, y=None, mask=None):
        check_scalar(self.alpha, "alpha")
        check_scalar(self.tau, "tau")
        check_scalar(self.epsilon, "epsilon", min_value=0.0, exclusive_min=True)
        ref = check_tensor(X, "reference", ranks=(2,))
        self.reference_ = ref.copy()
        self.mask_ = None if mask is None else check_mask(mask, ref.shape[0])
        self.n_features_in_ = ref.shape[1]
        return self

    def _check_src(self, X):
        check_is_fitted(self, "reference_")
        src = check_tensor(X, "X", ranks=(2, 3))
        if src.shape[-1] != self.n_features_in_:
            raise DimensionError(
                f"X has D={src.shape[-1]} features, reference has {self.n_features_in_}"
            )
        return src

    def transform(self, X):
        return negtome(self._check_src(X), self.reference_, self.alpha, self.tau,
                       self.epsilon, mask=self.mask_)

    def match(self, X):
        """Return the :class:`MatchResult` for ``X`` without merging."""
        return match(self._check_src(X), self.reference_, self.tau, self.mask_,
                     self.epsilon)

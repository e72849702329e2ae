"""Negative token merging over joint text+image token sequences."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_mask, check_tensor
from .exceptions import DimensionError
from .kernel import DEFAULT_EPSILON, DEFAULT_TAU, negtome


@dataclass(frozen=True)
class JointTokens:
    """Text tokens followed by image tokens along the sequence axis."""

    text: np.ndarray
    img: np.ndarray

    @property
    def n_text(self):
        return self.text.shape[1]

    def concat(self):
        return np.concatenate([self.text, self.img], axis=1)


def split_joint(joint, n_text):
    joint = check_tensor(joint, "joint", ranks=(3,))
    n_text = int(n_text)
    if not 0 <= n_text < joint.shape[1]:
        raise DimensionError(
            f"n_text={n_text} leaves no image tokens in a sequence of length "
            f"{joint.shape[1]}"
        )
    return JointTokens(text=joint[:, :n_text], img=joint[:, n_text:])


def negtome_joint(joint, ref_img, alpha, tau=DEFAULT_TAU, epsilon=DEFAULT_EPSILON,
                  mask=None):
    """Merge only the image part of ``joint``; text tokens pass through as-is."""
    if not isinstance(joint, JointTokens):
        raise TypeError("negtome_joint expects JointTokens; use split_joint first")
    merged = negtome(joint.img, ref_img, alpha, tau, epsilon, mask=mask)
    return np.concatenate([joint.text, merged], axis=1)


class JointTokenMerger(TransformerMixin, BaseEstimator):
    """Estimator applying negative merging to the image span of a joint sequence."""

    def __init__(self, n_text=0, alpha=0.9, tau=DEFAULT_TAU, epsilon=DEFAULT_EPSILON):
        self.n_text = n_text
        self.alpha = alpha
        self.tau = tau
        self.epsilon = epsilon

    def fit(self, X, y=None, mask=None):
        ref = check_tensor(X, "reference", ranks=(2,))
        self.reference_ = ref.copy()
        self.mask_ = None if mask is None else check_mask(mask, ref.shape[0])
        self.n_features_in_ = ref.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "reference_")
        joint = split_joint(X, self.n_text)
        return negtome_joint(joint, self.reference_, self.alpha, self.tau,
                             self.epsilon, mask=self.mask_)

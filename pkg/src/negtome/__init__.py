"""Negative token merging: adversarial feature guidance against a reference."""

from .exceptions import (ConfigurationError, DimensionError, FormatError,
                         InputError, NegToMeError)
from .kernel import (MatchResult, MergeConfig, NegativeTokenMerger, alpha_at,
                     apply_mask_bias, cosine_similarity, extrapolate,
                     gate_by_threshold, match_targets, negtome)
from .mmdit import JointTokenMerger, JointTokens, negtome_joint, split_joint

__all__ = [
    "ConfigurationError", "DimensionError", "FormatError", "InputError",
    "NegToMeError", "MatchResult", "MergeConfig", "NegativeTokenMerger",
    "alpha_at", "apply_mask_bias", "cosine_similarity", "extrapolate",
    "gate_by_threshold", "match_targets", "negtome", "JointTokenMerger",
    "JointTokens", "negtome_joint", "split_joint",
]

__version__ = "0.1.0"

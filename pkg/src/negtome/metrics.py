"""Feature-space proxies for output diversity and reference similarity.

All similarities here are plain cosine similarities over flattened
features. They stand in for learned perceptual metrics and are labelled
``proxy`` wherever they are reported.
"""

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .exceptions import InputError

PROXY_LABEL = "cosine-proxy"


@dataclass(frozen=True)
class DiversityReport:
    mean_pairwise_similarity: float
    similarity: np.ndarray

    @property
    def diversity(self):
        return 1.0 - self.mean_pairwise_similarity


def _as_matrix(features):
    try:
        rows = [np.asarray(f, dtype=np.float64).reshape(-1) for f in features]
    except TypeError:
        raise InputError("features must be an iterable of vectors")
    if len({r.shape[0] for r in rows}) > 1:
        raise InputError("feature vectors differ in length")
    return np.stack(rows) if rows else np.zeros((0, 0))


def _unit(x):
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    return x / np.maximum(norms, 1e-12)


def pairwise_diversity(features):
    """``1 - mean cosine similarity`` over all unordered pairs of vectors."""
    X = _as_matrix(features)
    if X.shape[0] < 2:
        raise InputError(f"need at least 2 feature vectors, got {X.shape[0]}")
    sim = np.clip(_unit(X) @ _unit(X).T, -1.0, 1.0)
    # bit-identical vectors count as exactly similar, avoiding rounding noise
    n = len(X)
    for i in range(n):
        for j in range(i, n):
            if np.array_equal(X[i], X[j]):
                sim[i, j] = sim[j, i] = 1.0
    pairs = sim[np.triu_indices(n, k=1)]
    return DiversityReport(float(np.mean(pairs)), sim)


def entropy_score(counts):
    """Shannon entropy in nats of a vector of category counts."""
    c = np.asarray(counts, dtype=np.int64).reshape(-1)
    if c.size == 0 or np.any(c < 0):
        raise InputError("counts must be a non-empty vector of non-negative ints")
    total = int(c.sum())
    if total == 0:
        raise InputError("all category counts are zero")
    p = c[c > 0] / total
    return float(-np.sum(p * np.log(p)))


def label_entropy(labels, sep="/"):
    """Entropy of label assignments, pooled and per category.

    Labels of the form ``"category/subcategory"`` are grouped by category;
    labels without ``sep`` all belong to one unnamed category.
    """
    labels = list(labels)
    if not labels:
        raise InputError("no labels given")
    pooled = entropy_score(list(Counter(labels).values()))
    groups = {}
    for lab in labels:
        cat, _, sub = lab.partition(sep) if sep in lab else ("", "", lab)
        groups.setdefault(cat, []).append(sub)
    per_category = {cat: entropy_score(list(Counter(subs).values()))
                    for cat, subs in sorted(groups.items())}
    return {
        "pooled": pooled,
        "per_category": per_category,
        "mean_over_categories": float(np.mean(list(per_category.values()))),
        "log_base": "e",
    }


def _flat(tokens):
    return np.asarray(tokens, dtype=np.float64).reshape(-1)


def ref_similarities(features, assets):
    """Cosine similarity of one flattened feature vector to every asset."""
    f = _unit(_flat(features))
    return np.array([float(np.clip(f @ _unit(_flat(a.tokens)), -1.0, 1.0))
                     for a in assets])


def max_ref_similarity(features, assets, exclude=None):
    """Highest cosine similarity between ``features`` and any non-excluded asset."""
    keep = [i for i in range(len(assets)) if i != exclude]
    if not keep:
        raise InputError("no assets left after exclusion")
    sims = ref_similarities(features, [assets[i] for i in keep])
    return float(sims.max())


def nearest_asset(features, assets):
    sims = ref_similarities(features, assets)
    return int(np.argmax(sims))


def overhead_ratio(timed_with, timed_without):
    if not timed_without > 0:
        raise InputError(f"baseline duration must be positive, got {timed_without}")
    return timed_with / timed_without

"""Deterministic toy denoiser for exercising negative token merging end to end.

A :class:`ToyModel` is a stack of pre-norm transformer blocks acting on an
``n x n`` grid of ``D``-dimensional tokens. Merging runs between the
attention and MLP branches of every block in ``RunConfig.block_range``.
Sampling is a few-step flow-style loop: at noise level ``sigma = t / 1000``
the model predicts clean features, and the next state re-mixes that
prediction with the implied noise direction plus a fresh seeded noise term.
"""

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from ._validation import check_mask, check_tensor
from .exceptions import ConfigurationError, DimensionError
from .kernel import MergeConfig, alpha_at, cosine_similarity, negtome
from .prng import SplitMix64, derive_seed

RefMode = Literal["none", "first-in-batch", "all-pairs", "external-asset"]
REF_MODES = ("none", "first-in-batch", "all-pairs", "external-asset")

# stream keys for derive_seed
_PARAM_STREAM = 1
_INIT_STREAM = 2
_STEP_STREAM = 3


@dataclass(frozen=True)
class ToyModel:
    seed: int
    grid: int
    dim: int
    hidden: int
    blocks: tuple
    condition: np.ndarray = field(repr=False)

    @property
    def n_tokens(self):
        return self.grid * self.grid

    @property
    def n_blocks(self):
        return len(self.blocks)


@dataclass(frozen=True)
class Asset:
    tokens: np.ndarray
    mask2d: Optional[np.ndarray] = None
    label: str = ""

    def mask_vector(self):
        if self.mask2d is None:
            return None
        return resize_mask(self.mask2d, self.tokens.shape[0])


@dataclass
class AssetStore:
    assets: list

    def __len__(self):
        return len(self.assets)

    def __getitem__(self, i):
        return self.assets[i]

    @property
    def labels(self):
        return [a.label for a in self.assets]


@dataclass(frozen=True)
class RunConfig:
    """One sampling run.

    ``block_range`` is an inclusive ``(first, last)`` block pair, ``None``
    for every block, or ``()`` for none.
    """

    batch: int = 4
    steps: int = 10
    seed: int = 0
    merge: MergeConfig = field(default_factory=MergeConfig)
    ref_mode: RefMode = "first-in-batch"
    block_range: Optional[tuple] = None
    cfg_like_scale: Optional[float] = None
    noise_mix: float = 0.5

    def __post_init__(self):
        if self.batch < 1:
            raise ConfigurationError(f"batch must be >= 1, got {self.batch}")
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {self.steps}")
        if self.ref_mode not in REF_MODES:
            raise ConfigurationError(f"unknown ref_mode {self.ref_mode!r}")
        if not 0.0 <= self.noise_mix <= 1.0:
            raise ConfigurationError("noise_mix must be in [0, 1]")

    def active_blocks(self, n_blocks):
        if self.block_range is None:
            return range(n_blocks)
        if len(self.block_range) == 0:
            return range(0)
        lo, hi = self.block_range
        if not 0 <= lo <= hi < n_blocks:
            raise ConfigurationError(
                f"block_range {tuple(self.block_range)} outside [0, {n_blocks})"
            )
        return range(lo, hi + 1)

    def timesteps(self):
        """Descending integer timesteps in (0, 1000]."""
        T = self.steps
        return [int(round(1000 * (T - k) / T)) for k in range(T)]


def init_model(seed, grid=8, dim=32, hidden=None, n_blocks=4):
    """Draw all block parameters from one SplitMix64 stream."""
    if grid < 1 or dim < 1 or n_blocks < 1:
        raise ConfigurationError("grid, dim and n_blocks must be >= 1")
    hidden = 4 * dim if hidden is None else hidden
    if hidden < 1:
        raise ConfigurationError("hidden must be >= 1")
    rng = SplitMix64(derive_seed(seed, _PARAM_STREAM))
    blocks = []
    for _ in range(n_blocks):
        blocks.append({
            "wq": (rng.normal((dim, dim)) / np.sqrt(dim)).astype(np.float32),
            "wk": (rng.normal((dim, dim)) / np.sqrt(dim)).astype(np.float32),
            "wv": (rng.normal((dim, dim)) / np.sqrt(dim)).astype(np.float32),
            "w1": (rng.normal((dim, hidden)) / np.sqrt(dim)).astype(np.float32),
            "w2": (rng.normal((hidden, dim)) / np.sqrt(hidden)).astype(np.float32),
        })
    condition = rng.normal((grid * grid, dim)).astype(np.float32)
    return ToyModel(seed=int(seed), grid=grid, dim=dim, hidden=hidden,
                    blocks=tuple(blocks), condition=condition)


def _rms_norm(x):
    x64 = x.astype(np.float64)
    return (x64 / np.sqrt(np.mean(x64 * x64, axis=-1, keepdims=True) + 1e-6)).astype(np.float32)


def _softmax(scores):
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=-1, keepdims=True)


def attention_block(model, block_idx, x, return_weights=False):
    """Single-head ``softmax(Q K^T / sqrt(D)) V`` over each batch item."""
    p = model.blocks[block_idx]
    x = check_tensor(x, "x", ranks=(3,))
    outs, weights = [], []
    for item in x:
        h = item.astype(np.float64)
        q = h @ p["wq"].astype(np.float64)
        k = h @ p["wk"].astype(np.float64)
        v = h @ p["wv"].astype(np.float64)
        w = _softmax(q @ k.T / np.sqrt(model.dim))
        outs.append((w @ v).astype(np.float32))
        if return_weights:
            weights.append(w)
    out = np.stack(outs)
    return (out, np.stack(weights)) if return_weights else out


def mlp_block(model, block_idx, x):
    p = model.blocks[block_idx]
    outs = []
    for item in x:
        h = np.tanh(item.astype(np.float64) @ p["w1"].astype(np.float64))
        outs.append((h @ p["w2"].astype(np.float64)).astype(np.float32))
    return np.stack(outs)


@dataclass
class _Reference:
    """Where a merging step finds its reference tokens."""

    mode: str
    # external-asset only: asset states and per-item chosen asset
    asset_states: Optional[np.ndarray] = None
    choice: Optional[Sequence[int]] = None
    masks: Optional[Sequence] = None


def _merge_attention(a, a_ref, ref, alpha, merge):
    """Merge attention outputs ``a`` (B, N, D) according to ``ref.mode``."""
    tau, eps = merge.tau, merge.epsilon
    if ref.mode == "first-in-batch":
        if a.shape[0] < 2:
            return a
        out = a.copy()
        out[1:] = negtome(a[1:], a[0], alpha, tau, eps)
        return out
    if ref.mode == "all-pairs":
        if a.shape[0] < 2:
            return a
        out = a.copy()
        for i in range(a.shape[0]):
            others = np.concatenate([a[j] for j in range(a.shape[0]) if j != i])
            out[i] = negtome(a[i], others, alpha, tau, eps)
        return out
    if ref.mode == "external-asset":
        out = a.copy()
        for i, j in enumerate(ref.choice):
            out[i] = negtome(a[i], a_ref[j], alpha, tau, eps, mask=ref.masks[j])
        return out
    raise ConfigurationError(f"no merging for ref_mode {ref.mode!r}")


def _forward(model, x, run, alpha, ref, conditional=True):
    """One denoiser evaluation; returns the predicted clean features."""
    merging = alpha != 0.0 and ref is not None
    active = set(run.active_blocks(model.n_blocks)) if merging else set()
    h = x + model.condition[None] if conditional else x.copy()
    h_ref = None
    if active and ref.mode == "external-asset":
        h_ref = ref.asset_states + (model.condition[None] if conditional else 0)
        h_ref = h_ref.astype(np.float32)
    for b in range(model.n_blocks):
        a = attention_block(model, b, _rms_norm(h))
        if h_ref is not None:
            a_ref = attention_block(model, b, _rms_norm(h_ref))
        if b in active:
            a = _merge_attention(a, a_ref if h_ref is not None else None, ref,
                                 alpha, run.merge)
        h = h + a
        h = h + mlp_block(model, b, _rms_norm(h))
        if h_ref is not None:
            h_ref = h_ref + a_ref
            h_ref = h_ref + mlp_block(model, b, _rms_norm(h_ref))
    return _rms_norm(h)


def _predict(model, x, run, alpha, ref):
    if run.cfg_like_scale is None:
        return _forward(model, x, run, alpha, ref)
    s = np.float32(run.cfg_like_scale)
    cond = _forward(model, x, run, alpha, ref, conditional=True)
    uncond = _forward(model, x, run, alpha, ref, conditional=False)
    return uncond + s * (cond - uncond)


def _check_ref(run, ref, alpha):
    if run.ref_mode == "none" or alpha == 0.0:
        return None
    if ref is None:
        if run.ref_mode == "external-asset":
            raise ConfigurationError("external-asset mode needs a reference asset")
        ref = _Reference(run.ref_mode)
    return ref


def denoise_step(model, state, t, t_next, run, ref=None, step_index=0,
                 return_prediction=False):
    """Advance ``state`` from timestep ``t`` to ``t_next``."""
    state = check_tensor(state, "state", ranks=(3,))
    if state.shape[1:] != (model.n_tokens, model.dim):
        raise DimensionError(
            f"state shape {state.shape} does not match model tokens "
            f"({model.n_tokens}, {model.dim})"
        )
    alpha = alpha_at(run.merge, t)
    ref = _check_ref(run, ref, alpha)
    x0 = _predict(model, state, run, alpha, ref)
    sigma, sigma_next = t / 1000.0, t_next / 1000.0
    if sigma_next <= 0.0:
        nxt = x0.copy()
    else:
        x64, x0_64 = state.astype(np.float64), x0.astype(np.float64)
        eps = (x64 - (1.0 - sigma) * x0_64) / sigma
        rng = SplitMix64(derive_seed(run.seed, _STEP_STREAM, step_index))
        z = rng.normal(state.shape)
        rho = run.noise_mix
        noise = np.sqrt(1.0 - rho * rho) * eps + rho * z
        nxt = ((1.0 - sigma_next) * x0_64 + sigma_next * noise).astype(np.float32)
    return (nxt, x0) if return_prediction else nxt


def initial_state(model, run):
    rng = SplitMix64(derive_seed(run.seed, _INIT_STREAM))
    return rng.normal((run.batch, model.n_tokens, model.dim)).astype(np.float32)


def select_reference_rag(src, assets):
    """Pick the asset whose tokens best cover ``src`` (N, D).

    The score of an asset is the mean, over source tokens, of each token's
    best cosine similarity to the asset's tokens. Returns ``(index, asset)``.
    """
    if assets is None or len(assets) == 0:
        raise ConfigurationError("asset store is empty")
    src = check_tensor(src, "src", ranks=(2,))
    best, best_score = 0, -np.inf
    for i, asset in enumerate(assets):
        score = float(cosine_similarity(src, asset.tokens).max(axis=1).astype(np.float64).mean())
        if score > best_score:
            best, best_score = i, score
    return best, assets[best]


def _external_reference(model, state, run, assets):
    """Choose one asset per batch item from the unmerged first prediction."""
    if assets is None or len(assets) == 0:
        raise ConfigurationError("external-asset mode needs a non-empty asset store")
    for a in assets:
        if a.tokens.shape != (model.n_tokens, model.dim):
            raise DimensionError(
                f"asset tokens {a.tokens.shape} must match model tokens "
                f"({model.n_tokens}, {model.dim})"
            )
    if len(assets) == 1:
        choice = [0] * state.shape[0]
    else:
        preview = _predict(model, state, run, 0.0, None)
        choice = [select_reference_rag(item, assets)[0] for item in preview]
    states = np.stack([a.tokens for a in assets]).astype(np.float32)
    masks = [a.mask_vector() for a in assets]
    return _Reference("external-asset", asset_states=states, choice=choice, masks=masks)


def run(model, run_cfg, assets=None, return_trajectory=False):
    """Sample ``run_cfg.batch`` items and return their final features (B, N, D)."""
    ts = run_cfg.timesteps()
    state = initial_state(model, run_cfg)
    ref = None
    trajectory = [state]
    for k, t in enumerate(ts):
        t_next = ts[k + 1] if k + 1 < len(ts) else 0
        alpha = alpha_at(run_cfg.merge, t)
        if (run_cfg.ref_mode == "external-asset" and alpha != 0.0 and ref is None):
            ref = _external_reference(model, state, run_cfg, assets)
        state = denoise_step(model, state, t, t_next, run_cfg, ref=ref, step_index=k)
        trajectory.append(state)
    return (state, trajectory) if return_trajectory else state


def resize_mask(mask2d, n_tokens):
    """Area-average a 2-D mask onto an ``n x n`` grid and flatten row-major."""
    m = np.asarray(mask2d, dtype=np.float64)
    if m.ndim != 2 or min(m.shape) < 1:
        raise DimensionError(f"mask must be a non-empty 2-D grid, got shape {m.shape}")
    n = int(round(np.sqrt(n_tokens)))
    if n < 1 or n * n != n_tokens:
        raise ConfigurationError(f"n_tokens={n_tokens} is not a perfect square")
    out = _area_matrix(n, m.shape[0]) @ m @ _area_matrix(n, m.shape[1]).T
    return check_mask(np.clip(out.reshape(-1), 0.0, 1.0), n_tokens)


def _area_matrix(n_out, n_in):
    """Row i averages the source cells covered by output cell i."""
    scale = n_in / n_out
    P = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = i * scale, (i + 1) * scale
        for j in range(int(np.floor(lo)), min(int(np.ceil(hi)), n_in)):
            P[i, j] = max(0.0, min(hi, j + 1) - max(lo, j))
    return P / scale

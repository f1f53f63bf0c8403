"""Contrastive and supervised objectives.

All contrastive losses take unit-norm embeddings ``z`` of shape (B, D) and
average over the anchors that have at least one positive.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .exceptions import BadTarget, DegenerateBatch, InvalidConfig
from .va_space import as_points, macro_indices, pairwise_distances

# Large negative logit used to exclude the anchor from its own denominator.
# exp() of it underflows to exactly 0 in both float32 and float64.
_SELF_MASK = -1e9


class Variant(str, Enum):
    SOFTVA = "softva"
    HARDVA = "hardva"
    AUGMENT = "augment"
    SUPCON = "supcon"
    SCRATCH = "scratch"
    CROSS_ENTROPY = "cross_entropy"


@dataclass
class LossConfig:
    tau: float = 0.07
    d_max: float = 5.0
    variant: Variant = Variant.SOFTVA

    def __post_init__(self):
        self.variant = Variant(self.variant)
        if not self.tau > 0:
            raise InvalidConfig("tau must be positive", "tau")
        if not self.d_max > 0:
            raise InvalidConfig("d_max must be positive", "d_max")


@dataclass(frozen=True)
class WeightMatrix:
    w: np.ndarray
    d: np.ndarray


def soft_weights(va_points, d_max: float = 5.0) -> WeightMatrix:
    """``w_ij = max(0, 1 - d_ij / d_max)`` with a zero diagonal."""
    if not d_max > 0:
        raise InvalidConfig("d_max must be positive", "d_max")
    d = pairwise_distances(as_points(va_points))
    w = np.maximum(0.0, 1.0 - d / d_max)
    np.fill_diagonal(w, 0.0)
    return WeightMatrix(w, d)


def hard_weights(va_points, d_max: float = 5.0) -> WeightMatrix:
    d = pairwise_distances(as_points(va_points))
    w = (d < d_max).astype(np.float64)
    np.fill_diagonal(w, 0.0)
    return WeightMatrix(w, d)


def _similarity_logits(z: Tensor, tau: float) -> Tensor:
    b = z.shape[0]
    logits = ad.mul(ad.matmul(z, z.swapaxes(0, 1)), 1.0 / tau)
    mask = np.zeros((b, b), dtype=z.dtype)
    np.fill_diagonal(mask, _SELF_MASK)
    return ad.add(logits, mask)


def weighted_contrastive_loss(z: Tensor, weights, tau: float = 0.07) -> Tensor:
    """Soft-weighted contrastive loss for an arbitrary non-negative weight matrix.

    Anchors whose weights sum to zero are skipped; the result is the mean over
    the remaining anchors.
    """
    w = np.asarray(weights.w if isinstance(weights, WeightMatrix) else weights, dtype=np.float64)
    b = z.shape[0]
    if z.ndim != 2 or w.shape != (b, b):
        raise ValueError(f"embeddings {z.shape} and weights {w.shape} disagree")
    if b < 2:
        raise DegenerateBatch("need at least two samples")
    w = w.copy()
    np.fill_diagonal(w, 0.0)
    row = w.sum(axis=1)
    valid = row > 0
    if not valid.any():
        raise DegenerateBatch("every anchor has zero total weight")
    norm = np.zeros_like(w)
    norm[valid] = w[valid] / row[valid, None]
    log_prob = ad.log_softmax(_similarity_logits(z, tau), axis=1)
    total = ad.tsum(ad.mul(log_prob, Tensor(norm.astype(z.dtype))))
    return ad.mul(total, -1.0 / valid.sum())


def va_contrastive_loss(z: Tensor, weights, tau: float = 0.07) -> Tensor:
    return weighted_contrastive_loss(z, weights, tau)


def supcon_loss(z: Tensor, labels, tau: float = 0.07) -> Tensor:
    """Supervised contrastive loss with class-equality positives."""
    y = np.asarray(labels)
    b = z.shape[0]
    if len(y) != b:
        raise ValueError("one label per embedding required")
    pos = (y[:, None] == y[None, :]).astype(np.float64)
    np.fill_diagonal(pos, 0.0)
    counts = pos.sum(axis=1)
    valid = counts > 0
    if not valid.any():
        raise DegenerateBatch("no anchor has a positive")
    logits = _similarity_logits(z, tau)
    denom = ad.logsumexp(logits, axis=1, keepdims=True)  # over k != i
    log_prob = ad.sub(logits, denom)
    coef = np.zeros_like(pos)
    coef[valid] = pos[valid] / counts[valid, None]
    total = ad.tsum(ad.mul(log_prob, Tensor(coef.astype(z.dtype))))
    return ad.mul(total, -1.0 / valid.sum())


def hard_va_loss(z: Tensor, va_points, d_max: float = 5.0, tau: float = 0.07) -> Tensor:
    """Binary V-A positives: every pair closer than ``d_max`` counts equally."""
    return weighted_contrastive_loss(z, hard_weights(va_points, d_max), tau)


def soft_va_loss(z: Tensor, va_points, d_max: float = 5.0, tau: float = 0.07) -> Tensor:
    return weighted_contrastive_loss(z, soft_weights(va_points, d_max), tau)


def augment_infonce_loss(z_views: Tensor, tau: float = 0.07) -> Tensor:
    """Instance-discrimination InfoNCE; rows ``i`` and ``i + B`` are two views."""
    n = z_views.shape[0]
    if n % 2:
        raise ValueError("expected an even number of rows (two views per sample)")
    b = n // 2
    if b < 2:
        raise DegenerateBatch("instance discrimination needs at least two samples")
    w = np.zeros((n, n))
    idx = np.arange(b)
    w[idx, idx + b] = 1.0
    w[idx + b, idx] = 1.0
    return weighted_contrastive_loss(z_views, w, tau)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    t = np.asarray(targets)
    k = logits.shape[-1]
    if t.ndim != 1 or len(t) != logits.shape[0]:
        raise BadTarget("targets must be a 1-D array aligned with logits")
    if not np.issubdtype(t.dtype, np.integer):
        if not np.all(np.equal(np.mod(t, 1), 0)):
            raise BadTarget("targets must be integer class ids")
        t = t.astype(np.intp)
    if t.size and (t.min() < 0 or t.max() >= k):
        raise BadTarget(f"targets must lie in [0, {k})")
    onehot = np.zeros(logits.shape, dtype=logits.dtype)
    onehot[np.arange(len(t)), t] = 1.0
    picked = ad.tsum(ad.mul(ad.log_softmax(logits, axis=-1), Tensor(onehot)))
    return ad.mul(picked, -1.0 / len(t))


# ------------------------------------------------------------- augmentations
def augment_segment(x: np.ndarray, rng: np.random.Generator, crop_min=0.8, noise=0.05, channel_drop=0.1) -> np.ndarray:
    """Random time crop resized back to full length, Gaussian noise, channel dropout."""
    c, t = x.shape
    frac = rng.uniform(crop_min, 1.0)
    width = max(2, int(round(frac * t)))
    start = int(rng.integers(0, t - width + 1))
    crop = x[:, start : start + width]
    grid = np.linspace(0.0, width - 1, t)
    lo = np.floor(grid).astype(int)
    hi = np.minimum(lo + 1, width - 1)
    frac_pos = grid - lo
    out = crop[:, lo] * (1.0 - frac_pos) + crop[:, hi] * frac_pos
    std = out.std()
    if std > 0:
        out = out + rng.standard_normal(out.shape) * noise * std
    keep = rng.random(c) >= channel_drop
    return out * keep[:, None]


def loss_for_variant(variant, z: Tensor, va_points=None, cfg: LossConfig | None = None) -> Tensor:
    """Dispatch the pretraining loss for one of the contrastive arms."""
    cfg = cfg or LossConfig()
    variant = Variant(variant)
    if variant is Variant.SOFTVA:
        return soft_va_loss(z, va_points, cfg.d_max, cfg.tau)
    if variant is Variant.HARDVA:
        return hard_va_loss(z, va_points, cfg.d_max, cfg.tau)
    if variant is Variant.AUGMENT:
        return augment_infonce_loss(z, cfg.tau)
    if variant is Variant.SUPCON:
        labels = np.asarray(va_points)
        if labels.ndim == 2:
            # V-A points: the macro region is the class
            macro = macro_indices(labels)
            labels = 3 * macro[:, 0] + macro[:, 1]
        return supcon_loss(z, labels, cfg.tau)
    raise InvalidConfig(f"{variant.value} has no pretraining loss", "variant")

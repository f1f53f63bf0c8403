"""AdamW, cosine annealing and global-norm gradient clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Tensor
from .exceptions import ShapeMismatch


@dataclass
class OptimizerState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, params: Sequence[Tensor], lr=5e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=1e-4):
        self.params = list(params)
        self.state = OptimizerState(lr, betas[0], betas[1], eps, weight_decay)
        self.state.m = [np.zeros_like(p.data) for p in self.params]
        self.state.v = [np.zeros_like(p.data) for p in self.params]

    @property
    def lr(self):
        return self.state.lr

    @lr.setter
    def lr(self, value):
        self.state.lr = float(value)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self, grads: Sequence[np.ndarray] | None = None):
        if grads is None:
            grads = [p.grad for p in self.params]
        adamw_step(self.params, grads, self.state)


def adamw_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: OptimizerState):
    """One in-place AdamW update; ``None`` gradients count as zero."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.shape:
            raise ShapeMismatch(f"gradient {g.shape} does not match parameter {p.shape}")
        m = state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        v = state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        if state.weight_decay:
            p.data = p.data - state.lr * state.weight_decay * p.data
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data = (p.data - state.lr * update).astype(p.dtype, copy=False)


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    if total_steps <= 0:
        return lr_max
    step = min(max(step, 0), total_steps)
    if step == total_steps:
        return lr_min
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


def global_norm(grads: Sequence[np.ndarray | None]) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads if g is not None))


def clip_gradients(grads: Sequence[np.ndarray | None], max_norm: float) -> tuple[list, float]:
    """Scale all gradients by ``max_norm / norm`` when the global norm exceeds ``max_norm``.

    Returns the (possibly scaled) gradients and the pre-clip global norm.
    """
    if not max_norm > 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm <= max_norm:
        return list(grads), norm
    factor = max_norm / norm
    out = [None if g is None else g * np.asarray(factor, dtype=g.dtype) for g in grads]
    # float rounding can leave the scaled norm a hair above max_norm
    for _ in range(4):
        after = global_norm(out)
        if after <= max_norm:
            break
        eps = max(np.finfo(g.dtype).eps for g in out if g is not None)
        tighten = (max_norm / after) * (1.0 - 4 * eps)
        out = [None if g is None else g * np.asarray(tighten, dtype=g.dtype) for g in out]
    return out, norm


def clip_(params: Sequence[Tensor], max_norm: float) -> float:
    clipped, norm = clip_gradients([p.grad for p in params], max_norm)
    for p, g in zip(params, clipped):
        p.grad = g
    return norm

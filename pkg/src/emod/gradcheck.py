"""Finite-difference suite over every differentiable op, plus the end-to-end V-A loss."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .objectives import soft_va_loss


def _weighted(out: Tensor, rng) -> Tensor:
    """Reduce to a scalar with fixed random weights so every output entry matters."""
    w = Tensor(rng.standard_normal(out.shape))
    return ad.tsum(ad.mul(out, w))


def _away_from(x, value, gap=1e-2):
    near = np.abs(x - value) < gap
    return np.where(near, value + np.sign(x - value + 1e-300) * gap, x)


def _binary(op):
    def build(rng):
        a, b = rng.standard_normal((3, 4)), rng.standard_normal((4,))
        if op is ad.div:
            b = np.sign(b) * (np.abs(b) + 0.5)
        return lambda x, y: op(x, y), [a, b]
    return build


def _unary(op, low=None):
    def build(rng):
        x = rng.standard_normal((3, 5))
        if low is not None:
            x = np.abs(x) + low
        return op, [x]
    return build


def _dropout(rng):
    seed = int(rng.integers(2**31))
    return (lambda x: ad.dropout(x, 0.3, np.random.default_rng(seed), True)), [rng.standard_normal((4, 6))]


def _group_norm(rng):
    x = rng.standard_normal((2, 4, 3, 5))
    return (lambda x, g, b: ad.group_norm(x, 2, g, b)), [x, rng.standard_normal(4), rng.standard_normal(4)]


def _layer_norm(rng):
    return ad.layer_norm, [rng.standard_normal((3, 6)), rng.standard_normal(6), rng.standard_normal(6)]


def _conv2d(rng):
    return (lambda x, k, b: ad.conv2d(x, k, stride=(1, 2), bias=b)), [
        rng.standard_normal((2, 2, 3, 9)), rng.standard_normal((3, 2, 2, 3)), rng.standard_normal(3)]


def _matmul(rng):
    return ad.matmul, [rng.standard_normal((2, 3, 4)), rng.standard_normal((4, 5))]


def _linear(rng):
    return ad.linear, [rng.standard_normal((3, 4)), rng.standard_normal((4, 2)), rng.standard_normal(2)]


def _concat(rng):
    return (lambda a, b: ad.concat([a, b], axis=1)), [rng.standard_normal((2, 3)), rng.standard_normal((2, 4))]


def _take(rng):
    idx = rng.integers(0, 5, 7)
    return (lambda a: ad.take(a, idx, axis=0)), [rng.standard_normal((5, 3))]


def _maximum(rng):
    return (lambda a: ad.maximum(a, 0.1)), [_away_from(rng.standard_normal((4, 4)), 0.1)]


def _soft_va(rng):
    va = rng.uniform(-4, 4, (6, 2))
    va[1] = va[0] + rng.uniform(-1, 1, 2)  # at least one close pair
    va = np.clip(va, -4, 4)
    return (lambda z: soft_va_loss(ad.l2_normalize(z), va, 5.0, 0.5)), [rng.standard_normal((6, 4))]


CASES: dict[str, Callable] = {
    "add": _binary(ad.add),
    "sub": _binary(ad.sub),
    "mul": _binary(ad.mul),
    "div": _binary(ad.div),
    "scale": _unary(lambda x: ad.scale(x, -1.7)),
    "exp": _unary(ad.exp),
    "log": _unary(ad.log, low=0.2),
    "sqrt": _unary(ad.sqrt, low=0.2),
    "maximum": _maximum,
    "gelu": _unary(ad.gelu),
    "sum": _unary(lambda x: ad.tsum(x, axis=1, keepdims=True)),
    "mean": _unary(lambda x: ad.mean(x, axis=0)),
    "reshape": _unary(lambda x: ad.reshape(x, (5, 3))),
    "transpose": _unary(lambda x: ad.transpose(x, (1, 0))),
    "getitem": _unary(lambda x: ad.getitem(x, (slice(1, 3), [0, 2, 2]))),
    "take": _take,
    "concat": _concat,
    "matmul": _matmul,
    "linear": _linear,
    "softmax": _unary(lambda x: ad.softmax(x, axis=-1)),
    "log_softmax": _unary(lambda x: ad.log_softmax(x, axis=0)),
    "logsumexp": _unary(lambda x: ad.logsumexp(x, axis=1)),
    "standardize": _unary(lambda x: ad.standardize(x, axis=-1)),
    "group_norm": _group_norm,
    "layer_norm": _layer_norm,
    "l2_normalize": _unary(ad.l2_normalize),
    "dropout": _dropout,
    "conv2d": _conv2d,
    "soft_va_loss": _soft_va,
}


@dataclass
class CaseResult:
    name: str
    seed: int
    error: float

    @property
    def passed(self):
        return self.error < 1e-4


def check_case(name: str, seed: int, step: float = 1e-5) -> CaseResult:
    rng = np.random.default_rng([seed, sorted(CASES).index(name)])
    fn, inputs = CASES[name](rng)
    weight_seed = int(rng.integers(2**31))

    def scalar(*xs):
        out = fn(*xs)
        return out if out.ndim == 0 else _weighted(out, np.random.default_rng(weight_seed))

    return CaseResult(name, seed, ad.gradcheck(scalar, inputs, step))


def run_suite(seeds=range(100), names=None, step: float = 1e-5) -> list[CaseResult]:
    return [check_case(n, s, step) for n in (names or sorted(CASES)) for s in seeds]

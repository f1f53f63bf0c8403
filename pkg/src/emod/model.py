"""Triple-domain encoder and spatial-temporal axial transformer.

Shapes used throughout: ``B`` segments, ``C`` channels, ``P`` temporal tokens
(patches) per channel, ``d`` embedding width.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import from_dict as config_from_dict
from .exceptions import InvalidConfig, SegmentTooShort, SequenceTooLong, ShapeMismatch, UnregisteredChannel
from .signal import window_fft_magnitude


@dataclass
class ModelConfig:
    d: int = 128
    heads: int = 16
    layers: int = 3
    ffn_hidden: int = 512
    conv_out_channels: int = 128
    conv_kernel: int = 25
    conv_stride: int = 25
    gn_groups: int = 4
    patch_length: int = 200
    max_channels: int = 128
    max_tokens: int = 32
    projection_dim: int = 64
    dropout: float = 0.1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.d % self.heads:
            raise InvalidConfig(f"d={self.d} not divisible by heads={self.heads}", "heads")
        if self.conv_out_channels % self.gn_groups:
            raise InvalidConfig("conv_out_channels not divisible by gn_groups", "gn_groups")
        if self.patch_length < self.conv_kernel:
            raise InvalidConfig("patch_length shorter than the conv kernel", "patch_length")
        if self.spectral_bins < self.conv_kernel:
            raise InvalidConfig("patch too short for the spectral conv", "patch_length")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidConfig("dropout must lie in [0, 1)", "dropout")
        for f in ("d", "layers", "ffn_hidden", "max_channels", "max_tokens", "projection_dim"):
            if getattr(self, f) < 1:
                raise InvalidConfig(f"{f} must be positive", f)

    @property
    def spectral_bins(self):
        return self.patch_length // 2 + 1

    @property
    def temporal_positions(self):
        return (self.patch_length - self.conv_kernel) // self.conv_stride + 1

    @property
    def spectral_positions(self):
        return (self.spectral_bins - self.conv_kernel) // self.conv_stride + 1

    @classmethod
    def paper(cls, **overrides):
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides):
        base = dict(d=32, heads=4, layers=2, ffn_hidden=64, conv_out_channels=16, projection_dim=16,
                    max_channels=64, dropout=0.0)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_profile(cls, profile: str, **overrides):
        if profile == "paper":
            return cls.paper(**overrides)
        if profile == "desk":
            return cls.desk(**overrides)
        raise InvalidConfig(f"unknown profile {profile!r}", "profile")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict):
        return config_from_dict(cls, data, "model")


def _init(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(dtype)


def relative_bias_index(n_tokens: int, max_tokens: int) -> np.ndarray:
    """Index map so that ``R[i, j] = b[i - j + max_tokens - 1]``."""
    i = np.arange(n_tokens)
    return i[:, None] - i[None, :] + max_tokens - 1


class EmodNet:
    """Parameter container plus forward pass for the encoder.

    Channel names are mapped to rows of a shared embedding table, so
    datasets with different montages reuse the same electrode vectors.
    """

    def __init__(self, config: ModelConfig | None = None, seed=0, dtype=np.float32):
        self.config = config or ModelConfig()
        self.dtype = np.dtype(dtype)
        self.channel_registry: dict[str, int] = {}
        self.training = True
        self.rng = np.random.default_rng(seed)
        self.params: dict[str, Tensor] = {}
        self._build(np.random.default_rng(seed))

    # ------------------------------------------------------------- parameters
    def _add(self, name, array):
        self.params[name] = Tensor(np.asarray(array, dtype=self.dtype), requires_grad=True)

    def _build(self, rng):
        cfg, dt = self.config, self.dtype
        k, o, d = cfg.conv_kernel, cfg.conv_out_channels, cfg.d
        for branch, npos in (("temporal", cfg.temporal_positions), ("spectral", cfg.spectral_positions)):
            self._add(f"{branch}.conv.weight", _init(rng, (o, 1, 1, k), k, dt))
            self._add(f"{branch}.conv.bias", np.zeros(o))
            self._add(f"{branch}.gn.weight", np.ones(o))
            self._add(f"{branch}.gn.bias", np.zeros(o))
            self._add(f"{branch}.proj.weight", _init(rng, (o * npos, d), o * npos, dt))
            self._add(f"{branch}.proj.bias", np.zeros(d))
        self._add("fuse.weight", _init(rng, (2 * d, d), 2 * d, dt))
        self._add("fuse.bias", np.zeros(d))
        self._add("channel_embedding", 0.02 * rng.standard_normal((cfg.max_channels, d)))
        for layer in range(cfg.layers):
            p = f"layers.{layer}."
            for attn in ("spatial", "temporal"):
                self._add(p + f"{attn}.norm.weight", np.ones(d))
                self._add(p + f"{attn}.norm.bias", np.zeros(d))
                for proj in ("q", "k", "v", "o"):
                    self._add(p + f"{attn}.{proj}.weight", _init(rng, (d, d), d, dt))
                    self._add(p + f"{attn}.{proj}.bias", np.zeros(d))
            self._add(p + "temporal.rel_bias", np.zeros(2 * cfg.max_tokens - 1))
            self._add(p + "ffn.norm.weight", np.ones(d))
            self._add(p + "ffn.norm.bias", np.zeros(d))
            self._add(p + "ffn.fc1.weight", _init(rng, (d, cfg.ffn_hidden), d, dt))
            self._add(p + "ffn.fc1.bias", np.zeros(cfg.ffn_hidden))
            self._add(p + "ffn.fc2.weight", _init(rng, (cfg.ffn_hidden, d), cfg.ffn_hidden, dt))
            self._add(p + "ffn.fc2.bias", np.zeros(d))
        self._add("final_norm.weight", np.ones(d))
        self._add("final_norm.bias", np.zeros(d))
        self._add("head.fc1.weight", _init(rng, (d, d), d, dt))
        self._add("head.fc1.bias", np.zeros(d))
        self._add("head.fc2.weight", _init(rng, (d, cfg.projection_dim), d, dt))
        self._add("head.fc2.bias", np.zeros(cfg.projection_dim))

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def named_parameters(self):
        return list(self.params.items())

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict=True):
        from .exceptions import CheckpointMismatch

        missing = set(self.params) - set(state)
        unexpected = set(state) - set(self.params)
        if strict and (missing or unexpected):
            raise CheckpointMismatch(f"missing={sorted(missing)[:5]} unexpected={sorted(unexpected)[:5]}")
        for name, arr in state.items():
            if name not in self.params:
                continue
            if tuple(arr.shape) != self.params[name].shape:
                raise CheckpointMismatch(f"{name}: shape {arr.shape} != {self.params[name].shape}")
            self.params[name].data = np.asarray(arr, dtype=self.dtype).copy()

    def astype(self, dtype) -> "EmodNet":
        self.dtype = np.dtype(dtype)
        for p in self.params.values():
            p.data = p.data.astype(self.dtype)
            p.grad = None
        return self

    def train(self, mode=True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)

    # --------------------------------------------------------------- channels
    def register_channels(self, names: Sequence[str]) -> np.ndarray:
        for name in names:
            if name not in self.channel_registry:
                if len(self.channel_registry) >= self.config.max_channels:
                    raise InvalidConfig("channel embedding table is full", "max_channels")
                self.channel_registry[name] = len(self.channel_registry)
        return self.channel_ids(names)

    def channel_ids(self, names: Sequence[str]) -> np.ndarray:
        try:
            return np.array([self.channel_registry[n] for n in names], dtype=np.intp)
        except KeyError as exc:
            raise UnregisteredChannel(f"channel {exc.args[0]!r} not registered") from None

    # ---------------------------------------------------------------- encoder
    def _patches(self, x: np.ndarray) -> np.ndarray:
        """(B, C, T) -> (B, C, P, patch_length); the remainder is dropped."""
        p = self.config.patch_length
        b, c, t = x.shape
        n_tok = t // p
        if n_tok < 1:
            raise SegmentTooShort(f"{t} samples cannot fill one {p}-sample patch")
        if n_tok > self.config.max_tokens:
            raise SequenceTooLong(f"{n_tok} temporal tokens exceed max_tokens={self.config.max_tokens}")
        return x[:, :, : n_tok * p].reshape(b, c, n_tok, p)

    def _conv_branch(self, name: str, windows: np.ndarray) -> Tensor:
        """Conv(1 x k) -> GroupNorm -> GELU -> flatten -> Linear, per window."""
        cfg, prm = self.config, self.params
        lead = windows.shape[:-1]
        inp = Tensor(windows.reshape(-1, 1, 1, windows.shape[-1]).astype(self.dtype))
        h = ad.conv2d(inp, prm[f"{name}.conv.weight"], stride=(1, cfg.conv_stride), bias=prm[f"{name}.conv.bias"])
        h = ad.group_norm(h, cfg.gn_groups, prm[f"{name}.gn.weight"], prm[f"{name}.gn.bias"])
        h = ad.gelu(h)
        h = ad.reshape(h, (h.shape[0], -1))
        h = ad.linear(h, prm[f"{name}.proj.weight"], prm[f"{name}.proj.bias"])
        return ad.reshape(h, lead + (cfg.d,))

    def tokenize(self, x: np.ndarray) -> tuple[Tensor, Tensor]:
        """Temporal and spectral tokens, each (B, C, P, d)."""
        x = np.asarray(x)
        if x.ndim == 2:
            x = x[None]
        patches = self._patches(x)
        x_t = self._conv_branch("temporal", patches)
        x_f = self._conv_branch("spectral", window_fft_magnitude(patches))
        return x_t, x_f

    def fuse(self, x_t: Tensor, x_f: Tensor) -> Tensor:
        if x_t.shape != x_f.shape:
            raise ShapeMismatch(f"temporal {x_t.shape} vs spectral {x_f.shape}")
        return ad.linear(ad.concat([x_t, x_f], axis=-1), self.params["fuse.weight"], self.params["fuse.bias"])

    def add_channel_embedding(self, x_tf: Tensor, channel_ids) -> Tensor:
        ids = np.asarray(channel_ids, dtype=np.intp)
        if ids.shape[0] != x_tf.shape[-3]:
            raise ShapeMismatch(f"{len(ids)} channel ids for {x_tf.shape[-3]} channels")
        if ids.size and (ids.min() < 0 or ids.max() >= self.config.max_channels):
            raise UnregisteredChannel("channel id outside the embedding table")
        rows = ad.take(self.params["channel_embedding"], ids, axis=0)  # (C, d)
        return ad.add(x_tf, ad.reshape(rows, (len(ids), 1, self.config.d)))

    def _heads(self, x: Tensor) -> Tensor:
        """(..., L, d) -> (..., h, L, d_head)."""
        h = self.config.heads
        lead = x.shape[:-2]
        y = ad.reshape(x, lead + (x.shape[-2], h, self.config.d // h))
        n = y.ndim
        return ad.transpose(y, tuple(range(n - 3)) + (n - 2, n - 3, n - 1))

    def _merge(self, x: Tensor) -> Tensor:
        n = x.ndim
        y = ad.transpose(x, tuple(range(n - 3)) + (n - 2, n - 3, n - 1))
        return ad.reshape(y, y.shape[:-2] + (self.config.d,))

    def _attention(self, x: Tensor, prefix: str, bias: Tensor | None = None) -> Tensor:
        """Multi-head self-attention over the second-to-last axis of ``x``."""
        prm = self.params
        q = self._heads(ad.linear(x, prm[prefix + "q.weight"], prm[prefix + "q.bias"]))
        k = self._heads(ad.linear(x, prm[prefix + "k.weight"], prm[prefix + "k.bias"]))
        v = self._heads(ad.linear(x, prm[prefix + "v.weight"], prm[prefix + "v.bias"]))
        logits = ad.mul(ad.matmul(q, k.swapaxes(-1, -2)), 1.0 / np.sqrt(self.config.d // self.config.heads))
        if bias is not None:
            logits = ad.add(logits, bias)
        attn = ad.softmax(logits, axis=-1)
        out = self._merge(ad.matmul(attn, v))
        return ad.linear(out, prm[prefix + "o.weight"], prm[prefix + "o.bias"])

    def relative_bias(self, layer: int, n_tokens: int) -> Tensor:
        if n_tokens > self.config.max_tokens:
            raise SequenceTooLong(f"{n_tokens} > max_tokens={self.config.max_tokens}")
        idx = relative_bias_index(n_tokens, self.config.max_tokens)
        return ad.take(self.params[f"layers.{layer}.temporal.rel_bias"], idx, axis=0)

    def spatial_attention(self, h: Tensor, layer: int) -> Tensor:
        """Attention across channels at every time step; ``h`` is (..., C, P, d)."""
        n = h.ndim
        swap = tuple(range(n - 3)) + (n - 2, n - 3, n - 1)
        x = ad.transpose(h, swap)  # (..., P, C, d)
        out = self._attention(x, f"layers.{layer}.spatial.")
        return ad.transpose(out, swap)

    def temporal_attention(self, h: Tensor, layer: int) -> Tensor:
        """Attention across time within each channel, with relative bias ``R``."""
        return self._attention(h, f"layers.{layer}.temporal.", self.relative_bias(layer, h.shape[-2]))

    def _block(self, h: Tensor, layer: int) -> Tensor:
        prm, cfg = self.params, self.config
        p = f"layers.{layer}."
        for name, fn in (("spatial", self.spatial_attention), ("temporal", self.temporal_attention)):
            y = ad.layer_norm(h, prm[p + f"{name}.norm.weight"], prm[p + f"{name}.norm.bias"])
            h = ad.add(h, ad.dropout(fn(y, layer), cfg.dropout, self.rng, self.training))
        y = ad.layer_norm(h, prm[p + "ffn.norm.weight"], prm[p + "ffn.norm.bias"])
        y = ad.gelu(ad.linear(y, prm[p + "ffn.fc1.weight"], prm[p + "ffn.fc1.bias"]))
        y = ad.linear(y, prm[p + "ffn.fc2.weight"], prm[p + "ffn.fc2.bias"])
        return ad.add(h, ad.dropout(y, cfg.dropout, self.rng, self.training))

    def backbone(self, x: np.ndarray, channel_ids) -> tuple[Tensor, Tensor]:
        """Token outputs (B, C, P, d) and mean-pooled features (B, d)."""
        x_t, x_f = self.tokenize(x)
        h = self.add_channel_embedding(self.fuse(x_t, x_f), channel_ids)
        for layer in range(self.config.layers):
            h = self._block(h, layer)
        h = ad.layer_norm(h, self.params["final_norm.weight"], self.params["final_norm.bias"])
        return h, ad.mean(h, axis=(1, 2))

    def project(self, pooled: Tensor) -> Tensor:
        prm = self.params
        y = ad.gelu(ad.linear(pooled, prm["head.fc1.weight"], prm["head.fc1.bias"]))
        y = ad.linear(y, prm["head.fc2.weight"], prm["head.fc2.bias"])
        return ad.l2_normalize(y, axis=-1)

    def encode_array(self, x: np.ndarray, channels: Sequence[str]) -> tuple[Tensor, Tensor]:
        """Encode a same-montage stack (B, C, T); returns (tokens, z)."""
        tokens, pooled = self.backbone(x, self.channel_ids(channels))
        return tokens, self.project(pooled)

    # ----------------------------------------------------- grouped batch entry
    def _grouped(self, segments, fn) -> Tensor:
        groups: dict[tuple, list[int]] = {}
        for i, seg in enumerate(segments):
            groups.setdefault((seg.channels, seg.n_samples), []).append(i)
        outs, order = [], []
        for (channels, _), idx in groups.items():
            x = np.stack([segments[i].data for i in idx])
            outs.append(fn(x, self.channel_ids(channels)))
            order.extend(idx)
        out = outs[0] if len(outs) == 1 else ad.concat(outs, axis=0)
        if order != sorted(order):
            out = ad.take(out, np.argsort(order), axis=0)
        return out

    def pooled_features(self, segments) -> Tensor:
        """Mean-pooled backbone features (B, d) for segments of any montage."""
        return self._grouped(segments, lambda x, ids: self.backbone(x, ids)[1])

    def embed(self, segments) -> Tensor:
        """Unit-norm contrastive embeddings (B, projection_dim)."""
        return self.project(self.pooled_features(segments))

    def encode(self, segment) -> tuple[Tensor, Tensor]:
        """Single segment -> (tokens (C, P, d), z (projection_dim,))."""
        tokens, z = self.encode_array(segment.data[None], segment.channels)
        return ad.reshape(tokens, tokens.shape[1:]), ad.reshape(z, (z.shape[-1],))

    def config_json(self) -> str:
        return json.dumps({"model": self.config.to_dict(), "channels": self.channel_registry,
                           "dtype": self.dtype.name}, indent=2)


class LinearHead:
    """Linear classifier on pooled backbone features."""

    def __init__(self, in_dim: int, n_classes: int, seed=0, dtype=np.float32, zero=False):
        rng = np.random.default_rng(seed)
        w = np.zeros((in_dim, n_classes)) if zero else rng.standard_normal((in_dim, n_classes)) / np.sqrt(in_dim)
        self.weight = Tensor(w.astype(dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(n_classes, dtype=dtype), requires_grad=True)

    @property
    def n_classes(self):
        return self.weight.shape[1]

    def parameters(self):
        return [self.weight, self.bias]

    def named_parameters(self):
        return [("classifier.weight", self.weight), ("classifier.bias", self.bias)]

    def __call__(self, pooled: Tensor) -> Tensor:
        return classify(pooled, self)


def classify(pooled: Tensor, head: LinearHead) -> Tensor:
    if pooled.shape[-1] != head.weight.shape[0]:
        raise ShapeMismatch(f"pooled width {pooled.shape[-1]} != head input {head.weight.shape[0]}")
    return ad.linear(pooled, head.weight, head.bias)

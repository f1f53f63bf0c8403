"""scikit-learn style wrappers around preprocessing, pretraining and the linear head.

Inputs are ``(n_segments, n_channels, n_samples)`` arrays sharing one montage,
named by the ``channels`` parameter.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_is_fitted

from . import signal as sig
from .autodiff import Tensor, no_grad
from .dataio import DatasetManifest, EegDataset
from .exceptions import InvalidConfig, ShapeMismatch
from .model import EmodNet, ModelConfig, classify
from .training import TrainConfig, dataset_embeddings, dataset_features, finetune, pretrain
from .va_space import VA_MAX, VA_MIN, Continuous


def check_segments(X, n_channels: int | None = None) -> np.ndarray:
    """Validate a segment stack and return it as float array of shape (N, C, T)."""
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ShapeMismatch(f"expected (n_segments, n_channels, n_samples), got shape {X.shape}")
    if not np.issubdtype(X.dtype, np.number):
        raise ValueError(f"segments must be numeric, got {X.dtype}")
    if X.shape[0] == 0:
        raise ValueError("no segments given")
    if not np.all(np.isfinite(X)):
        raise ValueError("segments contain NaN or Inf")
    if n_channels is not None and X.shape[1] != n_channels:
        raise ShapeMismatch(f"{X.shape[1]} channels, estimator expects {n_channels}")
    return X.astype(np.float64 if X.dtype == np.float64 else np.float32, copy=False)


def check_va(y, n: int) -> np.ndarray:
    """Validate (N, 2) V-A targets inside the canonical square."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (n, 2):
        raise ShapeMismatch(f"expected V-A targets of shape ({n}, 2), got {y.shape}")
    if not np.all(np.isfinite(y)) or y.min() < VA_MIN or y.max() > VA_MAX:
        raise ValueError(f"V-A targets must lie in [{VA_MIN}, {VA_MAX}]")
    return y


def check_channels(channels, n_channels: int) -> list[str]:
    if channels is None:
        raise InvalidConfig("channels must name every input channel", "channels")
    channels = list(channels)
    if len(channels) != n_channels:
        raise ShapeMismatch(f"{len(channels)} channel names for {n_channels} channels")
    if len(set(channels)) != len(channels):
        raise InvalidConfig("channel names must be unique", "channels")
    return channels


def array_dataset(X, channels, sampling_rate: float, va=None, name: str = "array") -> EegDataset:
    """Wrap an array in an in-memory dataset; V-A targets become continuous labels."""
    X = check_segments(X, len(channels))
    scheme = {"type": "continuous", "valence_range": [VA_MIN, VA_MAX], "arousal_range": [VA_MIN, VA_MAX]}
    manifest = DatasetManifest(name, sampling_rate, list(channels), scheme, X.shape[2] / sampling_rate, f"{name}.seg")
    va = np.zeros((len(X), 2)) if va is None else check_va(va, len(X))
    labels = [Continuous(float(v), float(a), (VA_MIN, VA_MAX), (VA_MIN, VA_MAX)) for v, a in va]
    return EegDataset(manifest, X, np.zeros(len(X), dtype=np.int64), labels)


# ------------------------------------------------------------ preprocessing
class BandPassFilter(TransformerMixin, BaseEstimator):
    """Zero-phase Butterworth band-pass applied to each segment."""

    def __init__(self, sampling_rate=200.0, low_hz=sig.DEFAULT_LOW_HZ, high_hz=sig.DEFAULT_HIGH_HZ):
        self.sampling_rate = sampling_rate
        self.low_hz = low_hz
        self.high_hz = high_hz

    def fit(self, X, y=None):
        X = check_segments(X)
        self.n_channels_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_segments(X, self.n_channels_)
        names = [str(i) for i in range(X.shape[1])]
        out = [sig.bandpass(sig.RawRecording(names, self.sampling_rate, x), self.low_hz, self.high_hz).samples
               for x in X]
        return np.stack(out).astype(X.dtype)


class AverageReference(TransformerMixin, BaseEstimator):
    """Subtract the across-channel mean at every sample."""

    def fit(self, X, y=None):
        X = check_segments(X)
        self.n_channels_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_segments(X, self.n_channels_)
        names = [str(i) for i in range(X.shape[1])]
        return np.stack([sig.average_rereference(sig.RawRecording(names, 1.0, x)).samples for x in X]).astype(X.dtype)


# ---------------------------------------------------------------- backbone
class EmodPretrainer(TransformerMixin, BaseEstimator):
    """Contrastive pretraining on V-A targets; ``transform`` returns unit embeddings."""

    def __init__(self, channels=None, sampling_rate=200.0, profile="desk", variant="softva", epochs=100, m=4,
                 lr_max=5e-4, weight_decay=1e-4, tau=0.07, d_max=5.0, clip_norm=3.0, seed=0, model_params=None):
        self.channels = channels
        self.sampling_rate = sampling_rate
        self.profile = profile
        self.variant = variant
        self.epochs = epochs
        self.m = m
        self.lr_max = lr_max
        self.weight_decay = weight_decay
        self.tau = tau
        self.d_max = d_max
        self.clip_norm = clip_norm
        self.seed = seed
        self.model_params = model_params

    def _train_config(self) -> TrainConfig:
        return TrainConfig(lr_max=self.lr_max, weight_decay=self.weight_decay, epochs=self.epochs, m=self.m,
                           tau=self.tau, d_max=self.d_max, clip_norm=self.clip_norm, seed=self.seed,
                           variant=self.variant)

    def _new_model(self) -> EmodNet:
        config = ModelConfig.from_profile(self.profile, **(self.model_params or {}))
        return EmodNet(config, seed=self.seed)

    def fit(self, X, y):
        X = check_segments(X)
        channels = check_channels(self.channels, X.shape[1])
        ds = array_dataset(X, channels, self.sampling_rate, y)
        cfg = self._train_config()
        self.model_ = self._new_model()
        self.model_.register_channels(channels)
        if cfg.variant == "scratch":
            self.log_ = []
        else:
            self.log_ = pretrain([ds], self.model_, cfg).log
        self.n_channels_ = X.shape[1]
        return self

    def _dataset(self, X):
        check_is_fitted(self)
        X = check_segments(X, self.n_channels_)
        return array_dataset(X, self.channels, self.sampling_rate)

    def transform(self, X):
        """Unit-norm contrastive embeddings, shape (N, projection_dim)."""
        return dataset_embeddings(self.model_, self._dataset(X))

    def pooled(self, X):
        """Pooled backbone features, shape (N, d)."""
        return dataset_features(self.model_, self._dataset(X))


class EmodClassifier(ClassifierMixin, BaseEstimator):
    """Linear head on pooled backbone features, selected by validation Kappa.

    ``backbone`` may be a fitted :class:`EmodPretrainer`; otherwise a fresh
    randomly initialised model is used.
    """

    def __init__(self, channels=None, sampling_rate=200.0, backbone=None, profile="desk", epochs=30, lr=1e-4,
                 batch_size=64, freeze_backbone=False, validation_fraction=0.0, seed=0):
        self.channels = channels
        self.sampling_rate = sampling_rate
        self.backbone = backbone
        self.profile = profile
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.freeze_backbone = freeze_backbone
        self.validation_fraction = validation_fraction
        self.seed = seed

    def fit(self, X, y):
        X = check_segments(X)
        channels = check_channels(self.channels, X.shape[1])
        y = np.asarray(y)
        if len(y) != len(X):
            raise ShapeMismatch(f"{len(y)} targets for {len(X)} segments")
        self.label_encoder_ = LabelEncoder().fit(y)
        self.classes_ = self.label_encoder_.classes_
        codes = self.label_encoder_.transform(y)
        if self.backbone is not None:
            check_is_fitted(self.backbone)
            model = EmodNet(self.backbone.model_.config, seed=self.seed)
            model.load_state_dict(self.backbone.model_.state_dict())
            model.channel_registry = dict(self.backbone.model_.channel_registry)
        else:
            model = EmodNet(ModelConfig.from_profile(self.profile), seed=self.seed)
        model.register_channels(channels)
        ds = array_dataset(X, channels, self.sampling_rate)
        train, val, y_train, y_val = ds, None, codes, None
        if self.validation_fraction > 0:
            order = np.random.default_rng(self.seed).permutation(len(X))
            n_val = max(1, int(round(self.validation_fraction * len(X))))
            train, val = ds.subset(order[n_val:]), ds.subset(order[:n_val])
            y_train, y_val = codes[order[n_val:]], codes[order[:n_val]]
        cfg = TrainConfig(finetune_lr=self.lr, finetune_epochs=self.epochs, finetune_batch=self.batch_size,
                          freeze_backbone=self.freeze_backbone, seed=self.seed)
        result = finetune(train, y_train, model, cfg, val, y_val, n_classes=len(self.classes_))
        self.model_, self.head_ = model, result.head
        self.history_, self.best_epoch_ = result.history, result.best_epoch
        self.n_channels_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self)
        X = check_segments(X, self.n_channels_)
        feats = dataset_features(self.model_, array_dataset(X, self.channels, self.sampling_rate))
        with no_grad():
            return classify(Tensor(feats.astype(self.model_.dtype)), self.head_).data

    def predict_proba(self, X):
        logits = self.decision_function(X).astype(np.float64)
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

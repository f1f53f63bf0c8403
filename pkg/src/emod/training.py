"""Pretraining and fine-tuning loops."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .config import from_dict as config_from_dict
from .dataio import EegDataset
from .exceptions import CheckpointMismatch, DegenerateBatch, InvalidConfig
from .metrics import confusion_matrix, report, spearman_probe
from .model import EmodNet, LinearHead, ModelConfig, classify
from .objectives import LossConfig, Variant, augment_segment, cross_entropy, loss_for_variant
from .optim import AdamW, clip_, cosine_lr
from .sampler import RegionBalancedSampler, UniformSampler, build_index

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr_max: float = 5e-4
    lr_min: float = 1e-7
    weight_decay: float = 1e-4
    epochs: int = 100
    steps_per_epoch: int = 1
    clip_norm: float = 3.0
    m: int = 4
    tau: float = 0.07
    d_max: float = 5.0
    seed: int = 0
    variant: str = "softva"
    checkpoint: str | None = None
    log_path: str | None = None
    probe_every: int = 1
    max_degenerate: int = 10
    finetune_lr: float = 1e-4
    finetune_epochs: int = 30
    finetune_batch: int = 64
    freeze_backbone: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        try:
            self.variant = Variant(self.variant).value
        except ValueError:
            raise InvalidConfig(f"unknown variant {self.variant!r}", "variant") from None
        if not self.lr_min < self.lr_max:
            raise InvalidConfig("lr_min must be below lr_max", "lr_min")
        if not self.clip_norm > 0:
            raise InvalidConfig("clip_norm must be positive", "clip_norm")
        if self.m < 1:
            raise InvalidConfig("m must be >= 1", "m")
        if self.epochs < 0 or self.finetune_epochs < 0:
            raise InvalidConfig("epochs must be non-negative", "epochs")
        if self.steps_per_epoch < 1:
            raise InvalidConfig("steps_per_epoch must be >= 1", "steps_per_epoch")
        if self.dtype not in ("float32", "float64"):
            raise InvalidConfig("dtype must be float32 or float64", "dtype")

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        return config_from_dict(cls, raw, "train")

    @property
    def loss(self) -> LossConfig:
        return LossConfig(self.tau, self.d_max, self.variant)


# ------------------------------------------------------------------ helpers
def register_datasets(model: EmodNet, datasets: Sequence[EegDataset]):
    for ds in datasets:
        model.register_channels(ds.channels)


def pooled_for_indices(model: EmodNet, datasets: Sequence[EegDataset], ds_idx, seg_idx, transform=None) -> Tensor:
    """Pooled backbone features for (dataset, segment) pairs, in the given order."""
    ds_idx = np.asarray(ds_idx)
    seg_idx = np.asarray(seg_idx)
    outs, order = [], []
    for d in np.unique(ds_idx):
        pos = np.flatnonzero(ds_idx == d)
        ds = datasets[d]
        x = ds.data[seg_idx[pos]]
        if transform is not None:
            x = transform(x)
        outs.append(model.backbone(x.astype(model.dtype), model.channel_ids(ds.channels))[1])
        order.extend(pos.tolist())
    out = outs[0] if len(outs) == 1 else ad.concat(outs, axis=0)
    if order != sorted(order):
        out = ad.take(out, np.argsort(order), axis=0)
    return out


def dataset_features(model: EmodNet, ds: EegDataset, batch: int = 256, project=False) -> np.ndarray:
    """Inference-mode pooled features (or unit embeddings when ``project``)."""
    was = model.training
    model.eval()
    out = []
    ids = model.channel_ids(ds.channels)
    with no_grad():
        for start in range(0, len(ds), batch):
            x = ds.data[start : start + batch].astype(model.dtype)
            pooled = model.backbone(x, ids)[1]
            out.append((model.project(pooled) if project else pooled).data)
    model.train(was)
    return np.concatenate(out, axis=0) if out else np.zeros((0, model.config.d))


def dataset_embeddings(model: EmodNet, ds: EegDataset, batch: int = 256) -> np.ndarray:
    return dataset_features(model, ds, batch, project=True)


def probe_correlation(model: EmodNet, probe: EegDataset) -> float:
    return spearman_probe(dataset_embeddings(model, probe), probe.va)


# ---------------------------------------------------------------- pretrain
@dataclass
class PretrainResult:
    log: list = field(default_factory=list)
    checkpoint: str | None = None

    @property
    def losses(self):
        return [r["loss"] for r in self.log if r.get("loss") is not None]


def _augment_batch(x: np.ndarray, rng) -> np.ndarray:
    return np.stack([augment_segment(seg, rng) for seg in x]).astype(x.dtype)


def pretrain(datasets: Sequence[EegDataset], model: EmodNet, cfg: TrainConfig, probe: EegDataset | None = None,
             callback=None) -> PretrainResult:
    """Contrastive pretraining with cosine-scheduled AdamW and global-norm clipping.

    One log record per optimizer step: ``{step, epoch, lr, loss, grad_norm,
    spearman, wall_ms}``; ``spearman`` is filled on probe epochs only.
    """
    if not datasets:
        raise InvalidConfig("pretraining needs at least one dataset", "datasets")
    variant = Variant(cfg.variant)
    if variant in (Variant.SCRATCH, Variant.CROSS_ENTROPY):
        raise InvalidConfig(f"variant {variant.value} does not pretrain", "variant")
    register_datasets(model, datasets)
    index = build_index({ds.name: ds.va for ds in datasets})
    va_lists = [ds.va for ds in datasets]
    if variant is Variant.AUGMENT:
        sampler = UniformSampler(index, va_lists, index.batch_size(cfg.m), seed=cfg.seed)
    else:
        sampler = RegionBalancedSampler(index, va_lists, cfg.m, seed=cfg.seed)
    aug_rng = np.random.default_rng([cfg.seed, 7])
    params = model.parameters()
    opt = AdamW(params, lr=cfg.lr_max, weight_decay=cfg.weight_decay)
    result = PretrainResult()
    log_file = open(cfg.log_path, "w") if cfg.log_path else None
    degenerate = 0
    step = 0
    model.train()
    try:
        for epoch in range(cfg.epochs):
            # last epoch runs at lr_min
            opt.lr = cosine_lr(epoch, max(cfg.epochs - 1, 1), cfg.lr_max, cfg.lr_min)
            for _ in range(cfg.steps_per_epoch):
                t0 = time.perf_counter()
                batch = sampler.next_batch()
                loss_val, norm = None, None
                try:
                    if variant is Variant.AUGMENT:
                        va = lambda x: _augment_batch(x, aug_rng)  # noqa: E731
                        p1 = pooled_for_indices(model, datasets, batch.dataset, batch.segment, va)
                        p2 = pooled_for_indices(model, datasets, batch.dataset, batch.segment, va)
                        z = model.project(ad.concat([p1, p2], axis=0))
                        loss = loss_for_variant(variant, z, cfg=cfg.loss)
                    else:
                        z = model.project(pooled_for_indices(model, datasets, batch.dataset, batch.segment))
                        loss = loss_for_variant(variant, z, batch.va_points, cfg.loss)
                except DegenerateBatch:
                    degenerate += 1
                    if degenerate >= cfg.max_degenerate:
                        raise
                    logger.warning("degenerate batch at step %d skipped", step)
                else:
                    degenerate = 0
                    opt.zero_grad()
                    loss.backward()
                    norm = clip_(params, cfg.clip_norm)
                    opt.step()
                    loss_val = loss.item()
                rec = {"step": step, "epoch": epoch, "lr": opt.lr, "loss": loss_val, "grad_norm": norm,
                       "spearman": None, "wall_ms": 1e3 * (time.perf_counter() - t0)}
                result.log.append(rec)
                step += 1
            if probe is not None and (epoch % cfg.probe_every == 0 or epoch == cfg.epochs - 1):
                result.log[-1]["spearman"] = probe_correlation(model, probe)
            if log_file:
                for rec in result.log[-cfg.steps_per_epoch :]:
                    log_file.write(json.dumps(_log_record(rec)) + "\n")
            if callback is not None:
                callback(epoch, result)
    finally:
        if log_file:
            log_file.close()
    if cfg.checkpoint:
        save_model(cfg.checkpoint, model)
        result.checkpoint = cfg.checkpoint
    return result


def _log_record(rec: dict) -> dict:
    keys = ("step", "epoch", "lr", "loss", "spearman", "wall_ms")
    return {k: rec[k] for k in keys}


# ---------------------------------------------------------------- finetune
@dataclass
class FinetuneResult:
    head: LinearHead
    history: list
    best_epoch: int
    best_metrics: dict


def predict_logits(model: EmodNet, head: LinearHead, ds: EegDataset, features: np.ndarray | None = None) -> np.ndarray:
    if features is None:
        features = dataset_features(model, ds)
    with no_grad():
        return classify(Tensor(features.astype(model.dtype)), head).data


def evaluate(model: EmodNet, head: LinearHead, ds: EegDataset, targets, features=None) -> dict:
    pred = predict_logits(model, head, ds, features).argmax(axis=1)
    return report(confusion_matrix(targets, pred, head.n_classes))


def finetune(train: EegDataset, y_train, model: EmodNet, cfg: TrainConfig, val: EegDataset | None = None,
             y_val=None, n_classes: int | None = None) -> FinetuneResult:
    """Append a zero-initialised linear head and train with cross-entropy.

    The backbone is optimised too unless ``cfg.freeze_backbone``. After each
    epoch the validation split is scored and the epoch with the highest
    Kappa is kept; model and head are restored to that state.
    """
    y_train = np.asarray(y_train, dtype=np.intp)
    k = n_classes or int(y_train.max()) + 1
    model.register_channels(train.channels)
    if val is None:
        val, y_val = train, y_train
    else:
        model.register_channels(val.channels)
    y_val = np.asarray(y_val, dtype=np.intp)
    head = LinearHead(model.config.d, k, seed=cfg.seed, dtype=model.dtype, zero=True)
    frozen = cfg.freeze_backbone
    train_feats = dataset_features(model, train) if frozen else None
    val_feats = dataset_features(model, val) if frozen else None
    params = head.parameters() + ([] if frozen else model.parameters())
    opt = AdamW(params, lr=cfg.finetune_lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng([cfg.seed, 11])
    ids = model.channel_ids(train.channels)

    def score():
        feats = val_feats if frozen else dataset_features(model, val)
        return evaluate(model, head, val, y_val, feats)

    best = score()
    history = [{"epoch": 0, **{m: best[m] for m in ("bacc", "kappa", "wf1")}}]
    best_epoch = 0
    best_state = (model.state_dict() if not frozen else None, head.weight.data.copy(), head.bias.data.copy())
    for epoch in range(1, cfg.finetune_epochs + 1):
        lr = cosine_lr(epoch - 1, cfg.finetune_epochs, cfg.finetune_lr, min(cfg.lr_min, cfg.finetune_lr / 10))
        opt.lr = lr
        model.train(not frozen)
        order = rng.permutation(len(train))
        for start in range(0, len(order), cfg.finetune_batch):
            idx = order[start : start + cfg.finetune_batch]
            if frozen:
                pooled = Tensor(train_feats[idx].astype(model.dtype))
            else:
                pooled = model.backbone(train.data[idx].astype(model.dtype), ids)[1]
            loss = cross_entropy(head(pooled), y_train[idx])
            opt.zero_grad()
            loss.backward()
            clip_(params, cfg.clip_norm)
            opt.step()
        model.eval()
        metrics = score()
        history.append({"epoch": epoch, **{m: metrics[m] for m in ("bacc", "kappa", "wf1")}})
        if metrics["kappa"] > best["kappa"]:
            best, best_epoch = metrics, epoch
            best_state = (model.state_dict() if not frozen else None, head.weight.data.copy(), head.bias.data.copy())
    state, w, b = best_state
    if state is not None:
        model.load_state_dict(state)
    head.weight.data, head.bias.data = w, b
    model.eval()
    return FinetuneResult(head, history, best_epoch, best)


# ------------------------------------------------------------ checkpoints
def save_model(path, model: EmodNet, head: LinearHead | None = None):
    """Write the EMODCKPT parameter file plus ``<path>.json`` with config and montage registry."""
    params = model.state_dict()
    meta = json.loads(model.config_json())
    if head is not None:
        params.update({n: t.data for n, t in head.named_parameters()})
        meta["n_classes"] = head.n_classes
    ad.save_checkpoint(path, params)
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2))


def load_model(path, dtype=None) -> tuple[EmodNet, LinearHead | None]:
    meta_path = Path(str(path) + ".json")
    if not meta_path.exists():
        raise CheckpointMismatch(f"missing config file {meta_path}")
    meta = json.loads(meta_path.read_text())
    config = ModelConfig.from_dict(meta["model"])
    dtype = np.dtype(dtype or meta.get("dtype", "float32"))
    model = EmodNet(config, dtype=dtype)
    model.channel_registry = {k: int(v) for k, v in meta.get("channels", {}).items()}
    params = ad.load_checkpoint(path)
    head = None
    if "classifier.weight" in params:
        w = params.pop("classifier.weight")
        b = params.pop("classifier.bias")
        head = LinearHead(w.shape[0], w.shape[1], dtype=dtype, zero=True)
        head.weight.data = w.astype(dtype)
        head.bias.data = b.astype(dtype)
    model.load_state_dict(params)
    model.eval()
    return model, head

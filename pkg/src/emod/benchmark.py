"""Desk-scale synthetic benchmark for the four pretraining arms.

Two synthetic corpora (one continuous, one discrete-9, different montages)
are used for pretraining; a third held-out continuous dataset provides the
4-class quadrant task, scored with a linear probe on frozen features.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataio import STANDARD_CHANNELS, EegDataset, SyntheticSpec, generate_synthetic, quadrant_labels
from .model import EmodNet, ModelConfig
from .training import TrainConfig, evaluate, finetune, pretrain, probe_correlation

ARMS = ("scratch", "augment", "hardva", "softva")

# Locked after the calibration run stored in benchmarks/calibration.json.
MIN_GAIN_OVER_SCRATCH = 0.10
MIN_GAIN_OVER_AUGMENT = 0.03
MIN_PROBE_RHO = 0.4
MIN_PROBE_GAIN = 0.3


@dataclass
class DeskBenchmark:
    pretrain_segments: int = 1500
    heldout_segments: int = 600
    snr: float = 1.0
    segment_seconds: float = 4.0
    epochs: int = 200
    m: int = 2
    probe_epochs: int = 100
    probe_lr: float = 1e-2
    seeds: tuple = (0, 1, 2, 3, 4)
    model_overrides: dict = field(default_factory=dict)

    def datasets(self, seed: int) -> tuple[list[EegDataset], EegDataset]:
        ch = list(STANDARD_CHANNELS)
        common = dict(snr=self.snr, segment_seconds=self.segment_seconds)
        a = generate_synthetic(SyntheticSpec("synth_a", n_segments=self.pretrain_segments, channels=8,
                                             channel_names=ch[:8], seed=100 + seed, **common))
        b = generate_synthetic(SyntheticSpec("synth_b", n_segments=self.pretrain_segments, channels=6,
                                             channel_names=ch[2:8], seed=200 + seed, label_mode="discrete-9", **common))
        held = generate_synthetic(SyntheticSpec("synth_heldout", n_segments=self.heldout_segments, channels=8,
                                                channel_names=ch[:8], seed=300 + seed, **common))
        return [a, b], held

    def train_config(self, variant: str, seed: int) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, m=self.m, seed=seed, variant="softva" if variant == "scratch" else variant,
                           probe_every=max(1, self.epochs // 4), freeze_backbone=True, finetune_lr=self.probe_lr,
                           finetune_epochs=self.probe_epochs)

    def run_arm(self, variant: str, seed: int, data=None) -> dict:
        """Pretrain (unless scratch), then linear-probe the quadrant task."""
        t0 = time.perf_counter()
        sources, held = data or self.datasets(seed)
        y = quadrant_labels(held.va)
        n = len(held) // 3
        train, val, test = held.subset(range(n)), held.subset(range(n, 2 * n)), held.subset(range(2 * n, len(held)))
        model = EmodNet(ModelConfig.desk(**self.model_overrides), seed=seed)
        model.register_channels(held.channels)
        cfg = self.train_config(variant, seed)
        rho_init = probe_correlation(model, test)
        final_loss = None
        if variant != "scratch":
            res = pretrain(sources, model, cfg)
            final_loss = float(np.mean(res.losses[-20:]))
        rho = probe_correlation(model, test)
        ft = finetune(train, y[:n], model, cfg, val, y[n : 2 * n], n_classes=4)
        metrics = evaluate(model, ft.head, test, y[2 * n :])
        return {"variant": variant, "seed": seed, "bacc": metrics["bacc"], "kappa": metrics["kappa"],
                "wf1": metrics["wf1"], "spearman": rho, "spearman_init": rho_init, "final_loss": final_loss,
                "best_epoch": ft.best_epoch, "seconds": time.perf_counter() - t0}

    def run(self, arms=ARMS, progress=None) -> dict:
        rows = []
        for seed in self.seeds:
            data = self.datasets(seed)
            for arm in arms:
                row = self.run_arm(arm, seed, data)
                rows.append(row)
                if progress:
                    progress(row)
        return summarize(rows, self)


def summarize(rows: list, bench: DeskBenchmark | None = None) -> dict:
    arms = sorted({r["variant"] for r in rows}, key=lambda a: ARMS.index(a) if a in ARMS else 99)
    mean = {a: {k: float(np.mean([r[k] for r in rows if r["variant"] == a]))
                for k in ("bacc", "kappa", "wf1", "spearman", "spearman_init")} for a in arms}
    return {"config": asdict(bench) if bench else None, "rows": rows, "mean": mean}


def check(summary: dict) -> dict:
    """Evaluate the benchmark contract; returns criterion name -> (passed, detail)."""
    m = summary["mean"]
    soft, hard, aug, scratch = (m[a] for a in ("softva", "hardva", "augment", "scratch"))
    return {
        "softva_beats_scratch": (soft["bacc"] - scratch["bacc"] >= MIN_GAIN_OVER_SCRATCH,
                                 f"{soft['bacc']:.4f} - {scratch['bacc']:.4f}"),
        "order_softva_hardva_augment": (soft["bacc"] >= hard["bacc"] >= aug["bacc"],
                                        f"{soft['bacc']:.4f} >= {hard['bacc']:.4f} >= {aug['bacc']:.4f}"),
        "softva_beats_augment": (soft["bacc"] - aug["bacc"] >= MIN_GAIN_OVER_AUGMENT,
                                 f"{soft['bacc']:.4f} - {aug['bacc']:.4f}"),
        "probe_rho": (soft["spearman"] >= MIN_PROBE_RHO, f"{soft['spearman']:.4f}"),
        "probe_gain": (soft["spearman"] - soft["spearman_init"] >= MIN_PROBE_GAIN,
                       f"{soft['spearman']:.4f} - {soft['spearman_init']:.4f}"),
    }


def dump(summary: dict, path):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2)

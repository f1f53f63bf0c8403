"""Command-line entry point: ``emod {synth,pretrain,finetune,eval,embed,gradcheck}``.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .dataio import SyntheticSpec, generate_synthetic, quadrant_labels, read_dataset
from .exceptions import EmodError, InvalidConfig
from .metrics import confusion_matrix, report
from .model import EmodNet, ModelConfig
from .objectives import Variant
from .training import TrainConfig, dataset_embeddings, evaluate, finetune, load_model, pretrain, save_model

log = logging.getLogger("emod")

CONFIG_SECTIONS = ("model", "train")


class ConfigError(Exception):
    def __init__(self, message, field):
        super().__init__(message)
        self.field = field


def _read_json(path, what="--config"):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}", what) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}", what) from None


def load_run_config(args) -> tuple[ModelConfig, TrainConfig]:
    """Merge ``--config`` JSON (sections ``model`` and ``train``) with command-line flags."""
    raw = _read_json(args.config) if args.config else {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object", "config")
    for key in raw:
        if key not in CONFIG_SECTIONS:
            raise ConfigError(f"unknown config section {key!r}", key)
    train_raw = dict(raw.get("train", {}))
    if args.seed is not None:
        train_raw["seed"] = args.seed
    if getattr(args, "variant", None):
        train_raw["variant"] = args.variant
    train = TrainConfig.from_dict(train_raw)
    profile = getattr(args, "profile", None) or "desk"
    base = ModelConfig.from_profile(profile).to_dict()
    model_raw = raw.get("model", {})
    if not isinstance(model_raw, dict):
        raise ConfigError("model section must be a JSON object", "model")
    model = ModelConfig.from_dict({**base, **model_raw})
    return model, train


def _labels(ds, task: str) -> tuple[np.ndarray, int]:
    if task == "auto":
        task = "category" if ds.manifest.discrete else "quadrant"
    if task == "quadrant":
        return quadrant_labels(ds.va), 4
    if task == "category":
        if not ds.manifest.discrete:
            raise ConfigError("task 'category' needs a discrete dataset", "task")
        cats = ds.manifest.label_scheme["categories"]
        return np.array([cats.index(lbl.category) for lbl in ds.labels]), len(cats)
    raise ConfigError(f"unknown task {task!r}", "task")


def _write_json(path, obj):
    text = json.dumps(obj, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


# ---------------------------------------------------------------- commands
def cmd_synth(args) -> int:
    raw = _read_json(args.config)
    specs = raw.get("datasets", [raw]) if isinstance(raw, dict) else raw
    if not isinstance(specs, list):
        raise ConfigError("'datasets' must be a list of synthetic specs", "datasets")
    for k, spec_raw in enumerate(specs):
        if not isinstance(spec_raw, dict):
            raise ConfigError(f"datasets[{k}] must be a JSON object", f"datasets[{k}]")
        spec_raw = dict(spec_raw)
        if args.seed is not None:
            spec_raw["seed"] = args.seed + k
        spec = SyntheticSpec.from_dict(spec_raw)
        ds = generate_synthetic(spec, args.out)
        log.info("wrote %s: %d segments x %d channels", spec.name, len(ds), len(ds.channels))
        print(str(Path(args.out) / f"{spec.name}.json"))
    return 0


def cmd_pretrain(args) -> int:
    model_cfg, cfg = load_run_config(args)
    cfg.checkpoint = args.out
    cfg.log_path = args.log or str(args.out) + ".ndjson"
    datasets = [read_dataset(p) for p in args.data]
    probe = read_dataset(args.probe) if args.probe else None
    model = EmodNet(model_cfg, seed=cfg.seed, dtype=np.dtype(cfg.dtype))
    if cfg.variant == Variant.SCRATCH.value:
        for ds in datasets:
            model.register_channels(ds.channels)
        save_model(args.out, model)
        Path(cfg.log_path).write_text("")
        log.info("scratch: saved randomly initialised model to %s", args.out)
        return 0

    def progress(epoch, result):
        rec = result.log[-1]
        log.info("epoch %d lr %.2e loss %s", epoch, rec["lr"], rec["loss"])

    result = pretrain(datasets, model, cfg, probe, progress)
    log.info("final loss %.4f, checkpoint %s", result.losses[-1] if result.losses else float("nan"), args.out)
    return 0


def cmd_finetune(args) -> int:
    model_cfg, cfg = load_run_config(args)
    if args.checkpoint:
        model, _ = load_model(args.checkpoint, cfg.dtype)
    else:
        model = EmodNet(model_cfg, seed=cfg.seed, dtype=np.dtype(cfg.dtype))
    train = read_dataset(args.data)
    y_train, k = _labels(train, args.task)
    val, y_val = None, None
    if args.val:
        val = read_dataset(args.val)
        y_val, _ = _labels(val, args.task)
    result = finetune(train, y_train, model, cfg, val, y_val, n_classes=k)
    save_model(args.out, model, result.head)
    _write_json(args.metrics, {"best_epoch": result.best_epoch, "best": result.best_metrics,
                               "history": result.history})
    return 0


def cmd_eval(args) -> int:
    if args.predictions:
        raw = _read_json(args.predictions, "--predictions")
        try:
            y_true, y_pred = np.asarray(raw["y_true"], dtype=int), np.asarray(raw["y_pred"], dtype=int)
        except (KeyError, TypeError, ValueError):
            raise ConfigError("predictions file needs integer lists 'y_true' and 'y_pred'", "predictions") from None
        if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size == 0:
            raise ConfigError("'y_true' and 'y_pred' must be equal-length non-empty lists", "predictions")
        if min(y_true.min(), y_pred.min()) < 0:
            raise ConfigError("class ids must be non-negative", "predictions")
        metrics = report(confusion_matrix(y_true, y_pred))
    else:
        if not (args.checkpoint and args.data):
            raise ConfigError("eval needs --checkpoint and --data, or --predictions", "checkpoint")
        model, head = load_model(args.checkpoint)
        if head is None:
            raise ConfigError("checkpoint has no classifier head; run finetune first", "checkpoint")
        ds = read_dataset(args.data)
        model.register_channels(ds.channels)
        y, _ = _labels(ds, args.task)
        metrics = evaluate(model, head, ds, y)
    _write_json(args.out, metrics)
    return 0


def cmd_embed(args) -> int:
    model, _ = load_model(args.checkpoint)
    ds = read_dataset(args.data)
    model.register_channels(ds.channels)
    z = dataset_embeddings(model, ds)
    va = ds.va
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(["id", "subject", "valence", "arousal"] + [f"z{j}" for j in range(z.shape[1])])
        for i in range(len(ds)):
            writer.writerow([i, int(ds.subjects[i]), repr(float(va[i, 0])), repr(float(va[i, 1]))]
                            + [repr(float(v)) for v in z[i]])
    finally:
        if args.out:
            out.close()
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_suite

    results = run_suite(range(args.seeds))
    worst: dict[str, float] = {}
    for r in results:
        worst[r.name] = max(worst.get(r.name, 0.0), r.error)
    failed = sorted({r.name for r in results if not r.passed})
    for name in sorted(worst):
        print(f"{'FAIL' if name in failed else 'ok  '} {name:<14} worst rel err {worst[name]:.2e}")
    print(f"{len(results)} checks over {args.seeds} seeds, {len(failed)} op(s) failing")
    return 1 if failed else 0


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emod", description="V-A contrastive EEG pretraining toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, variant=False):
        p.add_argument("--config", help="JSON config with optional 'model' and 'train' sections")
        p.add_argument("--seed", type=int)
        p.add_argument("--profile", choices=("desk", "paper"), default="desk")
        if variant:
            p.add_argument("--variant", choices=("softva", "hardva", "augment", "scratch"))

    p = sub.add_parser("synth", help="generate synthetic datasets from a spec JSON")
    p.add_argument("--config", required=True, help="synthetic spec, or {\"datasets\": [spec, ...]}")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pretrain", help="contrastive pretraining")
    common(p, variant=True)
    p.add_argument("--data", nargs="+", required=True, help="dataset manifest(s)")
    p.add_argument("--probe", help="manifest used for the Spearman probe")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="NDJSON log path (default <out>.ndjson)")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="train a linear head (and the backbone)")
    common(p)
    p.add_argument("--checkpoint", help="pretrained checkpoint; random init when omitted")
    p.add_argument("--data", required=True)
    p.add_argument("--val")
    p.add_argument("--task", default="auto", choices=("auto", "quadrant", "category"))
    p.add_argument("--out", required=True, help="fine-tuned checkpoint path")
    p.add_argument("--metrics", help="write training metrics JSON here")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("eval", help="metrics JSON for a fine-tuned checkpoint or a predictions file")
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--predictions", help="JSON with 'y_true' and 'y_pred'")
    p.add_argument("--task", default="auto", choices=("auto", "quadrant", "category"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("embed", help="CSV of unit embeddings with V-A columns")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--seeds", type=int, default=100)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, InvalidConfig) as exc:
        print(f"emod: config error in field '{exc.field}': {exc}", file=sys.stderr)
        return 2
    except (EmodError, OSError, ValueError) as exc:
        print(f"emod: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Valence-arousal contrastive pretraining for heterogeneous EEG."""

from .autodiff import Tensor, no_grad
from .dataio import DatasetManifest, EegDataset, SyntheticSpec, generate_synthetic, read_dataset, write_dataset
from .estimators import AverageReference, BandPassFilter, EmodClassifier, EmodPretrainer
from .exceptions import EmodError
from .metrics import bacc, kappa, spearman_probe, weighted_f1
from .model import EmodNet, ModelConfig
from .training import TrainConfig, finetune, pretrain

__version__ = "0.1.0"

__all__ = [
    "AverageReference",
    "BandPassFilter",
    "DatasetManifest",
    "EegDataset",
    "EmodClassifier",
    "EmodError",
    "EmodNet",
    "EmodPretrainer",
    "ModelConfig",
    "SyntheticSpec",
    "Tensor",
    "TrainConfig",
    "bacc",
    "finetune",
    "generate_synthetic",
    "kappa",
    "no_grad",
    "pretrain",
    "read_dataset",
    "spearman_probe",
    "weighted_f1",
    "write_dataset",
]

"""Symbolic indoor positioning from serving-cell LTE fingerprints.

One denoising autoencoder per room; a fingerprint belongs to the room whose
autoencoder reconstructs it best.
"""
from .dataset import (
    DatasetSplit,
    Fingerprint,
    NormalizationParams,
    SpaceLabel,
    apply_normalizer,
    combine_and_split,
    extract_features,
    fit_normalizer,
    parse_csv,
    synth_generate,
)
from .ensemble import (
    EnsembleModel,
    PosteriorDistribution,
    corrupt,
    posterior,
    predict,
    predict_batch,
    reconstruction_losses,
    train_ensemble,
)
from .metrics import confusion, kendall, report, spearman
from .nn import DenseNet, LayerSpec, TrainConfig, init_network

__version__ = "0.1.0"

__all__ = [
    "DatasetSplit",
    "DenseNet",
    "EnsembleModel",
    "Fingerprint",
    "LayerSpec",
    "NormalizationParams",
    "PosteriorDistribution",
    "SpaceLabel",
    "TrainConfig",
    "apply_normalizer",
    "combine_and_split",
    "confusion",
    "corrupt",
    "extract_features",
    "fit_normalizer",
    "init_network",
    "kendall",
    "parse_csv",
    "posterior",
    "predict",
    "predict_batch",
    "reconstruction_losses",
    "report",
    "spearman",
    "synth_generate",
    "train_ensemble",
]

"""Correlation-supervised transformer for unsupervised image anomaly detection, at desk scale."""

from .banks import ReferenceBank, build_bank_source
from .config import RunConfig, load_config, parse_config
from .data import SyntheticSpec, generate_dataset
from .features import FeatureSequence, extract_features
from .model import LevelModel, ModelConfig, forward
from .pipeline import evaluate
from .scoring import auroc, patch_scores
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "FeatureSequence",
    "LevelModel",
    "ModelConfig",
    "ReferenceBank",
    "RunConfig",
    "SyntheticSpec",
    "TrainConfig",
    "auroc",
    "build_bank_source",
    "evaluate",
    "extract_features",
    "forward",
    "generate_dataset",
    "load_config",
    "parse_config",
    "patch_scores",
    "train",
]

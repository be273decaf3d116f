"""Depth-image channel estimator feeding the lab harness via .vvdest files."""

from .data import HORIZONS, Dataset, build_dataset, merge_datasets
from .model import PARAM_COUNT, build_model, parameter_count
from .preprocess import (
    cir_to_real,
    denormalize,
    fit_norm_constant,
    normalize,
    preprocess_image,
    real_to_cir,
)
from .training import TrainConfig, TrainedModel, train

__all__ = [
    "HORIZONS",
    "Dataset",
    "build_dataset",
    "merge_datasets",
    "PARAM_COUNT",
    "build_model",
    "parameter_count",
    "cir_to_real",
    "denormalize",
    "fit_norm_constant",
    "normalize",
    "preprocess_image",
    "real_to_cir",
    "TrainConfig",
    "TrainedModel",
    "train",
]

__version__ = "0.1.0"

"""Pediatric chest X-ray pneumonia classification pipeline.

A from-scratch binary image classifier (conv / batchnorm / maxpool / dense
layers with hand-written backprop and Adam), affine data augmentation, a
DCGAN-style generator for class balancing, an experiment harness, and an
HTTP inference service.
"""

from .augment import AffineAugmenter, AffineParams, AugmentationConfig, apply_affine, expand_class, sample_params
from .classifier import PneumoniaCnnClassifier
from .metrics import ConfusionMatrix, MetricsReport, compute_metrics, confusion, report_table
from .network import (
    AdamState,
    CnnArchitecture,
    CnnModel,
    ConvBlock,
    EarlyStopping,
    TrainingHistory,
    adam_step,
    bce_loss,
    build_model,
    default_architecture,
    label_for,
    predict,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "AffineAugmenter",
    "AffineParams",
    "AugmentationConfig",
    "CnnArchitecture",
    "CnnModel",
    "ConfusionMatrix",
    "ConvBlock",
    "EarlyStopping",
    "MetricsReport",
    "PneumoniaCnnClassifier",
    "TrainingHistory",
    "adam_step",
    "apply_affine",
    "bce_loss",
    "build_model",
    "compute_metrics",
    "confusion",
    "default_architecture",
    "expand_class",
    "label_for",
    "predict",
    "report_table",
    "sample_params",
    "train",
]

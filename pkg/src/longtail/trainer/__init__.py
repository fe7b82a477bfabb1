"""Desk-scale convolutional classifier with the standard training recipe."""

from .augment import AugmentationConfig, augment, eval_transform
from .checkpoint import load_checkpoint, save_checkpoint
from .data import CropLoader
from .loop import TrainHistory, predict, predict_records, train
from .model import Model, ModelConfig, softmax_cross_entropy
from .optimizer import RMSPropState, TrainConfig, inverse_frequency_weights, rmsprop_step

__all__ = [
    "AugmentationConfig",
    "CropLoader",
    "Model",
    "ModelConfig",
    "RMSPropState",
    "TrainConfig",
    "TrainHistory",
    "augment",
    "eval_transform",
    "inverse_frequency_weights",
    "load_checkpoint",
    "predict",
    "predict_records",
    "rmsprop_step",
    "save_checkpoint",
    "softmax_cross_entropy",
    "train",
]

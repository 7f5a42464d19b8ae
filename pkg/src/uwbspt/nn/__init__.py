"""Minimal feed-forward network stack written directly on numpy.

Layers carry their own parameters and hand-derived backward passes; no
automatic differentiation is involved anywhere.
"""

from .layers import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    MaxPool2D,
    Param,
    ReLU,
    Sequential,
    Softmax,
    SpatialDropout,
)
from .models import ModelSpec, TwoBranchModel, SingleViewModel, build_model, load_model, save_model
from .optim import Adam
from .training import TrainConfig, TrainResult, accuracy, cross_entropy, one_hot, predict_probs, train

__all__ = [
    "Adam",
    "Conv2D",
    "Dense",
    "Dropout",
    "Flatten",
    "MaxPool2D",
    "ModelSpec",
    "Param",
    "ReLU",
    "Sequential",
    "SingleViewModel",
    "Softmax",
    "SpatialDropout",
    "TrainConfig",
    "TrainResult",
    "TwoBranchModel",
    "accuracy",
    "build_model",
    "cross_entropy",
    "load_model",
    "one_hot",
    "predict_probs",
    "save_model",
    "train",
]

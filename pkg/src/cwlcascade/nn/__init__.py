"""Small numpy neural-network engine: layers, Adam, training, freezing, checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .layers import Conv1D, Conv2D, Dense, Flatten, MaxPool1D, MaxPool2D, ReLU, Softmax
from .model import (
    AdamState,
    Sequential,
    TrainConfig,
    TrainHistory,
    adam_step,
    build_cnn1d,
    build_cnn2d,
    cross_entropy,
    evaluate_accuracy,
    freeze_all_but,
    one_hot,
    pretrain_and_freeze,
    train,
)

__all__ = [
    "AdamState", "Conv1D", "Conv2D", "Dense", "Flatten", "MaxPool1D", "MaxPool2D", "ReLU",
    "Sequential", "Softmax", "TrainConfig", "TrainHistory", "adam_step", "build_cnn1d",
    "build_cnn2d", "cross_entropy", "evaluate_accuracy", "freeze_all_but", "load_checkpoint",
    "one_hot", "pretrain_and_freeze", "save_checkpoint", "train",
]

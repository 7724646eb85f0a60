"""Compact trainable U-Net with checkpointing and fine-tuning."""

from .checkpoint import (
    CheckpointError,
    CorruptHeaderError,
    ShapeMismatchError,
    TruncatedCheckpointError,
    load_weights,
    save_weights,
)
from .model import (
    UNetConfig,
    Weights,
    backward,
    bce_with_logits,
    forward,
    init,
    pixel_accuracy,
    predict_proba,
    sigmoid,
    tensor_shapes,
)
from .optim import adam_step
from .train import (
    EpochStats,
    TrainConfig,
    TrainReport,
    TrainingDivergedError,
    evaluate,
    finetune,
    train,
)

__all__ = [
    "CheckpointError",
    "CorruptHeaderError",
    "EpochStats",
    "ShapeMismatchError",
    "TrainConfig",
    "TrainReport",
    "TrainingDivergedError",
    "TruncatedCheckpointError",
    "UNetConfig",
    "Weights",
    "adam_step",
    "backward",
    "bce_with_logits",
    "evaluate",
    "finetune",
    "forward",
    "init",
    "load_weights",
    "pixel_accuracy",
    "predict_proba",
    "save_weights",
    "sigmoid",
    "tensor_shapes",
    "train",
]

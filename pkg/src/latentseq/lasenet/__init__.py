"""Bidirectional-GRU estimator of trial-wise latent variables."""
from .network import (
    DropoutMasks,
    NetworkConfig,
    NetworkError,
    Outputs,
    Targets,
    backward,
    forward,
    init_weights,
    loss,
    param_shapes,
    zero_weights,
)
from .train import (
    Prediction,
    TrainingError,
    TrainReport,
    evaluate_loss,
    gradient,
    infer,
    load_checkpoint,
    save_checkpoint,
    train,
)

__all__ = [
    "DropoutMasks",
    "NetworkConfig",
    "NetworkError",
    "Outputs",
    "Prediction",
    "Targets",
    "TrainReport",
    "TrainingError",
    "backward",
    "evaluate_loss",
    "forward",
    "gradient",
    "infer",
    "init_weights",
    "load_checkpoint",
    "loss",
    "param_shapes",
    "save_checkpoint",
    "train",
    "zero_weights",
]

"""Dense-network engine with swappable compiled/numpy kernels."""

from . import backend
from .core import (
    AdamState,
    LayerSpec,
    Network,
    TrainingDivergedError,
    adam_step,
    backward,
    finite_difference_check,
    forward,
    init_network,
    load_checkpoint,
    mae_loss,
    mse_loss,
    save_checkpoint,
    stack_specs,
)

__all__ = [
    "AdamState",
    "LayerSpec",
    "Network",
    "TrainingDivergedError",
    "adam_step",
    "backend",
    "backward",
    "finite_difference_check",
    "forward",
    "init_network",
    "load_checkpoint",
    "mae_loss",
    "mse_loss",
    "save_checkpoint",
    "stack_specs",
]

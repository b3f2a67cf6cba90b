"""Model zoo: MLP variants, sequence encoders, classical baselines, checkpoints."""
from .autodiff import Tensor, finite_difference_check, weighted_bce_loss
from .baselines import classical_baseline_fit_predict
from .checkpoint import Checkpoint
from .nets import (
    ALL_FAMILIES,
    CLASSICAL_FAMILIES,
    MLP_FAMILIES,
    NEURAL_FAMILIES,
    SEQUENCE_FAMILIES,
    ModelConfig,
    NeuralModel,
    build_model,
)
from .optim import AdamW, linear_lr

__all__ = [
    "ALL_FAMILIES",
    "CLASSICAL_FAMILIES",
    "MLP_FAMILIES",
    "NEURAL_FAMILIES",
    "SEQUENCE_FAMILIES",
    "AdamW",
    "Checkpoint",
    "ModelConfig",
    "NeuralModel",
    "Tensor",
    "build_model",
    "classical_baseline_fit_predict",
    "finite_difference_check",
    "linear_lr",
    "weighted_bce_loss",
]

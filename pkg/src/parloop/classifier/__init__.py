"""Transformer sequence classifier trained from scratch in numpy."""
from .checkpoint import load_checkpoint, save_checkpoint
from .model import ModelConfig, backward, cross_entropy, forward, init_params
from .training import (
    AdamW,
    Checkpoint,
    Dataset,
    Hyperparameters,
    TrainingHistory,
    evaluate,
    lr_schedule,
    predict,
    predict_proba,
    train,
)

"""Minimal reverse-mode neural toolkit: dense/dropout layers, masked LSTM,
bidirectional wrapper, attention-weighted pooling, softmax losses, SGD and
Adam, and finite-difference gradient checking."""

from emofuse.nn.core import (
    AttentionPool,
    BiLstm,
    Dense,
    Dropout,
    Lstm,
    MultiTaskLossSpec,
    Param,
    TaskSpec,
    cross_entropy_grad,
    glorot_uniform,
    layer_rng,
    log_softmax,
    multitask_loss,
    reverse_valid_prefix,
    softmax_cross_entropy,
)
from emofuse.nn.gradcheck import GradCheckReport, gradient_check
from emofuse.nn.optim import Adam, OptimizerError, Sgd, clip_global_norm

__all__ = [
    "AttentionPool",
    "BiLstm",
    "Dense",
    "Dropout",
    "Lstm",
    "MultiTaskLossSpec",
    "Param",
    "TaskSpec",
    "cross_entropy_grad",
    "glorot_uniform",
    "layer_rng",
    "log_softmax",
    "multitask_loss",
    "reverse_valid_prefix",
    "softmax_cross_entropy",
    "GradCheckReport",
    "gradient_check",
    "Adam",
    "OptimizerError",
    "Sgd",
    "clip_global_norm",
]

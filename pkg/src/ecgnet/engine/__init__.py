"""Minimal reverse-mode autodiff engine with the operators the ECG models need."""

from ecgnet.engine.checkpoint import load_checkpoint, save_checkpoint
from ecgnet.engine.gradcheck import gradient_check, numeric_gradient
from ecgnet.engine.ops import (
    add,
    attention_pool,
    avg_pool1d,
    batch_norm1d,
    concat_channels,
    conv1d,
    dense,
    dropout,
    gru_cell,
    gru_forward,
    mean_time,
    nll_loss,
    relu,
    scale,
    softmax,
    softmax_cross_entropy,
)
from ecgnet.engine.optim import adam_step
from ecgnet.engine.tensor import Parameter, Tensor, get_dtype, no_grad, precision, set_precision

__all__ = [
    "Parameter", "Tensor", "add", "adam_step", "attention_pool", "avg_pool1d",
    "batch_norm1d", "concat_channels", "conv1d", "dense", "dropout", "get_dtype",
    "gradient_check", "gru_cell", "gru_forward", "load_checkpoint", "mean_time",
    "nll_loss", "no_grad", "numeric_gradient", "precision", "relu", "save_checkpoint", "scale",
    "set_precision", "softmax", "softmax_cross_entropy",
]

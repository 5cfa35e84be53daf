"""Minimal reverse-mode autodiff engine with the layers the model zoo needs."""

from .gradcheck import GradCheckResult, combine, gradcheck, relative_error
from .ops import (
    BatchNormState,
    GaussianWeight,
    batchnorm1d,
    bayesian_dense,
    conv1d,
    cross_entropy,
    dense,
    dropout_apply,
    kl_gaussian,
    lstm_forward,
    maxpool1d,
    rho_for_sigma,
    same_padding,
)
from .optim import AdamState, adam_step
from .tensor import Tensor, as_tensor, backward, parameter, softmax, zero_grad

__all__ = [
    "AdamState", "BatchNormState", "GaussianWeight", "GradCheckResult", "Tensor",
    "adam_step", "as_tensor", "backward", "batchnorm1d", "bayesian_dense", "combine", "conv1d",
    "cross_entropy", "dense", "dropout_apply", "gradcheck", "kl_gaussian", "lstm_forward",
    "maxpool1d", "parameter", "relative_error", "rho_for_sigma", "same_padding",
    "softmax", "zero_grad",
]

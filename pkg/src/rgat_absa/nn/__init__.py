"""Deterministic numpy training core: autodiff tape, LSTM, dropout, Adam, checkpoints."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .lstm import BiLstmParams, bilstm, lstm
from .optim import ParamStore, adam_step, init_params, xavier_uniform
from .tensor import (
    Tensor,
    as_tensor,
    backward,
    concat,
    dropout,
    grad_check,
    log_clamp,
    matmul,
    mean,
    mul,
    parameter,
    relu,
    reshape,
    sigmoid,
    softmax,
    sum,
    take,
    tanh,
    transpose,
    zero_grad,
)

__all__ = [
    "BiLstmParams", "CheckpointError", "ParamStore", "Tensor", "adam_step", "as_tensor",
    "backward", "bilstm", "concat", "dropout", "grad_check", "init_params", "load_checkpoint",
    "log_clamp", "lstm", "matmul", "mean", "mul", "parameter", "relu", "reshape", "save_checkpoint",
    "sigmoid", "softmax", "sum", "take", "tanh", "transpose", "xavier_uniform", "zero_grad",
]

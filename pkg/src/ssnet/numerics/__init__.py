"""Tensor arithmetic, gradients, init, optimizer, and random streams."""

from .gradcheck import GradCheckReport, grad_check
from .optim import adamw_step, lr_schedule
from .rng import RngStream
from .tensor import (
    Parameter,
    Tensor,
    add,
    concat_last,
    const,
    dropout,
    gather_gate,
    gather_rows,
    gelu,
    layer_norm,
    matmul,
    mul,
    reshape,
    scatter_rows,
    softmax_rows,
    sub,
    tdiv,
    transpose_last2,
    tsum,
    xavier_init,
)

__all__ = [
    "GradCheckReport",
    "grad_check",
    "adamw_step",
    "lr_schedule",
    "RngStream",
    "Parameter",
    "Tensor",
    "add",
    "concat_last",
    "const",
    "dropout",
    "gather_gate",
    "gather_rows",
    "gelu",
    "layer_norm",
    "matmul",
    "mul",
    "reshape",
    "scatter_rows",
    "softmax_rows",
    "sub",
    "tdiv",
    "transpose_last2",
    "tsum",
    "xavier_init",
]

"""AdamW with decoupled weight decay, and the warmup/cosine step schedule."""

from __future__ import annotations

import math

import numpy as np

from ..errors import NumericalError
from .tensor import Parameter

__all__ = ["adamw_step", "lr_schedule"]


def adamw_step(
    params: list[Parameter],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.98,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> None:
    """One AdamW update over `params`, in place.

    Decay is decoupled (applied to the value, never the gradient) and the
    moment estimates are bias-corrected. Each parameter's step counter
    advances by one.
    """
    for p in params:
        if p.grad is None:
            raise NumericalError(f"parameter {p.name!r} has no gradient")
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in parameter {p.name!r}")
        p.step += 1
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * (g * g)
        m_hat = p.m / (1.0 - beta1**p.step)
        v_hat = p.v / (1.0 - beta2**p.step)
        if weight_decay:
            p.data = p.data * (1.0 - lr * weight_decay)
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + eps)


def lr_schedule(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Linear ramp 0 -> base_lr over warmup, then cosine decay to 0."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if warmup_steps >= total_steps:
        raise ValueError("warmup_steps must be less than total_steps")
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))

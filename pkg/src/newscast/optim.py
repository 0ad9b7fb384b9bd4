"""Adaptive-moment optimizer and the warmup/linear-decay learning-rate schedule."""

from __future__ import annotations

import numpy as np

from . import backend
from .autodiff import Tensor
from .errors import ConfigError

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


class AdamState:
    """Per-parameter first/second moment accumulators plus a step counter."""

    def __init__(self, params: list[Tensor]):
        self.params = list(params)
        self.m = [np.zeros(p.shape) for p in self.params]
        self.v = [np.zeros(p.shape) for p in self.params]
        self.step = 0


def adam_step(state: AdamState, grads: dict[Tensor, np.ndarray], lr: float) -> None:
    """One bias-corrected update of every parameter in the state, in place."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    state.step += 1
    for p, m, v in zip(state.params, state.m, state.v):
        g = grads[p]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        backend.adam_update(p.data, np.ascontiguousarray(g), m, v,
                            state.step, lr, BETA1, BETA2, EPS)


def lr_at_step(step: int, warmup: int, total: int, peak_lr: float) -> float:
    """Linear ramp 0 -> peak over [0, warmup], linear decay to 0 at total.

    Clamped at zero beyond ``total``.
    """
    if total <= warmup:
        raise ConfigError(f"total steps ({total}) must exceed warmup ({warmup})")
    if step < 0:
        raise ValueError(f"step must be non-negative, got {step}")
    if step <= warmup:
        return peak_lr * step / warmup
    if step >= total:
        return 0.0
    return peak_lr * (total - step) / (total - warmup)

"""Adam optimizer over named Parameter objects."""

from __future__ import annotations

import math

import numpy as np

from stance_dann.layers import Parameter


class AdamState:
    """Per-parameter first/second moment buffers plus the step counter."""

    def __init__(
        self,
        alpha: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.alpha = alpha
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def clip_global_norm(params: list[Parameter], cap: float) -> float:
    """Scale all gradients so their global L2 norm is at most `cap` (0 disables)."""
    total = math.sqrt(sum(float((p.grad * p.grad).sum()) for p in params))
    if cap > 0.0 and total > cap:
        scale = cap / total
        for p in params:
            p.grad *= scale
    return total

def adam_step(params: list[Parameter], state: AdamState) -> None:
    """One bias-corrected Adam update; gradients are zeroed afterwards."""
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise ValueError(f"non-finite gradient in parameter {p.name}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p in params:
        if p.name not in state.m:
            state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        m = state.m[p.name]
        v = state.v[p.name]
        m *= state.beta1
        m += (1.0 - state.beta1) * p.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (p.grad * p.grad)
        p.value -= state.alpha * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.zero_grad()

"""Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> dict:
    """One bias-corrected Adam update; returns new parameter arrays, updates ``state`` in place."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    out = {}
    for key, p in params.items():
        g = grads[key]
        m = state.m.get(key)
        v = state.v.get(key)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        state.m[key], state.v[key] = m, v
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        out[key] = (p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype, copy=False)
    return out


class Adam:
    """Adam bound to one network's trainable parameters."""

    def __init__(self, network, lr: float = 1e-4, beta1: float = 0.5, beta2: float = 0.999, eps: float = 1e-8):
        self.network = network
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self) -> None:
        new = adam_step(self.network.param_dict(), self.network.grad_dict(), self.state)
        self.network.load_param_dict(new)

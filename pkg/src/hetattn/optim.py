"""Adam with bias correction, threaded through explicit state."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .errors import InvalidInput


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def zeros_like(cls, params):
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8, t=1):
    """One Adam update. Moments in ``state`` are updated in place; the
    returned list holds the new parameter arrays.

    Denominator is sqrt(v_hat) + eps, so the very first step moves each
    coordinate by lr * g / (|g| + eps).
    """
    if t < 1:
        raise InvalidInput("step count t must be >= 1")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise InvalidInput("params, grads and state must align")
    out = []
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise InvalidInput(f"gradient shape {g.shape} != parameter shape {p.shape}")
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
    return out


class Adam:
    """In-place Adam over a list of autodiff leaves."""

    def __init__(self, params: list[Tensor], lr=0.005, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.state = AdamState.zeros_like([p.value for p in self.params])

    def step(self):
        self.t += 1
        grads = [np.zeros_like(p.value) if p.grad is None else p.grad for p in self.params]
        new = adam_step(
            [p.value for p in self.params], grads, self.state,
            self.lr, self.beta1, self.beta2, self.eps, self.t,
        )
        for p, v in zip(self.params, new):
            p.value[...] = v

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

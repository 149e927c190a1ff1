from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteGradientError


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params, grads):
    """Apply one bias-corrected Adam update in place.

    ``params`` and ``grads`` are sequences of ``(name, array)`` pairs in the
    same order. Nothing is modified if any gradient is non-finite.
    """
    params = list(params)
    grads = list(grads)
    bad = [name for name, g in grads if not np.all(np.isfinite(g))]
    if bad:
        raise NonFiniteGradientError(
            f"non-finite gradient at step {state.t + 1} in: {', '.join(bad)}")
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for (name, p), (gname, g) in zip(params, grads):
        if name != gname:
            raise ValueError(f"parameter/gradient order mismatch: {name} vs {gname}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


class Adam:
    def __init__(self, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, model):
        adam_step(self.state, model.parameters(), model.gradients())

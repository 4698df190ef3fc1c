"""Adam with bias correction, plus the plateau learning-rate rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class OptimizerError(FloatingPointError):
    pass


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(state: AdamState, param, name="param"):
    """Apply one Adam update to ``param`` in place and advance ``state``."""
    g = param.grad
    if g is None:
        g = np.zeros_like(param.data)
    if not np.all(np.isfinite(g)):
        raise OptimizerError(f"non-finite gradient for parameter {name!r}")
    if state.m is None:
        state.m = np.zeros_like(param.data)
        state.v = np.zeros_like(param.data)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m = b1 * state.m + (1.0 - b1) * g
    state.v = b2 * state.v + (1.0 - b2) * g * g
    m_hat = state.m / (1.0 - b1 ** state.step)
    v_hat = state.v / (1.0 - b2 ** state.step)
    update = state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    param.data = (param.data - update).astype(param.data.dtype)
    return param, state


class Adam:
    """Adam over a name -> Parameter mapping with a shared learning rate."""

    def __init__(self, named_params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = dict(named_params)
        self.lr = lr
        self.states = {n: AdamState(lr, beta1, beta2, eps) for n in self.params}

    def step(self):
        for name, p in self.params.items():
            st = self.states[name]
            st.learning_rate = self.lr
            adam_step(st, p, name)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


@dataclass
class PlateauSchedule:
    """Divide the rate by ``factor`` after ``patience`` epochs without improvement."""

    lr: float
    factor: float = 10.0
    patience: int = 5
    best: float = float("inf")
    bad_epochs: int = 0
    history: list = field(default_factory=list)

    def update(self, metric: float) -> float:
        if metric < self.best:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr /= self.factor
                self.bad_epochs = 0
        self.history.append(self.lr)
        return self.lr

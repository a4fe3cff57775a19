"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np


class AdamState:
    """Per-parameter first/second moment estimates and global step count."""

    def __init__(self, param_sizes, beta1=0.9, beta2=0.999, epsilon=1e-8):
        if not (0 < beta1 < 1 and 0 < beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.first_moment = [np.zeros(s) for s in param_sizes]
        self.second_moment = [np.zeros(s) for s in param_sizes]


def adam_step(params, grads, state: AdamState, lr: float):
    """One bias-corrected Adam update, in place on `params`.

    params/grads are lists of arrays matching the state's moment shapes.
    """
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


class Adam:
    """Convenience wrapper binding an AdamState to a list of Parameters."""

    def __init__(self, parameters, lr, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.parameters = list(parameters)
        self.lr = lr
        self.state = AdamState([p.value.shape for p in self.parameters],
                               beta1, beta2, epsilon)

    def step(self):
        adam_step([p.value for p in self.parameters],
                  [p.grad for p in self.parameters],
                  self.state, self.lr)

    def zero_grad(self):
        for p in self.parameters:
            p.zero_grad()

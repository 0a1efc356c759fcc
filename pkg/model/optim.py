from dataclasses import dataclass, field

import numpy as np

from model.layers import Parameter


@dataclass
class AdamState:
    """
    Adam moments keyed by parameter name.

    step_count: int
        number of adam_step calls so far
    """

    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def hyperparameters(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
        }


def adam_step(params: list[Parameter], state: AdamState) -> None:
    """
    One bias-corrected Adam update of every parameter, in place. Gradients are
    zeroed afterwards.

    params: list[Parameter]
        parameters with populated gradients
    state: AdamState
        moments, created on first use
    """
    state.step_count += 1
    t = state.step_count
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    for p in params:
        m = state.first_moment.setdefault(p.name, np.zeros_like(p.value))
        v = state.second_moment.setdefault(p.name, np.zeros_like(p.value))
        m *= state.beta1
        m += (1.0 - state.beta1) * p.grad
        v *= state.beta2
        v += (1.0 - state.beta2) * p.grad**2
        p.value -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
        p.zero_grad()

from typing import Callable

import numpy as np

from model.layers import Parameter, ensure_finite


def gradient_check(
    f: Callable[[], float],
    params: list[Parameter],
    perturbation: float = 1e-5,
) -> float:
    """
    Compares analytic gradients against central finite differences and returns
    the max relative error |a - n| / max(1e-8, |a| + |n|) over all coordinates.

    f: Callable[[], float]
        evaluates the loss at the current parameter values and accumulates
        analytic gradients into params
    params: list[Parameter]
        parameters to perturb
    perturbation: float
        finite-difference step h
    """
    for p in params:
        p.zero_grad()
    loss = f()
    ensure_finite("loss", loss)
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, grad in zip(params, analytic):
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + perturbation
            upper = f()
            flat[i] = original - perturbation
            lower = f()
            flat[i] = original
            ensure_finite("loss", (upper, lower))
            numeric = (upper - lower) / (2.0 * perturbation)
            a = grad.reshape(-1)[i]
            worst = max(worst, abs(a - numeric) / max(1e-8, abs(a) + abs(numeric)))

    for p in params:
        p.zero_grad()
    return float(worst)

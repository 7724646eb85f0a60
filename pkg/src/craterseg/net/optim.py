"""ADAM update with bias correction."""

from __future__ import annotations

import numpy as np

from .model import Weights

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


def adam_step(
    weights: Weights,
    grads: dict[str, np.ndarray],
    step_index: int,
    lr: float,
    beta1: float = BETA1,
    beta2: float = BETA2,
    eps: float = EPSILON,
) -> Weights:
    """Apply one ADAM update in place; ``step_index`` is the 1-based step t.

    Moment tensors are created as zeros on the first call. Each tensor is
    updated independently, so tensor ordering cannot change the result.
    """
    if step_index < 1:
        raise ValueError(f"step_index must be >= 1, got {step_index}")
    if weights.opt_m is None or weights.opt_v is None:
        weights.opt_m = {k: np.zeros_like(v) for k, v in weights.tensors.items()}
        weights.opt_v = {k: np.zeros_like(v) for k, v in weights.tensors.items()}

    t = step_index
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, w in weights.tensors.items():
        g = grads[name]
        m = weights.opt_m[name]
        v = weights.opt_v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        w -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    weights.step = t
    return weights

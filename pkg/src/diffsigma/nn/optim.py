from __future__ import annotations

import numpy as np

from .layers import LayerParams


def adam_step(params: LayerParams, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, weight_decay: float = 0.0) -> None:
    """One bias-corrected Adam update of ``params`` in place.

    ``weight_decay * w`` is added to the weight gradient before the moment
    updates (L2 regularisation); biases are not decayed.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if eps <= 0:
        raise ValueError("eps must be positive")
    params.step_count += 1
    t = params.step_count
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for value, grad, m, v, decay in (
        (params.weights, params.grad_weights, params.m_weights, params.v_weights, weight_decay),
        (params.bias, params.grad_bias, params.m_bias, params.v_bias, 0.0),
    ):
        g = grad + decay * value if decay else grad
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        value -= (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(value.dtype)

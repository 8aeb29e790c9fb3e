"""Pure-numpy kernels for the dense-network hot path.

Drop-in fallback for the compiled extension in `_kernels.pyx`; both
expose the same functions with the same semantics so the backend can be
swapped at import time. All arrays are float64 and C-contiguous.
"""

import numpy as np

NAME = "python"


def affine_act(x, w, b, relu):
    """y = x @ w + b, clamped at zero when `relu` is set.

    x (n, din), w (din, dout), b (dout,).
    """
    y = x @ w
    y += b
    if relu:
        np.maximum(y, 0.0, out=y)
    return y


def affine_backward_masked(x, w, dout, act):
    """Gradients of affine_act: returns (dx, dw, db).

    When `act` (the ReLU output) is given, `dout` is first zeroed in
    place wherever the unit was dead (act <= 0, i.e. pre-activation <= 0).
    """
    if act is not None:
        dout *= act > 0.0
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps):
    """One bias-corrected Adam update, in place on flat float64 arrays."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)

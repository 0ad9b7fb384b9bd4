"""Numpy lane of the kernel core.

These are the hot row-wise/elementwise kernels executed every training step.
The compiled lane in ``_speedups.pyx`` implements the same signatures with
fused loops; this module is the always-available reference. Matrix multiplies
are not kernels here: both lanes delegate those to BLAS through ``numpy``.

All inputs are C-contiguous float64 arrays; 2-d unless stated otherwise.
"""

import numpy as np

BACKEND_NAME = "numpy"

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


def gelu_fwd(x):
    """tanh-approximated GELU, elementwise."""
    u = _GELU_C * (x + _GELU_A * x ** 3)
    return 0.5 * x * (1.0 + np.tanh(u))


def gelu_bwd(x, dy):
    """Gradient of gelu_fwd at x, chained with upstream dy."""
    u = _GELU_C * (x + _GELU_A * x ** 3)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x ** 2)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * du)


def softmax_fwd(x):
    """Row-wise softmax, shifted by the row max for stability."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(y, dy):
    """Row-wise softmax gradient: y * (dy - sum(dy * y))."""
    inner = (dy * y).sum(axis=1, keepdims=True)
    return y * (dy - inner)


def layernorm_fwd(x, gain, offset, eps):
    """Row-wise layer norm with learned gain/offset (1-d, length n).

    Uses the biased (population) variance. Returns (y, xhat, inv_std) where
    xhat and inv_std are the saved context for the backward pass.
    """
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    y = xhat * gain + offset
    return y, xhat, inv_std[:, 0].copy()


def layernorm_bwd(xhat, inv_std, gain, dy):
    """Gradient of layernorm_fwd. Returns (dx, dgain, doffset)."""
    dgain = (dy * xhat).sum(axis=0)
    doffset = dy.sum(axis=0)
    dxhat = dy * gain
    m1 = dxhat.mean(axis=1, keepdims=True)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True)
    dx = inv_std[:, None] * (dxhat - m1 - xhat * m2)
    return dx, dgain, doffset


def adam_update(param, grad, m, v, t, lr, beta1, beta2, eps):
    """One bias-corrected adaptive-moment update, in place on param/m/v.

    Arrays may be any shape as long as all four match; t is the 1-based
    step count after incrementing.
    """
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    param -= lr * mhat / (np.sqrt(vhat) + eps)

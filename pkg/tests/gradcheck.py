"""Central finite-difference gradient checking, shared across test modules.

The oracle is independent of the reverse-mode path it checks: it re-evaluates
the loss with each parameter element nudged by +/- eps and compares the
two-sided slope against the tape's analytic gradient.
"""

import numpy as np

from newscast.autodiff import Tape, Tensor

EPS = 1e-5
TOL = 1e-4
DENOM_FLOOR = 1e-8


def analytic_grads(loss_fn, params):
    with Tape() as tape:
        loss = loss_fn()
    return tape.gradients(loss, params)


def numeric_grad(loss_fn, param: Tensor, eps: float = EPS) -> np.ndarray:
    g = np.zeros(param.shape)
    flat = param.data.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = loss_fn().item()
        flat[i] = orig - eps
        down = loss_fn().item()
        flat[i] = orig
        g.ravel()[i] = (up - down) / (2.0 * eps)
    return g


def max_rel_error(loss_fn, params, eps: float = EPS) -> float:
    """Worst relative disagreement between analytic and numeric gradients."""
    grads = analytic_grads(loss_fn, params)
    worst = 0.0
    for p in params:
        a = grads[p]
        n = numeric_grad(loss_fn, p, eps)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), DENOM_FLOOR)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def assert_gradients_match(loss_fn, params, tol: float = TOL, eps: float = EPS):
    err = max_rel_error(loss_fn, params, eps)
    assert err < tol, f"finite-difference mismatch: max rel error {err:.3e} >= {tol}"
    return err

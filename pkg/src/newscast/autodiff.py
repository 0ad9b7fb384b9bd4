"""Dense 2-d tensors with reverse-mode differentiation.

Every value is a C-contiguous float64 matrix; scalars are (1, 1). Operations
executed while a :class:`Tape` is active append nodes in execution order, so
parents always precede children and one reverse sweep visits each node once.

The row-wise/elementwise hot kernels (GELU, softmax, layer norm) dispatch
through :mod:`newscast.backend`; matrix products go straight to BLAS.
"""

from __future__ import annotations

import numpy as np

from . import backend
from .errors import NumericError

_DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    """Toggle NaN/Inf validation of every kernel input (slow; off by default)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def _as_matrix(data) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ValueError(f"tensors are 2-d, got shape {arr.shape}")
    return arr


class Tensor:
    """A 2-d float64 value, optionally tracked for gradients.

    Tensors are immutable after construction except through optimizer
    updates on ``.data``. Identity (not value) is what the tape tracks,
    so Tensor is hashable by object id and must not define __eq__.
    """

    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_matrix(data)
        self.requires_grad = requires_grad
        self.name = name
        if _DEBUG_CHECKS:
            _check_finite(self.data, "Tensor()")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        grad = ", grad" if self.requires_grad else ""
        return f"Tensor({self.shape[0]}x{self.shape[1]}{grad}{tag})"

    # Operator sugar over the module-level ops.
    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"non-finite value in {where}")


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out          # output Tensor
        self.inputs = inputs    # input Tensors, aligned with backward's result
        self.backward = backward  # grad_out -> tuple of grads (or None per input)


class Tape:
    """Single-owner record of executed kernels, in execution order."""

    _active: "Tape | None" = None

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        if Tape._active is not None:
            raise RuntimeError("a tape is already active; tapes do not nest")
        Tape._active = self
        return self

    def __exit__(self, *exc) -> None:
        Tape._active = None

    def gradients(self, loss: Tensor, params: list[Tensor]) -> dict[Tensor, np.ndarray]:
        """Reverse sweep from a scalar loss.

        Returns one gradient array per entry of ``params``; parameters the
        loss does not reach get zeros. Tensors hash by identity, so the
        result maps each parameter object to its gradient.
        """
        if loss.data.size != 1:
            raise ValueError(f"loss must be scalar-shaped, got {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                acc = grads.get(id(inp))
                if acc is None:
                    grads[id(inp)] = np.ascontiguousarray(gi)
                else:
                    acc += gi
        return {p: grads.get(id(p), np.zeros(p.shape)) for p in params}


def _record(out: Tensor, inputs: tuple[Tensor, ...], backward) -> Tensor:
    if _DEBUG_CHECKS:
        _check_finite(out.data, "kernel output")
    tape = Tape._active
    if tape is not None and out.requires_grad:
        tape.nodes.append(_Node(out, inputs, backward))
    return out


def _out(data: np.ndarray, *inputs: Tensor) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = np.ascontiguousarray(data)
    t.requires_grad = any(i.requires_grad for i in inputs)
    t.name = None
    return t


def _check_inputs(name: str, *tensors: Tensor) -> None:
    if _DEBUG_CHECKS:
        for t in tensors:
            _check_finite(t.data, name)


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    _check_inputs("matmul", a, b)
    out = _out(a.data @ b.data, a, b)

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    _check_inputs("add", a, b)
    out = _out(a.data + b.data, a, b)
    return _record(out, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"sub shape mismatch: {a.shape} vs {b.shape}")
    _check_inputs("sub", a, b)
    out = _out(a.data - b.data, a, b)
    return _record(out, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    _check_inputs("mul", a, b)
    out = _out(a.data * b.data, a, b)
    return _record(out, (a, b), lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    _check_inputs("scale", a)
    out = _out(a.data * c, a)
    return _record(out, (a,), lambda g: (g * c,))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Broadcast-add a (1, n) bias row to every row of x."""
    if b.shape != (1, x.shape[1]):
        raise ValueError(f"bias shape {b.shape} does not match columns of {x.shape}")
    _check_inputs("add_bias", x, b)
    out = _out(x.data + b.data, x, b)
    return _record(out, (x, b), lambda g: (g, g.sum(axis=0, keepdims=True)))


def gelu(x: Tensor) -> Tensor:
    _check_inputs("gelu", x)
    out = _out(backend.gelu_fwd(x.data), x)
    return _record(out, (x,), lambda g: (backend.gelu_bwd(x.data, g),))


def softmax_rows(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-wise stable softmax.

    ``mask`` is a boolean array of x's shape; False entries get probability
    exactly zero (implemented as an additive -1e30 before the softmax, which
    underflows to zero after the row-max shift). Each row must keep at least
    one True entry.
    """
    if x.shape[1] < 1:
        raise ValueError("softmax rows must have length >= 1")
    _check_inputs("softmax_rows", x)
    logits = x.data
    if mask is not None:
        if mask.shape != x.shape:
            raise ValueError(f"mask shape {mask.shape} != input shape {x.shape}")
        logits = np.where(mask, logits, -1e30)
        logits = np.ascontiguousarray(logits)
    y = backend.softmax_fwd(logits)
    out = _out(y, x)
    return _record(out, (x,), lambda g: (backend.softmax_bwd(y, g),))


def layer_norm_rows(x: Tensor, gain: Tensor, offset: Tensor, eps: float = 1e-5) -> Tensor:
    """Row-wise layer norm with learned (1, n) gain and offset.

    Population variance with eps inside the square root.
    """
    n = x.shape[1]
    if n < 1:
        raise ValueError("layer norm rows must have length >= 1")
    if gain.shape != (1, n) or offset.shape != (1, n):
        raise ValueError(f"gain/offset must be (1, {n}), got {gain.shape}/{offset.shape}")
    _check_inputs("layer_norm_rows", x, gain, offset)
    y, xhat, inv_std = backend.layernorm_fwd(x.data, gain.data[0], offset.data[0], eps)
    out = _out(y, x, gain, offset)

    def backward(g):
        dx, dgain, doffset = backend.layernorm_bwd(xhat, inv_std, gain.data[0], g)
        return dx, dgain.reshape(1, -1), doffset.reshape(1, -1)

    return _record(out, (x, gain, offset), backward)


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of an embedding table; gradient scatter-adds back."""
    idx = np.asarray(ids, dtype=np.intp)
    if idx.ndim != 1:
        raise ValueError("ids must be a flat sequence")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ValueError("embedding id out of range")
    _check_inputs("embedding_lookup", table)
    out = _out(table.data[idx], table)

    def backward(g):
        gt = np.zeros(table.shape)
        np.add.at(gt, idx, g)
        return (gt,)

    return _record(out, (table,), backward)


def transpose(x: Tensor) -> Tensor:
    _check_inputs("transpose", x)
    out = _out(x.data.T, x)
    return _record(out, (x,), lambda g: (np.ascontiguousarray(g.T),))


def sum_all(x: Tensor) -> Tensor:
    _check_inputs("sum_all", x)
    out = _out(np.array([[x.data.sum()]]), x)
    return _record(out, (x,), lambda g: (np.full(x.shape, g[0, 0]),))


def mean_all(x: Tensor) -> Tensor:
    _check_inputs("mean_all", x)
    out = _out(np.array([[x.data.mean()]]), x)
    inv = 1.0 / x.data.size
    return _record(out, (x,), lambda g: (np.full(x.shape, g[0, 0] * inv),))


def mean_over_rows(x: Tensor) -> Tensor:
    """Column means: (m, n) -> (1, n)."""
    _check_inputs("mean_over_rows", x)
    m = x.shape[0]
    out = _out(x.data.mean(axis=0, keepdims=True), x)
    return _record(out, (x,), lambda g: (np.repeat(g / m, m, axis=0),))


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= x.shape[0]):
        raise ValueError(f"row slice [{start}:{stop}] out of range for {x.shape}")
    _check_inputs("slice_rows", x)
    out = _out(x.data[start:stop], x)

    def backward(g):
        gx = np.zeros(x.shape)
        gx[start:stop] = g
        return (gx,)

    return _record(out, (x,), backward)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= x.shape[1]):
        raise ValueError(f"column slice [{start}:{stop}] out of range for {x.shape}")
    _check_inputs("slice_cols", x)
    out = _out(x.data[:, start:stop], x)

    def backward(g):
        gx = np.zeros(x.shape)
        gx[:, start:stop] = g
        return (gx,)

    return _record(out, (x,), backward)


def concat_rows(parts: list[Tensor]) -> Tensor:
    if not parts:
        raise ValueError("concat_rows needs at least one tensor")
    cols = parts[0].shape[1]
    if any(p.shape[1] != cols for p in parts):
        raise ValueError("concat_rows column mismatch")
    _check_inputs("concat_rows", *parts)
    out = _out(np.concatenate([p.data for p in parts], axis=0), *parts)
    sizes = [p.shape[0] for p in parts]

    def backward(g):
        grads = []
        at = 0
        for s in sizes:
            grads.append(g[at:at + s])
            at += s
        return tuple(grads)

    return _record(out, tuple(parts), backward)


def concat_cols(parts: list[Tensor]) -> Tensor:
    if not parts:
        raise ValueError("concat_cols needs at least one tensor")
    rows = parts[0].shape[0]
    if any(p.shape[0] != rows for p in parts):
        raise ValueError("concat_cols row mismatch")
    _check_inputs("concat_cols", *parts)
    out = _out(np.concatenate([p.data for p in parts], axis=1), *parts)
    sizes = [p.shape[1] for p in parts]

    def backward(g):
        grads = []
        at = 0
        for s in sizes:
            grads.append(np.ascontiguousarray(g[:, at:at + s]))
            at += s
        return tuple(grads)

    return _record(out, tuple(parts), backward)


def cross_entropy_mean(logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy of row-wise logits against integer targets.

    Fused log-softmax + pick; the gradient is the textbook
    (probabilities - one_hot) / n_rows.
    """
    idx = np.asarray(targets, dtype=np.intp)
    m = logits.shape[0]
    if idx.shape != (m,):
        raise ValueError(f"need {m} targets, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= logits.shape[1]):
        raise ValueError("target id out of range")
    _check_inputs("cross_entropy_mean", logits)
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)) + zmax
    picked = z[np.arange(m), idx]
    loss = float((logsumexp[:, 0] - picked).mean())
    out = _out(np.array([[loss]]), logits)

    def backward(g):
        probs = np.exp(z - logsumexp)
        probs[np.arange(m), idx] -= 1.0
        return (probs * (g[0, 0] / m),)

    return _record(out, (logits,), backward)

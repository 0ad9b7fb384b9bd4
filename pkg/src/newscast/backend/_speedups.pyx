# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled lane of the kernel core.

Same signatures as ``_kernels_np``; fused C loops over the row-wise and
elementwise kernels that dominate a training step. Matrix multiplies stay on
BLAS via numpy in both lanes.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh

cnp.import_array()

BACKEND_NAME = "compiled"

cdef double GELU_C = sqrt(2.0 / 3.14159265358979323846)
cdef double GELU_A = 0.044715


def gelu_fwd(cnp.ndarray[double, ndim=2, mode="c"] x):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1], i, j
    cdef cnp.ndarray[double, ndim=2, mode="c"] y = np.empty((m, n))
    cdef double[:, ::1] xv = x, yv = y
    cdef double v
    with nogil:
        for i in range(m):
            for j in range(n):
                v = xv[i, j]
                yv[i, j] = 0.5 * v * (1.0 + tanh(GELU_C * (v + GELU_A * v * v * v)))
    return y


def gelu_bwd(cnp.ndarray[double, ndim=2, mode="c"] x,
             cnp.ndarray[double, ndim=2, mode="c"] dy):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1], i, j
    cdef cnp.ndarray[double, ndim=2, mode="c"] dx = np.empty((m, n))
    cdef double[:, ::1] xv = x, dyv = dy, dxv = dx
    cdef double v, t, du
    with nogil:
        for i in range(m):
            for j in range(n):
                v = xv[i, j]
                t = tanh(GELU_C * (v + GELU_A * v * v * v))
                du = GELU_C * (1.0 + 3.0 * GELU_A * v * v)
                dxv[i, j] = dyv[i, j] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
    return dx


def softmax_fwd(cnp.ndarray[double, ndim=2, mode="c"] x):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1], i, j
    cdef cnp.ndarray[double, ndim=2, mode="c"] y = np.empty((m, n))
    cdef double[:, ::1] xv = x, yv = y
    cdef double rowmax, total
    with nogil:
        for i in range(m):
            rowmax = xv[i, 0]
            for j in range(1, n):
                if xv[i, j] > rowmax:
                    rowmax = xv[i, j]
            total = 0.0
            for j in range(n):
                yv[i, j] = exp(xv[i, j] - rowmax)
                total += yv[i, j]
            for j in range(n):
                yv[i, j] /= total
    return y


def softmax_bwd(cnp.ndarray[double, ndim=2, mode="c"] y,
                cnp.ndarray[double, ndim=2, mode="c"] dy):
    cdef Py_ssize_t m = y.shape[0], n = y.shape[1], i, j
    cdef cnp.ndarray[double, ndim=2, mode="c"] dx = np.empty((m, n))
    cdef double[:, ::1] yv = y, dyv = dy, dxv = dx
    cdef double inner
    with nogil:
        for i in range(m):
            inner = 0.0
            for j in range(n):
                inner += dyv[i, j] * yv[i, j]
            for j in range(n):
                dxv[i, j] = yv[i, j] * (dyv[i, j] - inner)
    return dx


def layernorm_fwd(cnp.ndarray[double, ndim=2, mode="c"] x,
                  cnp.ndarray[double, ndim=1, mode="c"] gain,
                  cnp.ndarray[double, ndim=1, mode="c"] offset,
                  double eps):
    cdef Py_ssize_t m = x.shape[0], n = x.shape[1], i, j
    cdef cnp.ndarray[double, ndim=2, mode="c"] y = np.empty((m, n))
    cdef cnp.ndarray[double, ndim=2, mode="c"] xhat = np.empty((m, n))
    cdef cnp.ndarray[double, ndim=1, mode="c"] inv_std = np.empty(m)
    cdef double[:, ::1] xv = x, yv = y, xhv = xhat
    cdef double[::1] gv = gain, ov = offset, sv = inv_std
    cdef double mu, var, d, s
    with nogil:
        for i in range(m):
            mu = 0.0
            for j in range(n):
                mu += xv[i, j]
            mu /= n
            var = 0.0
            for j in range(n):
                d = xv[i, j] - mu
                var += d * d
            var /= n
            s = 1.0 / sqrt(var + eps)
            sv[i] = s
            for j in range(n):
                xhv[i, j] = (xv[i, j] - mu) * s
                yv[i, j] = xhv[i, j] * gv[j] + ov[j]
    return y, xhat, inv_std


def layernorm_bwd(cnp.ndarray[double, ndim=2, mode="c"] xhat,
                  cnp.ndarray[double, ndim=1, mode="c"] inv_std,
                  cnp.ndarray[double, ndim=1, mode="c"] gain,
                  cnp.ndarray[double, ndim=2, mode="c"] dy):
    cdef Py_ssize_t m = xhat.shape[0], n = xhat.shape[1], i, j
    cdef cnp.ndarray[double, ndim=2, mode="c"] dx = np.empty((m, n))
    cdef cnp.ndarray[double, ndim=1, mode="c"] dgain = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1, mode="c"] doffset = np.zeros(n)
    cdef double[:, ::1] xhv = xhat, dyv = dy, dxv = dx
    cdef double[::1] sv = inv_std, gv = gain, dgv = dgain, dov = doffset
    cdef double m1, m2, dxh
    with nogil:
        for i in range(m):
            m1 = 0.0
            m2 = 0.0
            for j in range(n):
                dgv[j] += dyv[i, j] * xhv[i, j]
                dov[j] += dyv[i, j]
                dxh = dyv[i, j] * gv[j]
                m1 += dxh
                m2 += dxh * xhv[i, j]
            m1 /= n
            m2 /= n
            for j in range(n):
                dxv[i, j] = sv[i] * (dyv[i, j] * gv[j] - m1 - xhv[i, j] * m2)
    return dx, dgain, doffset


def adam_update(param, grad, m, v, long t,
                double lr, double beta1, double beta2, double eps):
    cdef double[::1] pv = param.ravel(), gv = grad.ravel()
    cdef double[::1] mv = m.ravel(), vv = v.ravel()
    cdef Py_ssize_t n = pv.shape[0], i
    cdef double c1 = 1.0 - beta1 ** t
    cdef double c2 = 1.0 - beta2 ** t
    cdef double g
    with nogil:
        for i in range(n):
            g = gv[i]
            mv[i] = beta1 * mv[i] + (1.0 - beta1) * g
            vv[i] = beta2 * vv[i] + (1.0 - beta2) * g * g
            pv[i] -= lr * (mv[i] / c1) / (sqrt(vv[i] / c2) + eps)

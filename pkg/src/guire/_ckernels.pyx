# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; must agree with ``_pykernels`` bit for bit."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, INFINITY

cnp.import_array()


cdef inline long _center(long lo, long hi):
    cdef long s = lo + hi
    cdef long q = s // 2
    if s % 2 and q % 2:
        q += 1
    return q


cdef inline long labs_(long v):
    return -v if v < 0 else v


def dense_rewards(xs, ys, box, double lam):
    cdef long x0 = box[0], y0 = box[1], x1 = box[2], y1 = box[3]
    cdef double w = x1 - x0, h = y1 - y0
    cdef long cx = _center(x0, x1), cy = _center(y0, y1)
    cdef cnp.int64_t[::1] xv = np.ascontiguousarray(xs, dtype=np.int64)
    cdef cnp.int64_t[::1] yv = np.ascontiguousarray(ys, dtype=np.int64)
    cdef Py_ssize_t n = xv.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double v
    for i in range(n):
        v = 1.0 - lam * (<double>labs_(xv[i] - cx) / w + <double>labs_(yv[i] - cy) / h)
        ov[i] = v if v > 0.0 else 0.0
    return out


def sparse_rewards(xs, ys, box):
    cdef long x0 = box[0], y0 = box[1], x1 = box[2], y1 = box[3]
    cdef cnp.int64_t[::1] xv = np.ascontiguousarray(xs, dtype=np.int64)
    cdef cnp.int64_t[::1] yv = np.ascontiguousarray(ys, dtype=np.int64)
    cdef Py_ssize_t n = xv.shape[0], i
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    for i in range(n):
        ov[i] = 1.0 if (x0 <= xv[i] <= x1 and y0 <= yv[i] <= y1) else 0.0
    return out


def masked_softmax(logits, double temperature, mask):
    cdef double[::1] lv = np.ascontiguousarray(logits, dtype=np.float64)
    cdef cnp.uint8_t[::1] mv = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t n = lv.shape[0], i
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double top = -INFINITY, total = 0.0, z
    for i in range(n):
        if mv[i]:
            z = lv[i] / temperature
            if z > top:
                top = z
    for i in range(n):
        if mv[i]:
            ov[i] = exp(lv[i] / temperature - top)
            total += ov[i]
    for i in range(n):
        ov[i] = ov[i] / total
    return out


def accumulate_logprob_grad(double[::1] out, probs, cells, weights, double temperature):
    cdef double[::1] pv = np.ascontiguousarray(probs, dtype=np.float64)
    cdef cnp.int64_t[::1] cv = np.ascontiguousarray(cells, dtype=np.int64)
    cdef double[::1] wv = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = out.shape[0], m = cv.shape[0], i
    cdef double wsum = 0.0
    for i in range(m):
        out[cv[i]] += wv[i] / temperature
        wsum += wv[i]
    cdef double scale = wsum / temperature
    for i in range(n):
        out[i] -= scale * pv[i]

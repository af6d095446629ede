# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-opportunity kernels; same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def resolve_collisions(choices, preambles, long num_preambles):
    cdef const long long[:] c = np.ascontiguousarray(choices, dtype=np.int64)
    cdef const long long[:] p = np.ascontiguousarray(preambles, dtype=np.int64)
    cdef Py_ssize_t n = c.shape[0], i, j
    out = np.zeros(n, dtype=np.bool_)
    cdef cnp.npy_bool[:] o = out
    for i in range(n):
        if c[i] == 0:
            continue
        for j in range(i + 1, n):
            if c[j] == c[i] and p[j] == p[i]:
                o[i] = 1
                o[j] = 1
    return out


cdef void _dense(const double* x, const double* W, const double* b, double* y,
                 Py_ssize_t din, Py_ssize_t dout, bint relu) noexcept nogil:
    # W is row-major (din, dout); accumulate row by row so the inner loop is contiguous
    cdef Py_ssize_t a, k
    cdef double xa
    cdef const double* row
    for k in range(dout):
        y[k] = b[k]
    for a in range(din):
        xa = x[a]
        if xa == 0.0:
            continue
        row = W + a * dout
        for k in range(dout):
            y[k] += xa * row[k]
    if relu:
        for k in range(dout):
            if y[k] < 0.0:
                y[k] = 0.0


def stacked_logits(x, weights, biases):
    cdef const double[:, ::1] h = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t J = h.shape[0], L = len(weights), l, j, din, dout
    cdef const double[:, :, ::1] W
    cdef const double[:, ::1] B
    cdef double[:, ::1] nxt
    for l in range(L):
        W = np.ascontiguousarray(weights[l], dtype=np.float64)
        B = np.ascontiguousarray(biases[l], dtype=np.float64)
        din, dout = W.shape[1], W.shape[2]
        if h.shape[1] != din:
            raise ValueError(f"layer {l}: input width {h.shape[1]} != {din}")
        nxt = np.empty((J, dout))
        with nogil:
            for j in range(J):
                _dense(&h[j, 0], &W[j, 0, 0], &B[j, 0], &nxt[j, 0], din, dout, l < L - 1)
        h = nxt
    return np.asarray(h)


def sample_categorical(probs, u):
    cdef const double[:, :] pv = np.ascontiguousarray(probs, dtype=np.float64)
    cdef const double[:] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t J = pv.shape[0], A = pv.shape[1], j, k
    cdef double acc
    out = np.empty(J, dtype=np.int64)
    cdef long long[:] o = out
    for j in range(J):
        acc = 0.0
        k = 0
        while k < A - 1:
            acc += pv[j, k]
            if acc > uv[j]:
                break
            k += 1
        o[j] = k
    return out

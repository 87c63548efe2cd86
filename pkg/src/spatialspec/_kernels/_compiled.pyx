# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the kernels in ``_pure.py``."""
import numpy as np

from libc.math cimport log, sqrt, INFINITY
from libc.stdlib cimport malloc, free


def ar_profile(const double[:, :, :, ::1] gram, const double[::1] a,
               const double[::1] s, Py_ssize_t p, double[::1] beta_out):
    cdef Py_ssize_t m = gram.shape[0]
    cdef Py_ssize_t q = gram.shape[2]
    cdef Py_ssize_t r = q - p
    cdef Py_ssize_t j, k, u, v, t
    cdef double w, acc, gyy
    cdef double *G = <double *> malloc(q * q * sizeof(double))
    cdef double *g = <double *> malloc((p + 1) * sizeof(double))
    if G == NULL or g == NULL:
        free(G)
        free(g)
        raise MemoryError()
    try:
        for u in range(q * q):
            G[u] = 0.0
        for j in range(m):
            for k in range(m):
                w = a[j] * a[k]
                if w == 0.0:
                    continue
                for u in range(q):
                    for v in range(q):
                        G[u * q + v] += w * gram[j, k, u, v]
        gyy = 0.0
        for t in range(r):
            for v in range(r):
                gyy += s[t] * s[v] * G[(p + t) * q + p + v]
        if p == 0:
            return gyy
        for u in range(p):
            acc = 0.0
            for t in range(r):
                acc += G[u * q + p + t] * s[t]
            g[u] = acc
        # in-place Cholesky of the leading p x p block (lower triangle)
        for j in range(p):
            acc = G[j * q + j]
            for k in range(j):
                acc -= G[j * q + k] * G[j * q + k]
            if not (acc > 0.0):
                return -1.0
            acc = sqrt(acc)
            G[j * q + j] = acc
            for u in range(j + 1, p):
                w = G[u * q + j]
                for k in range(j):
                    w -= G[u * q + k] * G[j * q + k]
                G[u * q + j] = w / acc
        # forward solve L z = g (z overwrites g)
        for u in range(p):
            acc = g[u]
            for k in range(u):
                acc -= G[u * q + k] * g[k]
            g[u] = acc / G[u * q + u]
        acc = 0.0
        for u in range(p):
            acc += g[u] * g[u]
        # back solve L' beta = z
        for u in range(p - 1, -1, -1):
            w = g[u]
            for k in range(u + 1, p):
                w -= G[k * q + u] * beta_out[k]
            beta_out[u] = w / G[u * q + u]
        return gyy - acc
    finally:
        free(G)
        free(g)


def logabsdet_eig(const double[::1] re, const double[::1] im, double gamma):
    cdef Py_ssize_t i, n = re.shape[0]
    cdef double t, x, y, acc = 0.0
    for i in range(n):
        x = 1.0 - gamma * re[i]
        y = gamma * im[i]
        t = x * x + y * y
        if t <= 0.0:
            return -INFINITY
        acc += log(t)
    return 0.5 * acc


def knn_indices(coords, Py_ssize_t k):
    cdef double[:, ::1] c = np.ascontiguousarray(coords, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0]
    cdef Py_ssize_t dim = c.shape[1]
    out_arr = np.empty((n, k), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] out = out_arr
    cdef double *best = <double *> malloc((k + 1) * sizeof(double))
    cdef Py_ssize_t *idx = <Py_ssize_t *> malloc((k + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t i, j, l, pos, filled
    cdef double d2, diff
    if best == NULL or idx == NULL:
        free(best)
        free(idx)
        raise MemoryError()
    try:
        for i in range(n):
            filled = 0
            for j in range(n):
                if j == i:
                    continue
                d2 = 0.0
                for l in range(dim):
                    diff = c[j, l] - c[i, l]
                    d2 += diff * diff
                if filled == k and d2 >= best[k - 1]:
                    continue
                # insertion keeps the earlier index ahead on equal distance
                pos = filled if filled < k else k - 1
                while pos > 0 and best[pos - 1] > d2:
                    best[pos] = best[pos - 1]
                    idx[pos] = idx[pos - 1]
                    pos -= 1
                best[pos] = d2
                idx[pos] = j
                if filled < k:
                    filled += 1
            for l in range(k):
                out[i, l] = idx[l]
    finally:
        free(best)
        free(idx)
    return out_arr

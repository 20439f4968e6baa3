# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled embedding kernels.

Mirrors the numpy backend exactly: products run left to right over the
tables and scatter accumulation runs in sample order, so results are
bit-identical between backends.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BACKEND = "cython"

_OPS = ("concat", "add", "mult")


def gather_rows(cnp.ndarray[cnp.float64_t, ndim=2] table,
                cnp.ndarray[cnp.int64_t, ndim=1] idx):
    cdef Py_ssize_t b, d, B = idx.shape[0], D = table.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((B, D), dtype=np.float64)
    cdef double[:, ::1] t = table
    cdef double[:, ::1] o = out
    cdef long[::1] ix = idx
    for b in range(B):
        for d in range(D):
            o[b, d] = t[ix[b], d]
    return out


def compose_forward(str op, list tables, list indices):
    if op not in _OPS:
        raise ValueError(f"unknown op {op!r}")
    cdef Py_ssize_t k = len(tables)
    cdef Py_ssize_t B = (<cnp.ndarray> indices[0]).shape[0]
    cdef Py_ssize_t j, b, d, off, D
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out
    cdef double[:, ::1] o, t
    cdef long[::1] ix

    if op == "concat":
        D = 0
        for j in range(k):
            D += (<cnp.ndarray> tables[j]).shape[1]
        out = np.empty((B, D), dtype=np.float64)
        o = out
        off = 0
        for j in range(k):
            t = tables[j]
            ix = indices[j]
            for b in range(B):
                for d in range(t.shape[1]):
                    o[b, off + d] = t[ix[b], d]
            off += t.shape[1]
        return out

    D = (<cnp.ndarray> tables[0]).shape[1]
    out = np.empty((B, D), dtype=np.float64)
    o = out
    t = tables[0]
    ix = indices[0]
    for b in range(B):
        for d in range(D):
            o[b, d] = t[ix[b], d]
    for j in range(1, k):
        t = tables[j]
        ix = indices[j]
        if op == "add":
            for b in range(B):
                for d in range(D):
                    o[b, d] += t[ix[b], d]
        else:
            for b in range(B):
                for d in range(D):
                    o[b, d] *= t[ix[b], d]
    return out


def compose_backward(str op, list tables, list indices,
                     cnp.ndarray[cnp.float64_t, ndim=2] upstream,
                     list grad_tables):
    if op not in _OPS:
        raise ValueError(f"unknown op {op!r}")
    cdef Py_ssize_t k = len(tables)
    cdef Py_ssize_t B = upstream.shape[0]
    cdef Py_ssize_t j, b, d, off, D
    cdef double[:, ::1] up = upstream
    cdef double[:, ::1] g, t
    cdef long[::1] ix
    cdef double cof

    if op == "concat":
        off = 0
        for j in range(k):
            g = grad_tables[j]
            ix = indices[j]
            D = g.shape[1]
            for b in range(B):
                for d in range(D):
                    g[ix[b], d] += up[b, off + d]
            off += D
        return

    D = upstream.shape[1]
    if op == "add":
        for j in range(k):
            g = grad_tables[j]
            ix = indices[j]
            for b in range(B):
                for d in range(D):
                    g[ix[b], d] += up[b, d]
        return

    # mult: same prefix/suffix recurrences as the numpy backend
    cdef cnp.ndarray[cnp.float64_t, ndim=3] zs = np.empty((k, B, D), dtype=np.float64)
    cdef double[:, :, ::1] z = zs
    for j in range(k):
        t = tables[j]
        ix = indices[j]
        for b in range(B):
            for d in range(D):
                z[j, b, d] = t[ix[b], d]
    cdef cnp.ndarray[cnp.float64_t, ndim=3] pre = np.empty((k + 1, B, D), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] suf = np.empty((k + 2, B, D), dtype=np.float64)
    cdef double[:, :, ::1] p = pre
    cdef double[:, :, ::1] s = suf
    for b in range(B):
        for d in range(D):
            p[0, b, d] = 1.0
            s[k + 1, b, d] = 1.0
    for j in range(1, k + 1):
        for b in range(B):
            for d in range(D):
                p[j, b, d] = p[j - 1, b, d] * z[j - 1, b, d]
    for j in range(k, 0, -1):
        for b in range(B):
            for d in range(D):
                if j < k:
                    s[j, b, d] = z[j - 1, b, d] * s[j + 1, b, d]
                else:
                    s[j, b, d] = z[j - 1, b, d]
    for j in range(1, k + 1):
        g = grad_tables[j - 1]
        ix = indices[j - 1]
        for b in range(B):
            for d in range(D):
                cof = p[j - 1, b, d] * s[j + 1, b, d]
                g[ix[b], d] += up[b, d] * cof


def scatter_add_rows(cnp.ndarray[cnp.float64_t, ndim=2] grad_table,
                     cnp.ndarray[cnp.int64_t, ndim=1] rows,
                     cnp.ndarray[cnp.float64_t, ndim=2] values):
    cdef Py_ssize_t b, d, B = rows.shape[0], D = grad_table.shape[1]
    cdef double[:, ::1] g = grad_table
    cdef double[:, ::1] v = values
    cdef long[::1] r = rows
    for b in range(B):
        for d in range(D):
            g[r[b], d] += v[b, d]


def adagrad_update_rows(cnp.ndarray[cnp.float64_t, ndim=2] param,
                        cnp.ndarray[cnp.float64_t, ndim=2] accum,
                        cnp.ndarray[cnp.int64_t, ndim=1] rows,
                        cnp.ndarray[cnp.float64_t, ndim=2] grads,
                        double lr, double eps):
    cdef Py_ssize_t b, d, B = rows.shape[0], D = param.shape[1]
    cdef double[:, ::1] p = param
    cdef double[:, ::1] a = accum
    cdef double[:, ::1] g = grads
    cdef long[::1] r = rows
    cdef double gv
    for b in range(B):
        for d in range(D):
            gv = g[b, d]
            a[r[b], d] += gv * gv
            p[r[b], d] -= lr * gv / sqrt(a[r[b], d] + eps)

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled regression kernels: one fused pass per sample.

Same contract as ``hora._kernels_py``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


def mixture_forward(double[:, ::1] X, double[::1] pi, double[::1] c,
                    double[:, :, :, ::1] S, double[:, :, :, ::1] V):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t H = S.shape[0], L = S.shape[1]
    g_arr = np.zeros((n, d))
    w_arr = np.empty((n, H, L))
    cdef double[:, ::1] g = g_arr
    cdef double[:, :, ::1] w = w_arr
    cdef double[::1] tmp = np.empty(d)
    cdef Py_ssize_t s, h, j, a, b
    cdef double sc, mx, tot, acc
    with nogil:
        for s in range(n):
            for h in range(H):
                mx = -1e308
                for j in range(L):
                    sc = c[j]
                    for a in range(d):
                        acc = 0.0
                        for b in range(d):
                            acc = acc + S[h, j, a, b] * X[s, b]
                        sc = sc + X[s, a] * acc
                    w[s, h, j] = sc
                    if sc > mx:
                        mx = sc
                tot = 0.0
                for j in range(L):
                    w[s, h, j] = exp(w[s, h, j] - mx)
                    tot = tot + w[s, h, j]
                for j in range(L):
                    w[s, h, j] = w[s, h, j] / tot
                    for a in range(d):
                        acc = 0.0
                        for b in range(d):
                            acc = acc + V[h, j, a, b] * X[s, b]
                        g[s, a] = g[s, a] + pi[h] * w[s, h, j] * acc
    return g_arr, w_arr


def objective_grad(double[:, ::1] X, double[:, ::1] Y, double[::1] pi, double[::1] c,
                   double[:, :, :, ::1] S, double[:, :, :, ::1] V, bint need_grad=True):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t H = S.shape[0], L = S.shape[1]
    cdef double[:, ::1] w = np.empty((H, L))
    cdef double[:, :, ::1] U = np.empty((H, L, d))
    cdef double[:, ::1] m = np.empty((H, d))
    cdef double[::1] e = np.empty(d)
    cdef double[::1] av = np.empty(d)
    dpi_arr = np.zeros(H)
    dc_arr = np.zeros(L)
    dS_arr = np.zeros((H, L, d, d))
    dV_arr = np.zeros((H, L, d, d))
    cdef double[::1] dpi = dpi_arr
    cdef double[::1] dc = dc_arr
    cdef double[:, :, :, ::1] dS = dS_arr
    cdef double[:, :, :, ::1] dV = dV_arr
    cdef Py_ssize_t s, h, j, a, b
    cdef double sc, mx, tot, acc, obj = 0.0, am, ds, coef
    with nogil:
        for s in range(n):
            for a in range(d):
                e[a] = -Y[s, a]
            for h in range(H):
                mx = -1e308
                for j in range(L):
                    sc = c[j]
                    for a in range(d):
                        acc = 0.0
                        for b in range(d):
                            acc = acc + S[h, j, a, b] * X[s, b]
                        sc = sc + X[s, a] * acc
                    w[h, j] = sc
                    if sc > mx:
                        mx = sc
                tot = 0.0
                for j in range(L):
                    w[h, j] = exp(w[h, j] - mx)
                    tot = tot + w[h, j]
                for a in range(d):
                    m[h, a] = 0.0
                for j in range(L):
                    w[h, j] = w[h, j] / tot
                    for a in range(d):
                        acc = 0.0
                        for b in range(d):
                            acc = acc + V[h, j, a, b] * X[s, b]
                        U[h, j, a] = acc
                        m[h, a] = m[h, a] + w[h, j] * acc
                for a in range(d):
                    e[a] = e[a] + pi[h] * m[h, a]
            for a in range(d):
                obj = obj + e[a] * e[a]
            if not need_grad:
                continue
            for h in range(H):
                am = 0.0
                acc = 0.0
                for a in range(d):
                    av[a] = 2.0 * pi[h] * e[a]
                    am = am + av[a] * m[h, a]
                    acc = acc + e[a] * m[h, a]
                dpi[h] = dpi[h] + 2.0 * acc
                for j in range(L):
                    acc = 0.0
                    for a in range(d):
                        acc = acc + av[a] * U[h, j, a]
                    ds = w[h, j] * (acc - am)
                    dc[j] = dc[j] + ds
                    for a in range(d):
                        coef = ds * X[s, a]
                        for b in range(d):
                            dS[h, j, a, b] = dS[h, j, a, b] + coef * X[s, b]
                        coef = w[h, j] * av[a]
                        for b in range(d):
                            dV[h, j, a, b] = dV[h, j, a, b] + coef * X[s, b]
    if not need_grad:
        return obj, None
    return obj, (dpi_arr, dc_arr, dS_arr, dV_arr)

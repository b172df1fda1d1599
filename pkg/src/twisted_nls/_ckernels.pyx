# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pointwise kernels; same contracts as ``_pykernels``.

Reductions run sequentially in node order, so results do not depend on
thread count.
"""

import numpy as np
from libc.math cimport exp, log, pow, sqrt, isinf


cdef inline double _psi(double s, double lam, double alpha, double m) noexcept nogil:
    cdef double s2
    if alpha == 2.0:
        s2 = s * s
        if m <= 0.0 or s <= m:
            return lam * s2
        return lam * (2.0 * m * m - m * m * m * m / s2)
    if m <= 0.0 or s <= m:
        return lam * pow(s, alpha)
    return lam * (m * m * pow(s, alpha - 2.0) - pow(m, alpha + 2.0) / (s * s) + pow(m, alpha))


cdef inline double _psi_sq(double s2, double lam, double alpha, double m) noexcept nogil:
    """psi_m evaluated from the squared modulus."""
    if alpha == 2.0:
        if m <= 0.0 or s2 <= m * m:
            return lam * s2
        return lam * (2.0 * m * m - m * m * m * m / s2)
    return _psi(sqrt(s2), lam, alpha, m)


cdef inline double _dpsi(double s, double lam, double alpha, double m) noexcept nogil:
    if m <= 0.0 or s <= m:
        if alpha == 2.0:
            return 2.0 * lam * s
        return lam * alpha * pow(s, alpha - 1.0)
    return lam * (m * m * (alpha - 2.0) * pow(s, alpha - 3.0) + 2.0 * pow(m, alpha + 2.0) / (s * s * s))


cdef inline double _gtilde_sq(double s2, double lam, double alpha, double m) noexcept nogil:
    """Energy density from the squared modulus s2 = sigma^2."""
    cdef double ma, ma2
    if alpha == 2.0:
        if m <= 0.0 or s2 <= m * m:
            return 0.25 * lam * s2 * s2
        ma = m * m
        return lam * (0.25 * ma * ma + 0.5 * ma * (s2 - ma)
                      - 0.5 * ma * ma * log(s2 / ma) + 0.5 * ma * (s2 - ma))
    if m <= 0.0 or s2 <= m * m:
        return lam * exp(0.5 * (alpha + 2.0) * log(s2)) / (alpha + 2.0) if s2 > 0.0 else 0.0
    ma = pow(m, alpha)
    ma2 = ma * m * m
    return lam * (ma2 / (alpha + 2.0) + m * m * (pow(s2, 0.5 * alpha) - ma) / alpha
                  - 0.5 * ma2 * log(s2 / (m * m)) + 0.5 * ma * (s2 - m * m))


def psi_m(sigma, double lam, double alpha, double m):
    cdef double[::1] s = np.ascontiguousarray(sigma, dtype=np.float64).ravel()
    out = np.empty(s.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(s.shape[0]):
            o[i] = _psi(s[i], lam, alpha, m)
    return out.reshape(np.shape(sigma))


def dpsi_m(sigma, double lam, double alpha, double m):
    cdef double[::1] s = np.ascontiguousarray(sigma, dtype=np.float64).ravel()
    out = np.empty(s.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(s.shape[0]):
            o[i] = _dpsi(s[i], lam, alpha, m)
    return out.reshape(np.shape(sigma))


def gtilde_m(sigma, double lam, double alpha, double m):
    cdef double[::1] s = np.ascontiguousarray(sigma, dtype=np.float64).ravel()
    out = np.empty(s.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(s.shape[0]):
            o[i] = _gtilde_sq(s[i] * s[i], lam, alpha, m)
    return out.reshape(np.shape(sigma))


def g_m(u, double lam, double alpha, double m):
    cdef double[::1] v = np.ascontiguousarray(u, dtype=np.complex128).ravel().view(np.float64)
    out = np.empty(v.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t i, N = v.shape[0] // 2
    cdef double re, im, f
    with nogil:
        for i in range(N):
            re = v[2 * i]
            im = v[2 * i + 1]
            f = _psi_sq(re * re + im * im, lam, alpha, m)
            o[2 * i] = f * re
            o[2 * i + 1] = f * im
    return out.view(np.complex128).reshape(np.shape(u))


def _rows(values):
    arr = np.ascontiguousarray(values, dtype=np.complex128)
    lead = arr.shape[:-1]
    return arr.reshape(-1, arr.shape[arr.ndim - 1]).view(np.float64), lead


def gtilde_sum(u, weights, double lam, double alpha, double m):
    flat, lead = _rows(u)
    cdef double[:, ::1] v = flat
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t rows = v.shape[0], N = w.shape[0], r, i
    out = np.empty(rows)
    cdef double[::1] o = out
    cdef double acc, re, im
    with nogil:
        for r in range(rows):
            acc = 0.0
            for i in range(N):
                re = v[r, 2 * i]
                im = v[r, 2 * i + 1]
                acc += w[i] * _gtilde_sq(re * re + im * im, lam, alpha, m)
            o[r] = acc
    return out.reshape(lead) if lead else float(out[0])


def lp_sums(values, weights, double p):
    flat, lead = _rows(values)
    cdef double[:, ::1] v = flat
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t rows = v.shape[0], N = w.shape[0], r, i
    out = np.empty(rows)
    cdef double[::1] o = out
    cdef double acc, a2
    cdef double[:, ::1] pw
    if not isinf(p) and p != 2.0:
        # NumPy's vectorized power beats scalar pow; the reduction stays sequential
        sq = np.empty((rows, N))
        pw = sq
        with nogil:
            for r in range(rows):
                for i in range(N):
                    pw[r, i] = v[r, 2 * i] * v[r, 2 * i] + v[r, 2 * i + 1] * v[r, 2 * i + 1]
        np.power(sq, 0.5 * p, out=sq)
        with nogil:
            for r in range(rows):
                acc = 0.0
                for i in range(N):
                    acc += w[i] * pw[r, i]
                o[r] = acc
        return out.reshape(lead) if lead else float(out[0])
    with nogil:
        if isinf(p):
            for r in range(rows):
                acc = 0.0
                for i in range(N):
                    a2 = v[r, 2 * i] * v[r, 2 * i] + v[r, 2 * i + 1] * v[r, 2 * i + 1]
                    if a2 > acc:
                        acc = a2
                o[r] = sqrt(acc)
        else:
            for r in range(rows):
                acc = 0.0
                for i in range(N):
                    acc += w[i] * (v[r, 2 * i] * v[r, 2 * i] + v[r, 2 * i + 1] * v[r, 2 * i + 1])
                o[r] = acc
    return out.reshape(lead) if lead else float(out[0])

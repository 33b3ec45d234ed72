# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled row-wise kernels for the TV and unimodal proximal operators.

Mirrors ``_kernels_py.py``; both backends are tested against the same oracles.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef void _tv_denoise_1d(const double* y, Py_ssize_t n, double lam, double* out) noexcept nogil:
    cdef Py_ssize_t k = 0, k0 = 0, kplus = 0, kminus = 0, i
    cdef double umin, umax, vmin, vmax, twolam, minlam
    if lam <= 0.0 or n < 2:
        for i in range(n):
            out[i] = y[i]
        return
    umin = lam
    umax = -lam
    vmin = y[0] - lam
    vmax = y[0] + lam
    twolam = 2.0 * lam
    minlam = -lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > kminus:
                        break
                k = k0
                kminus = k0
                vmin = y[k]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                while True:
                    out[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = k0
                kplus = k0
                vmax = y[k]
                umax = minlam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > k:
                        break
                return
        umin += y[k + 1] - vmin
        if umin < minlam:
            while True:
                out[k0] = vmin
                k0 += 1
                if k0 > kminus:
                    break
            k = k0
            kplus = k0
            kminus = k0
            vmin = y[k]
            vmax = vmin + twolam
            umin = lam
            umax = minlam
            continue
        umax += y[k + 1] - vmax
        if umax > lam:
            while True:
                out[k0] = vmax
                k0 += 1
                if k0 > kplus:
                    break
            k = k0
            kplus = k0
            kminus = k0
            vmax = y[k]
            vmin = vmax - twolam
            umin = lam
            umax = minlam
            continue
        k += 1
        if umin >= lam:
            kminus = k
            vmin += (umin - lam) / (kminus - k0 + 1)
            umin = lam
        if umax <= minlam:
            kplus = k
            vmax += (umax + lam) / (kplus - k0 + 1)
            umax = minlam


def tv_denoise_rows(Y, double lam):
    """Exact TV proximal operator ``argmin_x lam * sum|x_i - x_{i-1}| + 0.5 ||x - y||^2`` per row."""
    cdef double[:, ::1] y = np.ascontiguousarray(Y, dtype=np.float64)
    out_arr = np.empty((y.shape[0], y.shape[1]), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, n = y.shape[1]
    if n == 0:
        return out_arr
    with nogil:
        for i in range(y.shape[0]):
            _tv_denoise_1d(&y[i, 0], n, lam, &out[i, 0])
    return out_arr


cdef inline double _block_error(double s, Py_ssize_t c, double q, bint nonneg) noexcept nogil:
    if nonneg and s <= 0.0:
        return q
    return q - s * s / c


cdef void _prefix_isotonic_errors(const double* y, Py_ssize_t n, int step, bint nonneg,
                                  double* sums, Py_ssize_t* counts, double* squares,
                                  double* errors) noexcept nogil:
    cdef Py_ssize_t i, c, top = -1, start = 0 if step > 0 else n - 1
    cdef double s, q, v, total = 0.0
    for i in range(n):
        v = y[start + step * i]
        s = v
        c = 1
        q = v * v
        while top >= 0 and sums[top] * c >= s * counts[top]:
            total -= _block_error(sums[top], counts[top], squares[top], nonneg)
            s += sums[top]
            c += counts[top]
            q += squares[top]
            top -= 1
        top += 1
        sums[top] = s
        counts[top] = c
        squares[top] = q
        total += _block_error(s, c, q, nonneg)
        errors[i] = total


cdef void _isotonic_fit(const double* y, Py_ssize_t lo, Py_ssize_t hi, int step, bint nonneg,
                        double* sums, Py_ssize_t* counts, double* out) noexcept nogil:
    cdef Py_ssize_t n = hi - lo, i, j, b, c, top = -1
    cdef Py_ssize_t start = lo if step > 0 else hi - 1
    cdef double s, value
    if n <= 0:
        return
    for i in range(n):
        s = y[start + step * i]
        c = 1
        while top >= 0 and sums[top] * c >= s * counts[top]:
            s += sums[top]
            c += counts[top]
            top -= 1
        top += 1
        sums[top] = s
        counts[top] = c
    i = n
    for b in range(top, -1, -1):
        value = sums[b] / counts[b]
        if nonneg and value < 0.0:
            value = 0.0
        for j in range(counts[b]):
            i -= 1
            out[start + step * i] = value


cdef void _unimodal_1d(const double* y, Py_ssize_t n, bint nonneg, double tol,
                       double* sums, Py_ssize_t* counts, double* squares,
                       double* inc, double* dec, double* out) noexcept nogil:
    cdef Py_ssize_t m, mode = 0
    cdef double err, best, threshold, norm_sq = 0.0
    for m in range(n):
        norm_sq += y[m] * y[m]
    _prefix_isotonic_errors(y, n, 1, nonneg, sums, counts, squares, inc)
    _prefix_isotonic_errors(y, n, -1, nonneg, sums, counts, squares, dec)
    best = inc[n - 1]
    for m in range(n - 1):
        err = inc[m] + dec[n - 2 - m]
        if err < best:
            best = err
    threshold = best + tol * (1.0 + norm_sq)
    for m in range(n):
        err = inc[m]
        if m < n - 1:
            err += dec[n - 2 - m]
        if err <= threshold:
            mode = m
            break
    _isotonic_fit(y, 0, mode + 1, 1, nonneg, sums, counts, out)
    _isotonic_fit(y, mode + 1, n, -1, nonneg, sums, counts, out)


def unimodal_rows(Y, bint nonneg=False, double tol=1e-12):
    """Least-squares unimodal (non-decreasing then non-increasing) fit to each row."""
    cdef double[:, ::1] y = np.ascontiguousarray(Y, dtype=np.float64)
    out_arr = np.empty((y.shape[0], y.shape[1]), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, n = y.shape[1]
    if n == 0:
        return out_arr
    cdef double* sums = <double*> malloc(n * sizeof(double))
    cdef double* squares = <double*> malloc(n * sizeof(double))
    cdef double* inc = <double*> malloc(n * sizeof(double))
    cdef double* dec = <double*> malloc(n * sizeof(double))
    cdef Py_ssize_t* counts = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    if not sums or not squares or not inc or not dec or not counts:
        free(sums); free(squares); free(inc); free(dec); free(counts)
        raise MemoryError()
    try:
        with nogil:
            for i in range(y.shape[0]):
                _unimodal_1d(&y[i, 0], n, nonneg, tol, sums, counts, squares, inc, dec, &out[i, 0])
    finally:
        free(sums); free(squares); free(inc); free(dec); free(counts)
    return out_arr


def isotonic_rows(Y, bint increasing=True, bint nonneg=False):
    """Least-squares monotone fit to each row via pool-adjacent-violators."""
    cdef double[:, ::1] y = np.ascontiguousarray(Y, dtype=np.float64)
    out_arr = np.empty((y.shape[0], y.shape[1]), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, n = y.shape[1]
    cdef int step = 1 if increasing else -1
    if n == 0:
        return out_arr
    cdef double* sums = <double*> malloc(n * sizeof(double))
    cdef Py_ssize_t* counts = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    if not sums or not counts:
        free(sums); free(counts)
        raise MemoryError()
    try:
        with nogil:
            for i in range(y.shape[0]):
                _isotonic_fit(&y[i, 0], 0, n, step, nonneg, sums, counts, &out[i, 0])
    finally:
        free(sums); free(counts)
    return out_arr

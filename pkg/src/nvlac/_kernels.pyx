# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, M_PI
from scipy.linalg.cython_blas cimport zgemm

cnp.import_array()

cdef double TWO_PI = 2.0 * M_PI
cdef double _P = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
cdef double _Q = 1.0 - 2.0 * _P


def greedy_assign(score):
    cdef double[:, ::1] s = np.ascontiguousarray(score, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0]
    cdef cnp.intp_t[::1] order = np.argsort(-np.asarray(s), axis=None, kind="stable").astype(np.intp)
    perm_arr = np.full(n, -1, dtype=np.intp)
    best_arr = np.zeros(n)
    cdef cnp.intp_t[::1] perm = perm_arr
    cdef double[::1] best = best_arr
    cdef unsigned char[::1] row_used = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] col_used = np.zeros(n, dtype=np.uint8)
    cdef Py_ssize_t k, r, c, done = 0
    for k in range(n * n):
        r = order[k] // n
        c = order[k] % n
        if row_used[r] or col_used[c]:
            continue
        perm[r] = c
        best[r] = s[r, c]
        row_used[r] = 1
        col_used[c] = 1
        done += 1
        if done == n:
            break
    return perm_arr, best_arr


cdef inline double complex cexpi(double x) nogil:
    return cos(x) + 1j * sin(x)


cdef inline void _matmul(double complex[:, ::1] a, double complex[:, ::1] b,
                         double complex[:, ::1] c) noexcept nogil:
    # row-major c = a @ b via column-major zgemm on the transposes
    cdef int n = <int>a.shape[0]
    cdef double complex one = 1.0, zero = 0.0
    cdef char tr = b'N'
    zgemm(&tr, &tr, &n, &n, &n, &one, &b[0, 0], &n, &a[0, 0], &n, &zero, &c[0, 0], &n)


cdef void _strang(double complex[:, ::1] u, double complex[:, ::1] tmp,
                  double[::1] energies, double[::1] w,
                  double complex[:, ::1] W, double complex[:, ::1] Wh,
                  double frequency, double alpha, double t_mid, double h) noexcept nogil:
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t i, j
    cdef double c = cos(TWO_PI * frequency * t_mid + alpha)
    cdef double complex ph
    for i in range(n):
        ph = cexpi(-TWO_PI * energies[i] * 0.5 * h)
        for j in range(n):
            u[i, j] = ph * u[i, j]
    _matmul(Wh, u, tmp)
    for i in range(n):
        ph = cexpi(-TWO_PI * c * w[i] * h)
        for j in range(n):
            tmp[i, j] = ph * tmp[i, j]
    _matmul(W, tmp, u)
    for i in range(n):
        ph = cexpi(-TWO_PI * energies[i] * 0.5 * h)
        for j in range(n):
            u[i, j] = ph * u[i, j]


cdef void _step(double complex[:, ::1] u, double complex[:, ::1] tmp,
                double[::1] energies, double[::1] w,
                double complex[:, ::1] W, double complex[:, ::1] Wh,
                double frequency, double alpha, double t0, double h) noexcept nogil:
    _strang(u, tmp, energies, w, W, Wh, frequency, alpha, t0 + 0.5 * _P * h, _P * h)
    _strang(u, tmp, energies, w, W, Wh, frequency, alpha, t0 + (_P + 0.5 * _Q) * h, _Q * h)
    _strang(u, tmp, energies, w, W, Wh, frequency, alpha, t0 + (_P + _Q + 0.5 * _P) * h, _P * h)


def split_step(u, energies, w, W, double frequency, double alpha, double t0, double h):
    out = np.array(u, dtype=np.complex128, order="C", copy=True)
    cdef double complex[:, ::1] uv = out
    cdef double complex[:, ::1] tmp = np.empty_like(out)
    cdef double[::1] e = np.ascontiguousarray(energies, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double complex[:, ::1] Wv = np.ascontiguousarray(W, dtype=np.complex128)
    cdef double complex[:, ::1] Whv = np.ascontiguousarray(np.conj(np.asarray(W)).T, dtype=np.complex128)
    with nogil:
        _step(uv, tmp, e, wv, Wv, Whv, frequency, alpha, t0, h)
    return out


def prefix_propagators(energies, w, W, double frequency, double alpha, double dt, Py_ssize_t nsteps):
    cdef double[::1] e = np.ascontiguousarray(energies, dtype=np.float64)
    cdef Py_ssize_t n = e.shape[0]
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double complex[:, ::1] Wv = np.ascontiguousarray(W, dtype=np.complex128)
    cdef double complex[:, ::1] Whv = np.ascontiguousarray(np.conj(np.asarray(W)).T, dtype=np.complex128)
    out_arr = np.empty((nsteps + 1, n, n), dtype=np.complex128)
    cdef double complex[:, :, ::1] out = out_arr
    u_arr = np.eye(n, dtype=np.complex128)
    cdef double complex[:, ::1] u = u_arr
    cdef double complex[:, ::1] tmp = np.empty((n, n), dtype=np.complex128)
    cdef Py_ssize_t k
    out[0, :, :] = u
    with nogil:
        for k in range(nsteps):
            _step(u, tmp, e, wv, Wv, Whv, frequency, alpha, k * dt, dt)
            out[k + 1, :, :] = u
    return out_arr


def lorentz_magnitude(centers, grid, double rate):
    cdef double[::1] c = np.ascontiguousarray(centers, dtype=np.float64)
    cdef double[::1] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef Py_ssize_t nc = c.shape[0], ng = g.shape[0]
    out_arr = np.empty(ng)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, k
    cdef double re, im, x, d
    with nogil:
        for i in range(ng):
            re = 0.0
            im = 0.0
            for k in range(nc):
                x = TWO_PI * (g[i] - c[k])
                d = rate * rate + x * x
                re = re + rate / d
                im = im - x / d
            out[i] = (re * re + im * im) ** 0.5 / nc
    return out_arr

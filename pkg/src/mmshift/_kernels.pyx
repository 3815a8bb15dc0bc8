# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Same contract as ``_kernels_py``."""
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef double _lhs(double lam, const double[::1] sqrt_t, const double[::1] inv_s,
                 double scale) noexcept nogil:
    cdef Py_ssize_t i
    cdef double acc = 0.0, gap
    for i in range(sqrt_t.shape[0]):
        gap = sqrt_t[i] / lam - 1.0
        if gap > 0.0:
            acc += inv_s[i] * gap
    return scale * acc


def waterfill_lhs(double lam, sqrt_t, inv_s, double scale):
    cdef const double[::1] st = np.ascontiguousarray(sqrt_t, dtype=np.float64)
    cdef const double[::1] iv = np.ascontiguousarray(inv_s, dtype=np.float64)
    return _lhs(lam, st, iv, scale)


def waterfill_bisect(sqrt_t, inv_s, double scale, double r2, int max_iter=200):
    cdef const double[::1] st = np.ascontiguousarray(sqrt_t, dtype=np.float64)
    cdef const double[::1] iv = np.ascontiguousarray(inv_s, dtype=np.float64)
    cdef double lo = 0.0, hi = 0.0, mid
    cdef Py_ssize_t i
    cdef int it = 0
    for i in range(st.shape[0]):
        if st[i] > hi:
            hi = st[i]
    with nogil:
        for it in range(1, max_iter + 1):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if _lhs(mid, st, iv, scale) > r2:
                lo = mid
            else:
                hi = mid
    return 0.5 * (lo + hi), it


def norm_sum_argmax(g, h, double a, double b, w, int block=4096):
    cdef const double[:, ::1] gm = np.ascontiguousarray(g, dtype=np.float64)
    cdef const double[:, ::1] hm = np.ascontiguousarray(h, dtype=np.float64)
    cdef const double[:, ::1] wm = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = wm.shape[0], d = wm.shape[1], k = gm.shape[1], i, j, l
    cdef double best = -1.0, x, y, ng, nh, val
    cdef Py_ssize_t bi = 0
    with nogil:
        for i in range(n):
            ng = 0.0
            nh = 0.0
            for j in range(k):
                x = 0.0
                y = 0.0
                for l in range(d):
                    x = x + wm[i, l] * gm[l, j]
                    y = y + wm[i, l] * hm[l, j]
                ng = ng + x * x
                nh = nh + y * y
            val = a * sqrt(ng) + b * sqrt(nh)
            if val > best:
                best = val
                bi = i
    return best, bi

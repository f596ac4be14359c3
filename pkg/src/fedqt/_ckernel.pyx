# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled ansatz kernel; same contract as ``_fallback.evolve``."""
import numpy as np
cimport numpy as cnp
from libc.string cimport memcpy

cnp.import_array()


cdef void _evolve_row(double* row, double* tmp, const double* c_row, const double* s_row,
                      const cnp.int64_t* src, Py_ssize_t dim, Py_ssize_t n,
                      Py_ssize_t n_layers) noexcept nogil:
    cdef Py_ssize_t layer, q, i, blk, lo, stride, base
    cdef double c, s, a0, a1
    for layer in range(n_layers):
        for i in range(dim):
            tmp[i] = row[src[i]]
        memcpy(row, tmp, dim * sizeof(double))
        for q in range(n):
            c = c_row[layer * n + q]
            s = s_row[layer * n + q]
            stride = dim >> (q + 1)
            for blk in range(dim // (2 * stride)):
                base = 2 * stride * blk
                for lo in range(base, base + stride):
                    a0 = row[lo]
                    a1 = row[lo + stride]
                    row[lo] = c * a0 - s * a1
                    row[lo + stride] = s * a0 + c * a1


def evolve(double[:, ::1] psi, const double[:, :, ::1] cos_half,
           const double[:, :, ::1] sin_half, const cnp.int64_t[::1] src):
    cdef Py_ssize_t b = psi.shape[0], dim = psi.shape[1]
    cdef Py_ssize_t n_layers = cos_half.shape[1], n = cos_half.shape[2]
    cdef Py_ssize_t r
    if cos_half.shape[0] != b or sin_half.shape[0] != b or src.shape[0] != dim or dim != (1 << n):
        raise ValueError("inconsistent kernel argument shapes")
    cdef double[::1] tmp = np.empty(dim, dtype=np.float64)
    with nogil:
        for r in range(b):
            _evolve_row(&psi[r, 0], &tmp[0], &cos_half[r, 0, 0], &sin_half[r, 0, 0],
                        &src[0], dim, n, n_layers)
    return np.asarray(psi)

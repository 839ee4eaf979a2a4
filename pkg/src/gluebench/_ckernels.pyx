# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled matrix-free kernels for the weighted face Laplacian."""

from cython.parallel import prange

import numpy as np


def weighted_laplacian_2d(const double[:, ::1] u, const double[:, ::1] wx,
                          const double[:, ::1] wy, double h, int nthreads=1):
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1]
    cdef Py_ssize_t i, j
    cdef double inv = 1.0 / (h * h)
    cdef double c, acc
    out_arr = np.empty((nx, ny), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in prange(nx, nogil=True, num_threads=nthreads, schedule="static"):
        for j in range(ny):
            c = u[i, j]
            acc = 0.0
            if i + 1 < nx:
                acc = acc + wx[i + 1, j] * (c - u[i + 1, j])
            else:
                acc = acc + wx[i + 1, j] * c
            if i > 0:
                acc = acc + wx[i, j] * (c - u[i - 1, j])
            else:
                acc = acc + wx[i, j] * c
            if j + 1 < ny:
                acc = acc + wy[i, j + 1] * (c - u[i, j + 1])
            else:
                acc = acc + wy[i, j + 1] * c
            if j > 0:
                acc = acc + wy[i, j] * (c - u[i, j - 1])
            else:
                acc = acc + wy[i, j] * c
            out[i, j] = acc * inv
    return out_arr


def weighted_laplacian_3d(const double[:, :, ::1] u, const double[:, :, ::1] wx,
                          const double[:, :, ::1] wy, const double[:, :, ::1] wz,
                          double h, int nthreads=1):
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], nz = u.shape[2]
    cdef Py_ssize_t i, j, k
    cdef double inv = 1.0 / (h * h)
    cdef double c, acc
    out_arr = np.empty((nx, ny, nz), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    for i in prange(nx, nogil=True, num_threads=nthreads, schedule="static"):
        for j in range(ny):
            for k in range(nz):
                c = u[i, j, k]
                acc = 0.0
                if i + 1 < nx:
                    acc = acc + wx[i + 1, j, k] * (c - u[i + 1, j, k])
                else:
                    acc = acc + wx[i + 1, j, k] * c
                if i > 0:
                    acc = acc + wx[i, j, k] * (c - u[i - 1, j, k])
                else:
                    acc = acc + wx[i, j, k] * c
                if j + 1 < ny:
                    acc = acc + wy[i, j + 1, k] * (c - u[i, j + 1, k])
                else:
                    acc = acc + wy[i, j + 1, k] * c
                if j > 0:
                    acc = acc + wy[i, j, k] * (c - u[i, j - 1, k])
                else:
                    acc = acc + wy[i, j, k] * c
                if k + 1 < nz:
                    acc = acc + wz[i, j, k + 1] * (c - u[i, j, k + 1])
                else:
                    acc = acc + wz[i, j, k + 1] * c
                if k > 0:
                    acc = acc + wz[i, j, k] * (c - u[i, j, k - 1])
                else:
                    acc = acc + wz[i, j, k] * c
                out[i, j, k] = acc * inv
    return out_arr

# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled simplex pivot kernel.

Same pivot sequence as ``_simplex_py.iterate`` (Dantzig pricing, min-ratio
with smallest-basis tie break, Bland's rule after a stall); the module is
compiled with contraction disabled so both kernels produce identical
floating-point trajectories.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def iterate(double[:, ::1] T, cnp.int64_t[::1] basis, Py_ssize_t ncols,
            double tol, long long bland_after, long long max_iter):
    cdef Py_ssize_t m = T.shape[0] - 1
    cdef Py_ssize_t rhs = T.shape[1] - 1
    cdef Py_ssize_t ncol_total = T.shape[1]
    cdef bint bland = False
    cdef long long stall = 0
    cdef double last_obj = T[m, rhs]
    cdef long long it = 0
    cdef Py_ssize_t i, j, k, pr
    cdef double best_rc, rc, best_ratio, ratio, piv, f, obj

    while it < max_iter:
        # entering column
        j = -1
        if bland:
            for k in range(ncols):
                if T[m, k] < -tol:
                    j = k
                    break
            if j < 0:
                return 0, it
        else:
            best_rc = T[m, 0]
            j = 0
            for k in range(1, ncols):
                rc = T[m, k]
                if rc < best_rc:
                    best_rc = rc
                    j = k
            if best_rc >= -tol:
                return 0, it

        # leaving row: min ratio, ties by smallest basis variable
        pr = -1
        best_ratio = 0.0
        for i in range(m):
            if T[i, j] > tol:
                ratio = T[i, rhs] / T[i, j]
                if pr < 0 or ratio < best_ratio or (ratio == best_ratio and basis[i] < basis[pr]):
                    best_ratio = ratio
                    pr = i
        if pr < 0:
            return 1, it

        # pivot
        piv = T[pr, j]
        for k in range(ncol_total):
            T[pr, k] /= piv
        for i in range(m + 1):
            if i == pr:
                continue
            f = T[i, j]
            if f != 0.0:
                for k in range(ncol_total):
                    T[i, k] -= f * T[pr, k]
        for i in range(m + 1):
            T[i, j] = 0.0
        T[pr, j] = 1.0
        basis[pr] = j
        it += 1

        obj = T[m, rhs]
        if obj - last_obj > 1e-12 or last_obj - obj > 1e-12:
            stall = 0
            last_obj = obj
        else:
            stall += 1
            if stall >= bland_after:
                bland = True
    return 2, it

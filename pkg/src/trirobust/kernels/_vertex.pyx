# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Active-set vertex enumeration for small polytopes {z : A z <= b}.

Every n-subset of rows is solved as an equality system by Gaussian
elimination with partial pivoting on row-equilibrated copies; feasible,
nonsingular solutions are kept once (infinity-norm dedupe).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef inline bint _next_combination(Py_ssize_t[::1] idx, Py_ssize_t n, Py_ssize_t m) noexcept nogil:
    cdef Py_ssize_t i = n - 1
    while i >= 0 and idx[i] == m - n + i:
        i -= 1
    if i < 0:
        return False
    idx[i] += 1
    i += 1
    while i < n:
        idx[i] = idx[i - 1] + 1
        i += 1
    return True


cdef bint _solve_subset(const double[:, ::1] A, const double[::1] b, Py_ssize_t[::1] idx,
                        double[:, ::1] W, double[::1] z, double pivot_tol) noexcept nogil:
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t r, c, k, piv
    cdef double scale, best, tmp, factor
    for r in range(n):
        scale = 0.0
        for c in range(n):
            tmp = fabs(A[idx[r], c])
            if tmp > scale:
                scale = tmp
        if scale == 0.0:
            return False
        for c in range(n):
            W[r, c] = A[idx[r], c] / scale
        W[r, n] = b[idx[r]] / scale
    for k in range(n):
        piv = k
        best = fabs(W[k, k])
        for r in range(k + 1, n):
            if fabs(W[r, k]) > best:
                best = fabs(W[r, k])
                piv = r
        if best < pivot_tol:
            return False
        if piv != k:
            for c in range(k, n + 1):
                tmp = W[k, c]
                W[k, c] = W[piv, c]
                W[piv, c] = tmp
        for r in range(k + 1, n):
            factor = W[r, k] / W[k, k]
            if factor != 0.0:
                for c in range(k, n + 1):
                    W[r, c] -= factor * W[k, c]
    for k in range(n - 1, -1, -1):
        tmp = W[k, n]
        for c in range(k + 1, n):
            tmp -= W[k, c] * z[c]
        z[k] = tmp / W[k, k]
    return True


def enumerate_vertices(A, b, double feas_tol=1e-9, double dedup_tol=1e-9, double pivot_tol=1e-10):
    """Return an array (k, n) of the vertices of {z : A z <= b}."""
    cdef const double[:, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t m = Av.shape[0]
    cdef Py_ssize_t n = Av.shape[1]
    if n == 0 or m < n:
        return np.zeros((0, n))
    cdef Py_ssize_t[::1] idx = np.arange(n, dtype=np.intp)
    cdef double[:, ::1] W = np.empty((n, n + 1))
    cdef double[::1] z = np.empty(n)
    cdef Py_ssize_t cap = 64, count = 0
    cdef double[:, ::1] out = np.empty((cap, n))
    cdef Py_ssize_t i, j, v
    cdef double act, slack, diff, dmax, zmax
    cdef bint feasible, dup
    while True:
        if _solve_subset(Av, bv, idx, W, z, pivot_tol):
            feasible = True
            for i in range(m):
                act = 0.0
                for j in range(n):
                    act += Av[i, j] * z[j]
                slack = feas_tol * (fabs(bv[i]) if fabs(bv[i]) > 1.0 else 1.0)
                if act > bv[i] + slack:
                    feasible = False
                    break
            if feasible:
                dup = False
                zmax = 1.0
                for j in range(n):
                    if fabs(z[j]) > zmax:
                        zmax = fabs(z[j])
                for v in range(count):
                    dmax = 0.0
                    for j in range(n):
                        diff = fabs(out[v, j] - z[j])
                        if diff > dmax:
                            dmax = diff
                    if dmax <= dedup_tol * zmax:
                        dup = True
                        break
                if not dup:
                    if count == cap:
                        grown = np.empty((2 * cap, n))
                        grown[:cap] = np.asarray(out)
                        out = grown
                        cap *= 2
                    for j in range(n):
                        out[count, j] = z[j]
                    count += 1
        if not _next_combination(idx, n, m):
            break
    return np.asarray(out[:count]).copy()

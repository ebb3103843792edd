# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops; see ``_pykernels`` for the reference versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef inline double _soft(double z, double t) nogil:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def cd_lasso_gram(double[:, ::1] G, double[::1] b, double lam, double[::1] x0,
                  double step_tol, long max_sweeps):
    cdef Py_ssize_t p = G.shape[0]
    cdef Py_ssize_t i, j
    cdef long sweep
    cdef double gii, z, xi_new, delta, max_delta
    x_arr = np.array(x0, dtype=np.float64, copy=True)
    cdef double[::1] x = x_arr
    c_arr = np.asarray(G) @ x_arr
    cdef double[::1] c = c_arr
    with nogil:
        for sweep in range(1, max_sweeps + 1):
            max_delta = 0.0
            for i in range(p):
                gii = G[i, i]
                if gii <= 0.0:
                    continue
                z = b[i] - (c[i] - gii * x[i])
                xi_new = _soft(z, lam) / gii
                delta = xi_new - x[i]
                if delta != 0.0:
                    x[i] = xi_new
                    for j in range(p):
                        c[j] += G[j, i] * delta
                    if fabs(delta) > max_delta:
                        max_delta = fabs(delta)
            if max_delta <= step_tol:
                break
    return x_arr, sweep


def top_s_sums(double[:, ::1] absg, long s):
    """Column-wise sum of the ``s`` largest off-diagonal entries."""
    cdef Py_ssize_t p = absg.shape[0]
    cdef Py_ssize_t i, j, t, pos
    cdef double v
    out_arr = np.zeros(p, dtype=np.float64)
    cdef double[::1] out = out_arr
    buf_arr = np.zeros(max(s, 1), dtype=np.float64)
    cdef double[::1] buf = buf_arr
    cdef Py_ssize_t filled
    if s <= 0:
        return out_arr
    with nogil:
        for j in range(p):
            filled = 0
            for i in range(p):
                if i == j:
                    continue
                v = absg[i, j]
                if filled < s:
                    pos = filled
                    filled += 1
                elif v > buf[s - 1]:
                    pos = s - 1
                else:
                    continue
                # insertion keeps buf sorted descending
                while pos > 0 and buf[pos - 1] < v:
                    buf[pos] = buf[pos - 1]
                    pos -= 1
                buf[pos] = v
            for t in range(filled):
                out[j] += buf[t]
    return out_arr


cdef inline void _row_best(double[:, ::1] score, Py_ssize_t r, unsigned char[::1] used_c,
                           double[::1] best, long long[::1] col) noexcept nogil:
    cdef Py_ssize_t c
    col[r] = -1
    for c in range(score.shape[1]):
        if not used_c[c] and (col[r] < 0 or score[r, c] > best[r]):
            best[r] = score[r, c]
            col[r] = c


def greedy_match(double[:, ::1] score):
    """Assign rows to columns by repeatedly taking the largest remaining score.

    Each row caches its best free column; only rows whose cached column was
    just taken are rescanned.  Ties resolve to the smallest flat index.
    """
    cdef Py_ssize_t n = score.shape[0]
    cdef Py_ssize_t m = score.shape[1]
    cdef Py_ssize_t r, c, step, pick
    assign_arr = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] assign = assign_arr
    used_c_arr = np.zeros(m, dtype=np.uint8)
    cdef unsigned char[::1] used_c = used_c_arr
    best_arr = np.empty(n)
    cdef double[::1] best = best_arr
    col_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] col = col_arr
    with nogil:
        for r in range(n):
            _row_best(score, r, used_c, best, col)
        for step in range(min(n, m)):
            pick = -1
            for r in range(n):
                if assign[r] < 0 and (pick < 0 or best[r] > best[pick]):
                    pick = r
            c = col[pick]
            assign[pick] = c
            used_c[c] = 1
            for r in range(n):
                if assign[r] < 0 and col[r] == c:
                    _row_best(score, r, used_c, best, col)
    return assign_arr

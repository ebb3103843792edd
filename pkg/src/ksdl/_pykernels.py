"""Pure-Python versions of the compiled kernels in ``_ckernels.pyx``.

Semantics match the compiled code exactly, including tie-breaking, so the
two backends are interchangeable.
"""
from __future__ import annotations

import numpy as np


def cd_lasso_gram(G, b, lam, x0, step_tol, max_sweeps):
    """Cyclic coordinate descent for ``0.5 x'Gx - b'x + lam |x|_1``.

    Returns the iterate and the number of sweeps performed.
    """
    G = np.ascontiguousarray(G, dtype=float)
    b = np.asarray(b, dtype=float)
    x = np.array(x0, dtype=float, copy=True)
    c = G @ x
    p = G.shape[0]
    diag = np.diag(G).tolist()
    sweep = 0
    for sweep in range(1, int(max_sweeps) + 1):
        max_delta = 0.0
        for i in range(p):
            gii = diag[i]
            if gii <= 0.0:
                continue
            z = b[i] - (c[i] - gii * x[i])
            if z > lam:
                xi_new = (z - lam) / gii
            elif z < -lam:
                xi_new = (z + lam) / gii
            else:
                xi_new = 0.0
            delta = xi_new - x[i]
            if delta != 0.0:
                x[i] = xi_new
                c += G[:, i] * delta
                max_delta = max(max_delta, abs(delta))
        if max_delta <= step_tol:
            break
    return x, sweep


def top_s_sums(absg, s):
    """Column-wise sum of the ``s`` largest off-diagonal entries."""
    absg = np.array(absg, dtype=float, copy=True)
    p = absg.shape[0]
    if s <= 0 or p < 2:
        return np.zeros(p)
    np.fill_diagonal(absg, -np.inf)
    s = min(int(s), p - 1)
    part = -np.partition(-absg, s - 1, axis=0)[:s]
    return part.sum(axis=0)


def greedy_match(score):
    """Assign rows to columns by repeatedly taking the largest remaining score."""
    score = np.array(score, dtype=float, copy=True)
    n, m = score.shape
    assign = np.full(n, -1, dtype=np.int64)
    for _ in range(min(n, m)):
        flat = int(np.argmax(score))
        r, c = divmod(flat, m)
        assign[r] = c
        score[r, :] = -np.inf
        score[:, c] = -np.inf
    return assign

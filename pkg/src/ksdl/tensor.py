"""Dense tensor and Kronecker linear algebra.

Tensors are plain :class:`numpy.ndarray` objects.  Modes are 0-based.  The
vectorization ``vec(T)`` stacks the mode-0 unfolding column by column, so the
mode-0 index varies fastest (Fortran order).

Kronecker products are always taken in the order ``D_0 ⊗ D_1 ⊗ ... ⊗ D_{K-1}``
(the order of :func:`numpy.kron`).  Column ``(j_0, ..., j_{K-1})`` of the
product lives at flat index ``sum_k j_k * prod_{i>k} p_i``, which is
``numpy.ravel_multi_index`` in C order.  :func:`ks_apply` uses the same
convention: ``ks_apply(factors, v)`` equals ``kron(factors) @ v``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Callable, Sequence, Union

import numpy as np
import scipy.linalg

__all__ = [
    "RankDeficientError",
    "FactorOperators",
    "vec",
    "unvec",
    "unfold",
    "refold",
    "mode_product",
    "kron",
    "ks_apply",
    "ks_apply_batch",
    "ks_adjoint",
    "kron_submatrix",
    "kron_diff_decomposition",
    "kron_factorized_operators",
    "mode_operators",
]

# Smallest singular value of a restricted factor below which it counts as singular.
SINGULAR_TOL = 1e-10


class RankDeficientError(np.linalg.LinAlgError):
    """A restricted coordinate dictionary has numerically singular Gram."""

    def __init__(self, mode: int, sigma_min: float):
        super().__init__(
            f"restricted factor for mode {mode} is rank deficient "
            f"(smallest singular value {sigma_min:.3e})"
        )
        self.mode = mode
        self.sigma_min = sigma_min


def _check_mode(ndim: int, k: int) -> None:
    if not 0 <= k < ndim:
        raise ValueError(f"mode {k} out of range for order-{ndim} tensor")


def vec(t: np.ndarray) -> np.ndarray:
    """Stack the mode-0 unfolding column by column."""
    return np.asarray(t).ravel(order="F")


def unvec(v: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    v = np.asarray(v)
    if v.size != int(np.prod(shape)):
        raise ValueError(f"cannot reshape vector of length {v.size} to {tuple(shape)}")
    return v.reshape(tuple(shape), order="F")


def unfold(t: np.ndarray, k: int) -> np.ndarray:
    """Mode-``k`` unfolding, a ``p_k x prod_{i != k} p_i`` matrix.

    Columns are fibres along mode ``k``; the remaining indices are ordered with
    the lowest mode varying fastest, so ``vec(t) == vec(unfold(t, 0))``.
    """
    t = np.asarray(t)
    _check_mode(t.ndim, k)
    return np.moveaxis(t, k, 0).reshape(t.shape[k], -1, order="F")


def refold(m: np.ndarray, k: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of the given ``shape``."""
    shape = tuple(int(n) for n in shape)
    _check_mode(len(shape), k)
    m = np.asarray(m)
    rest = shape[:k] + shape[k + 1:]
    if m.shape != (shape[k], int(np.prod(rest))):
        raise ValueError(f"matrix of shape {m.shape} is not a mode-{k} unfolding of {shape}")
    return np.moveaxis(m.reshape((shape[k],) + rest, order="F"), 0, k)


def mode_product(t: np.ndarray, a: np.ndarray, k: int) -> np.ndarray:
    """Mode-``k`` product ``t x_k a``, i.e. ``unfold(result, k) == a @ unfold(t, k)``."""
    t = np.asarray(t)
    a = np.asarray(a)
    _check_mode(t.ndim, k)
    if a.ndim != 2 or a.shape[1] != t.shape[k]:
        raise ValueError(
            f"matrix with {a.shape[-1]} columns cannot act on mode {k} of size {t.shape[k]}"
        )
    return np.moveaxis(np.tensordot(a, t, axes=(1, k)), 0, k)


def kron(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Dense Kronecker product ``factors[0] ⊗ ... ⊗ factors[-1]``."""
    if len(factors) == 0:
        raise ValueError("kron needs at least one factor")
    return reduce(np.kron, [np.atleast_2d(np.asarray(f, dtype=float)) for f in factors])


def _dims(factors: Sequence[np.ndarray]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    rows = tuple(int(np.shape(f)[0]) for f in factors)
    cols = tuple(int(np.shape(f)[1]) for f in factors)
    return rows, cols


def ks_apply_batch(factors: Sequence[np.ndarray], v: np.ndarray) -> np.ndarray:
    """``kron(factors) @ v`` for a ``(prod cols, N)`` block of vectors.

    The Kronecker product is never formed; each factor acts on its own axis
    of the reshaped block.
    """
    if len(factors) == 0:
        raise ValueError("ks_apply needs at least one factor")
    rows, cols = _dims(factors)
    v = np.asarray(v, dtype=float)
    if v.ndim != 2 or v.shape[0] != int(np.prod(cols)):
        raise ValueError(f"operand of shape {v.shape} does not match {int(np.prod(cols))} columns")
    n = v.shape[1]
    t = v.reshape(cols + (n,))
    for k, f in enumerate(factors):
        t = np.moveaxis(np.tensordot(f, t, axes=(1, k)), 0, k)
    return t.reshape(int(np.prod(rows)), n)


def ks_apply(factors: Sequence[np.ndarray], v: np.ndarray) -> np.ndarray:
    """Matrix-free ``kron(factors) @ v`` for a single vector."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError("ks_apply expects a vector; use ks_apply_batch for blocks")
    return ks_apply_batch(factors, v[:, None])[:, 0]


def ks_adjoint(factors: Sequence[np.ndarray], v: np.ndarray) -> np.ndarray:
    """``kron(factors).T @ v`` for a vector or a column block."""
    t_factors = [np.asarray(f).T for f in factors]
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return ks_apply(t_factors, v)
    return ks_apply_batch(t_factors, v)


def kron_submatrix(factors: Sequence[np.ndarray], support) -> np.ndarray:
    """Columns of ``kron(factors)`` on a separable support.

    ``support`` is anything with a ``per_mode`` attribute or a sequence of
    per-mode index collections.  The result equals ``kron(factors)[:, flat]``
    where ``flat`` is the lexicographic image of the per-mode sets.
    """
    per_mode = getattr(support, "per_mode", support)
    if len(per_mode) != len(factors):
        raise ValueError("support has a different number of modes than the factor list")
    picked = []
    for k, (f, idx) in enumerate(zip(factors, per_mode)):
        f = np.asarray(f, dtype=float)
        idx = np.asarray(idx, dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= f.shape[1]):
            raise IndexError(f"support index out of range for mode {k}")
        picked.append(f[:, idx])
    return kron(picked)


Convention = Union[str, Callable[[int, int], bool]]


def _uses_first(convention: Convention, k: int, i: int) -> bool:
    if callable(convention):
        return bool(convention(k, i))
    if convention == "forward":
        return i < k
    if convention == "reverse":
        return i > k
    raise ValueError(f"unknown convention {convention!r}")


def kron_diff_decomposition(
    d: Sequence[np.ndarray],
    d0: Sequence[np.ndarray],
    convention: Convention = "forward",
) -> list[list[np.ndarray]]:
    """Split ``kron(d) - kron(d0)`` into ``K`` Kronecker terms.

    Term ``k`` carries ``d[k] - d0[k]`` in slot ``k``.  The other slots hold
    ``d[i]`` or ``d0[i]`` according to ``convention``:

    ``"forward"``
        ``d[i]`` for ``i < k`` and ``d0[i]`` for ``i > k``.
    ``"reverse"``
        ``d0[i]`` for ``i < k`` and ``d[i]`` for ``i > k``.
    callable
        ``convention(k, i)`` returns True to use ``d[i]``.  Only telescoping
        rules reproduce the difference exactly.
    """
    if len(d) != len(d0):
        raise ValueError("factor lists have different lengths")
    d = [np.asarray(f, dtype=float) for f in d]
    d0 = [np.asarray(f, dtype=float) for f in d0]
    for k, (a, b) in enumerate(zip(d, d0)):
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch in mode {k}: {a.shape} vs {b.shape}")
    terms = []
    for k in range(len(d)):
        term = []
        for i in range(len(d)):
            if i == k:
                term.append(d[k] - d0[k])
            else:
                term.append(d[i] if _uses_first(convention, k, i) else d0[i])
        terms.append(term)
    return terms


@dataclass(frozen=True)
class FactorOperators:
    """Per-mode factors of the projector, pseudoinverse and inverse Gram on ``J``."""

    projector: list[np.ndarray]
    pinv: list[np.ndarray]
    gram_inv: list[np.ndarray]


def mode_operators(dj: np.ndarray, mode: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Projector, pseudoinverse and ``(D^T D)^{-1}`` of a full-column-rank block via QR."""
    dj = np.asarray(dj, dtype=float)
    q, r = scipy.linalg.qr(dj, mode="economic")
    sv = scipy.linalg.svdvals(r)
    smin = float(sv.min()) if sv.size else 0.0
    if dj.shape[1] > dj.shape[0] or smin < SINGULAR_TOL:
        raise RankDeficientError(mode, smin)
    rinv = scipy.linalg.solve_triangular(r, np.eye(r.shape[0]))
    pinv = rinv @ q.T
    proj = q @ q.T
    gram_inv = rinv @ rinv.T
    return proj, pinv, gram_inv


def kron_factorized_operators(factors: Sequence[np.ndarray], support) -> FactorOperators:
    """Factor lists whose Kronecker products give ``P_{D_J}``, ``D_J^+`` and ``H_{D_J}``."""
    per_mode = getattr(support, "per_mode", support)
    if len(per_mode) != len(factors):
        raise ValueError("support has a different number of modes than the factor list")
    projs, pinvs, grams = [], [], []
    for k, (f, idx) in enumerate(zip(factors, per_mode)):
        f = np.asarray(f, dtype=float)
        idx = np.asarray(idx, dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= f.shape[1]):
            raise IndexError(f"support index out of range for mode {k}")
        p, pi, h = mode_operators(f[:, idx], mode=k)
        projs.append(p)
        pinvs.append(pi)
        grams.append(h)
    return FactorOperators(projs, pinvs, grams)

"""Brute-force reference computations used to cross-check the main library."""
from __future__ import annotations

import itertools
import math
from typing import Iterator, Sequence

import numpy as np

from . import _kernels
from .dictionary import EnumerationCapError
from .generative import GenerativeModel, SeparableSupport
from .objective import ConvergenceError
from .tensor import kron_submatrix

__all__ = [
    "SupportEnumeration",
    "enumerate_supports",
    "exhaustive_mu_s",
    "semi_analytic_gap",
    "reference_lasso",
    "DEFAULT_CAP",
]

DEFAULT_CAP = 100_000


class SupportEnumeration:
    """Every separable support with ``|J_k| = s_k``, in lexicographic order."""

    def __init__(self, p_vec: Sequence[int], s_vec: Sequence[int], cap: int = DEFAULT_CAP):
        if len(p_vec) != len(s_vec):
            raise ValueError("need one sparsity per mode")
        for p, s in zip(p_vec, s_vec):
            if not 1 <= s <= p:
                raise ValueError(f"sparsity {s} invalid for {p} columns")
        self.p_vec = tuple(int(p) for p in p_vec)
        self.s_vec = tuple(int(s) for s in s_vec)
        self.count = math.prod(math.comb(p, s) for p, s in zip(self.p_vec, self.s_vec))
        if self.count > cap:
            raise EnumerationCapError(f"{self.count} separable supports exceed cap {cap}")

    def __len__(self) -> int:
        return self.count

    def __iter__(self) -> Iterator[SeparableSupport]:
        per_mode = [itertools.combinations(range(p), s) for p, s in zip(self.p_vec, self.s_vec)]
        for combo in itertools.product(*[list(c) for c in per_mode]):
            yield SeparableSupport(tuple(np.array(c) for c in combo), self.p_vec)


def enumerate_supports(p_vec, s_vec, cap: int = DEFAULT_CAP) -> SupportEnumeration:
    return SupportEnumeration(p_vec, s_vec, cap)


def exhaustive_mu_s(d, s: int, separable: tuple | None = None, cap: int = DEFAULT_CAP) -> float:
    """Maximize ``||D_J^T d_j||_1`` over admissible ``(J, j)`` by enumeration.

    Without ``separable``, ``J`` ranges over all sets of at most ``s`` columns.
    With ``separable = (p_vec, s_vec)``, ``J`` ranges over products
    ``J_1 x ... x J_K`` with ``1 <= |J_k| <= s_k`` and ``s`` is ignored.
    """
    d = np.asarray(d, dtype=float)
    p = d.shape[1]
    g = np.abs(d.T @ d)
    if separable is None:
        if not 1 <= s <= p - 1:
            raise ValueError(f"order {s} out of range for {p} columns")
        count = sum(math.comb(p, k) for k in range(1, s + 1))
        if count > cap:
            raise EnumerationCapError(f"{count} subsets exceed cap {cap}")
        sets = (list(c) for k in range(1, s + 1) for c in itertools.combinations(range(p), k))
    else:
        p_vec, s_vec = separable
        if math.prod(p_vec) != p:
            raise ValueError("separable dimensions do not match the dictionary")
        choices = [[c for k in range(1, sk + 1) for c in itertools.combinations(range(pk), k)]
                   for pk, sk in zip(p_vec, s_vec)]
        count = math.prod(len(c) for c in choices)
        if count > cap:
            raise EnumerationCapError(f"{count} separable subsets exceed cap {cap}")
        sets = (SeparableSupport(tuple(np.array(c) for c in combo), tuple(p_vec)).flat.tolist()
                for combo in itertools.product(*choices))
    best = 0.0
    for J in sets:
        vals = g[J].sum(axis=0)
        vals[J] = -np.inf
        best = max(best, float(vals.max()))
    return best


def semi_analytic_gap(factors, factors0, model: GenerativeModel, lam: float,
                      cap: int = DEFAULT_CAP) -> float:
    """Average over supports of the closed-form conditional expectation of the gap.

    Per support ``J`` the dense operators of ``D_J`` and ``D0_J`` are formed
    with ``numpy.linalg.pinv`` and
    ``0.5 E{x^2} Tr(D0_J^T (P0 - P) D0_J) + 0.5 E{w^2} Tr(P0 - P)
    - lam E|x| Tr((D0_J^+ - D_J^+) D0_J) + 0.5 lam^2 Tr(H0 - H)`` is evaluated.
    """
    total = 0.0
    sups = enumerate_supports(model.p_vec, model.s_vec, cap)
    for sup in sups:
        dj = kron_submatrix(factors, sup)
        d0j = kron_submatrix(factors0, sup)
        pinv, pinv0 = np.linalg.pinv(dj), np.linalg.pinv(d0j)
        proj, proj0 = dj @ pinv, d0j @ pinv0
        h, h0 = np.linalg.inv(dj.T @ dj), np.linalg.inv(d0j.T @ d0j)
        total += (0.5 * model.Ex2 * np.trace(d0j.T @ (proj0 - proj) @ d0j)
                  + 0.5 * model.Ew2 * np.trace(proj0 - proj)
                  - lam * model.Eabs * np.trace((pinv0 - pinv) @ d0j)
                  + 0.5 * lam ** 2 * np.trace(h0 - h))
    return float(total / len(sups))


def _objective(d, y, x, lam):
    r = y - d @ x
    return 0.5 * float(r @ r) + lam * float(np.abs(x).sum())


def _gap(d, y, x, lam):
    r = y - d @ x
    corr = d.T @ r
    c = float(np.max(np.abs(corr))) if d.shape[1] else 0.0
    scale = min(1.0, lam / c) if c > 0 else 1.0
    # primal minus dual at theta = scale * r
    return (0.5 * (1.0 - scale) ** 2 * float(r @ r) + lam * float(np.abs(x).sum())
            - scale * float(corr @ x))


def reference_lasso(d, y, lam: float, tol: float = 1e-12, max_rounds: int = 2000,
                    sweeps_per_round: int = 50) -> np.ndarray:
    """Cyclic coordinate descent with exact soft-threshold updates on a dense ``D``.

    Runs rounds of sweeps until the duality gap is at most ``tol``.
    """
    d = np.asarray(d, dtype=float)
    if d.ndim != 2:
        raise ValueError("reference lasso needs a dense matrix")
    y = np.asarray(y, dtype=float)
    if lam <= 0:
        raise ValueError("reference lasso needs lambda > 0")
    gram = np.ascontiguousarray(d.T @ d)
    b = np.ascontiguousarray(d.T @ y)
    x = np.zeros(d.shape[1])
    for _ in range(max_rounds):
        x, _sweeps = _kernels.cd_lasso_gram(gram, b, float(lam), x, 0.0, sweeps_per_round)
        if _gap(d, y, x, lam) <= tol:
            return x
    raise ConvergenceError(f"coordinate descent did not reach duality gap {tol:g}")


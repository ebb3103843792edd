"""Sparse-coding objective with its sign-conditioned closed form and risk-gap expansion."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .dictionary import EnumerationCapError, ks_mu_s
from .generative import GenerativeModel, ObservationBatch, SeparableSupport, batched_kron_apply
from .tensor import (
    Convention,
    RankDeficientError,
    SINGULAR_TOL,
    _uses_first,
    kron_diff_decomposition,
    kron_factorized_operators,
    ks_adjoint,
    ks_apply,
    ks_apply_batch,
    mode_operators,
)

__all__ = [
    "ConditionedSolution",
    "GapTerms",
    "LassoResult",
    "Certificate",
    "CertificateInapplicable",
    "ConvergenceError",
    "conditional_minimizer",
    "phi_value",
    "phi_batch",
    "lasso_value",
    "lasso_batch",
    "empirical_risk",
    "sign_certificate",
    "certificate_batch",
    "gap_terms",
    "gap_terms_batch",
    "analytic_gap_expectation",
    "mode_trace_expectations",
]


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap before reaching the tolerance."""


class CertificateInapplicable(ValueError):
    """The sign certificate needs ``mu_s(D) < 1/2``."""


def _as_factors(factors) -> list[np.ndarray]:
    return [np.asarray(f, dtype=float) for f in factors]


def _p_vec(factors) -> tuple:
    return tuple(int(f.shape[1]) for f in factors)


def _resolve_support(factors, sigma, support):
    """Return ``(support, sigma_J)`` from a full sign vector or an explicit support."""
    sigma = np.asarray(sigma, dtype=float)
    p_vec = _p_vec(factors)
    if support is None:
        if sigma.size != math.prod(p_vec):
            raise ValueError("a full-length sign vector is needed when no support is given")
        support = SeparableSupport.from_flat(np.flatnonzero(sigma), p_vec)
        return support, sigma[support.flat]
    if not isinstance(support, SeparableSupport):
        support = SeparableSupport(tuple(support), p_vec)
    flat = support.flat
    if sigma.size == math.prod(p_vec) and sigma.size != flat.size:
        sigma = sigma[flat]
    if sigma.size != flat.size:
        raise ValueError("sign vector length does not match the support size")
    return support, sigma


@dataclass(frozen=True)
class ConditionedSolution:
    support: SeparableSupport
    x_J: np.ndarray
    phi: float
    sigma_hat: np.ndarray

    @property
    def x_hat(self) -> np.ndarray:
        x = np.zeros(math.prod(self.support.p_vec))
        x[self.support.flat] = self.x_J
        return x


def conditional_minimizer(factors, y, sigma, lam: float, support=None) -> ConditionedSolution:
    """Minimizer of ``0.5||y - D_J x||^2 + lam sigma_J^T x`` over ``x`` supported on ``J``.

    ``x_J = (⊗D_{k,J_k}^+) y - lam (⊗H_{k,J_k}) sigma_J``.  ``sigma`` is either a
    length-``p`` sign vector (its nonzeros define ``J``) or a length-``s``
    vector paired with ``support``.
    """
    factors = _as_factors(factors)
    support, sig = _resolve_support(factors, sigma, support)
    y = np.asarray(y, dtype=float)
    ops = kron_factorized_operators(factors, support)
    dpy = ks_apply(ops.pinv, y)
    hs = ks_apply(ops.gram_inv, sig)
    x_j = dpy - lam * hs
    py = ks_apply(ops.projector, y)
    phi = 0.5 * float(y @ y) - 0.5 * float(y @ py) + lam * float(sig @ dpy) - 0.5 * lam ** 2 * float(sig @ hs)
    return ConditionedSolution(support, x_j, phi, np.sign(x_j))


def phi_value(factors, y, sigma, lam: float, support=None) -> float:
    """Closed-form sign-conditioned objective value."""
    return conditional_minimizer(factors, y, sigma, lam, support).phi


def _mode_qr_tables(f: np.ndarray, idx: np.ndarray, mode: int):
    """Per-row QR pieces for ``f[:, idx[n]]``, computed once per distinct subset."""
    uniq, inv = np.unique(idx, axis=0, return_inverse=True)
    inv = np.asarray(inv).ravel()
    m, s = f.shape[0], idx.shape[1]
    qs = np.empty((len(uniq), m, s))
    rinvs = np.empty((len(uniq), s, s))
    for u, cols in enumerate(uniq):
        q, r = np.linalg.qr(f[:, cols])
        sv = np.linalg.svd(r, compute_uv=False)
        if s > m or sv.min() < SINGULAR_TOL:
            raise RankDeficientError(mode, float(sv.min()))
        qs[u] = q
        rinvs[u] = np.linalg.solve(r, np.eye(s))  # triangular and tiny
    return qs[inv], rinvs[inv]


def phi_batch(factors, Y, sigma_vals, support_idx, lam: float):
    """Vectorized closed form over a batch.

    ``Y`` is ``(m, N)``, ``sigma_vals`` is ``(N, s)`` in lexicographic support
    order and ``support_idx[k]`` is ``(N, s_k)``.  Returns ``(phi, x_J)`` with
    shapes ``(N,)`` and ``(N, s)``.
    """
    factors = _as_factors(factors)
    Y = np.asarray(Y, dtype=float)
    qs, rinvs = [], []
    for k, (f, idx) in enumerate(zip(factors, support_idx)):
        q, ri = _mode_qr_tables(f, np.asarray(idx), k)
        qs.append(q)
        rinvs.append(ri)
    yt = np.ascontiguousarray(Y.T)  # free when Y is Fortran-ordered
    qty = batched_kron_apply([np.swapaxes(q, 1, 2) for q in qs], yt)           # (⊗Q^T) y
    dpy = batched_kron_apply(rinvs, qty)                                       # (⊗R^-1 Q^T) y
    rts = batched_kron_apply([np.swapaxes(r, 1, 2) for r in rinvs], sigma_vals)  # (⊗R^-T) sigma
    hs = batched_kron_apply(rinvs, rts)                                        # (⊗H) sigma
    x_j = dpy - lam * hs
    phi = (0.5 * np.einsum("ij,ij->j", Y, Y) - 0.5 * np.einsum("ij,ij->i", qty, qty)
           + lam * np.einsum("ij,ij->i", sigma_vals, dpy)
           - 0.5 * lam ** 2 * np.einsum("ij,ij->i", rts, rts))
    return phi, x_j


@dataclass(frozen=True)
class LassoResult:
    values: np.ndarray
    X: np.ndarray
    gaps: np.ndarray
    iterations: int


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _primal_dual(factors, Y, X, lam):
    r = Y - ks_apply_batch(factors, X)
    c = ks_adjoint(factors, r)
    cmax = np.max(np.abs(c), axis=0)
    scale = np.where(cmax > lam, lam / np.where(cmax > 0, cmax, 1.0), 1.0)
    l1 = np.sum(np.abs(X), axis=0)
    primal = 0.5 * np.sum(r * r, axis=0) + lam * l1
    # primal minus dual at theta = scale * r, rearranged to avoid cancellation
    gap = 0.5 * (1.0 - scale) ** 2 * np.sum(r * r, axis=0) + lam * l1 - scale * np.sum(c * X, axis=0)
    return primal, np.maximum(gap, 0.0)


def _kron_columns(factors, flat: np.ndarray) -> np.ndarray:
    idx = np.unravel_index(flat, _p_vec(factors))
    cols = factors[0][:, idx[0]]
    for f, i in zip(factors[1:], idx[1:]):
        # Kronecker product of matching columns
        cols = (cols[:, None, :] * f[:, i][None, :, :]).reshape(-1, len(flat))
    return cols


def _polish(factors, y, x, lam):
    """Solve the KKT system on the active set of ``x``; keep it only if it certifies."""
    act = np.flatnonzero(x)
    if act.size == 0:
        return x
    a = _kron_columns(factors, act)
    sgn = np.sign(x[act])
    try:
        z = np.linalg.solve(a.T @ a, a.T @ y - lam * sgn)
    except np.linalg.LinAlgError:
        return x
    if not np.all(np.sign(z) == sgn):
        return x
    cand = np.zeros_like(x)
    cand[act] = z
    corr = ks_adjoint(factors, y - ks_apply(factors, cand))
    if np.max(np.abs(corr)) > lam * (1 + 1e-9):
        return x
    return cand


def lasso_batch(factors, Y, lam: float, tol: float = 1e-10, max_iter: int = 50_000,
                X0=None, polish: bool = True, check_every: int = 10) -> LassoResult:
    """Column-wise ``min_x 0.5||y - Dx||^2 + lam||x||_1`` for ``D = kron(factors)``.

    Accelerated proximal gradient with adaptive restart, step ``1/L`` with the
    exact ``L = prod ||D_k||_2^2``, stopped when every column's duality gap is
    at most ``tol``.  ``polish`` re-solves the KKT system on the detected
    active set and keeps the result only if it is a certified optimum.
    """
    factors = _as_factors(factors)
    Y = np.asarray(Y, dtype=float)
    squeeze = Y.ndim == 1
    if squeeze:
        Y = Y[:, None]
    p = math.prod(_p_vec(factors))
    n = Y.shape[1]
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    L = math.prod(float(np.linalg.norm(f, 2)) ** 2 for f in factors)
    X = np.zeros((p, n)) if X0 is None else np.array(X0, dtype=float, copy=True).reshape(p, n)
    values, gaps = _primal_dual(factors, Y, X, lam)
    active = np.flatnonzero(gaps > tol)
    it = 0
    if active.size:
        x = X[:, active]
        z = x.copy()
        t = np.ones(active.size)
        ya = Y[:, active]
        while it < max_iter:
            it += 1
            grad = ks_adjoint(factors, ks_apply_batch(factors, z) - ya)
            x_new = _soft(z - grad / L, lam / L)
            restart = np.sum((z - x_new) * (x_new - x), axis=0) > 0
            t = np.where(restart, 1.0, t)
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            z = x_new + ((t - 1.0) / t_new) * (x_new - x)
            x, t = x_new, t_new
            if it % check_every == 0:
                pv, gv = _primal_dual(factors, ya, x, lam)
                done = gv <= tol
                if np.any(done):
                    cols = active[done]
                    X[:, cols] = x[:, done]
                    values[cols] = pv[done]
                    gaps[cols] = gv[done]
                    keep = ~done
                    active, x, z, t, ya = active[keep], x[:, keep], z[:, keep], t[keep], ya[:, keep]
                if active.size == 0:
                    break
        if active.size:
            raise ConvergenceError(
                f"{active.size} column(s) above duality gap {tol:g} after {max_iter} iterations")
    if polish and lam > 0:
        for j in range(n):
            cand = _polish(factors, Y[:, j], X[:, j], lam)
            if cand is not X[:, j]:
                pv, gv = _primal_dual(factors, Y[:, j:j + 1], cand[:, None], lam)
                if pv[0] <= values[j] + 1e-15 * max(1.0, abs(values[j])):
                    X[:, j] = cand
                    values[j] = pv[0]
                    gaps[j] = gv[0]
    if squeeze:
        return LassoResult(values[:1], X[:, 0], gaps[:1], it)
    return LassoResult(values, X, gaps, it)


def lasso_value(factors, y, lam: float, tol: float = 1e-10, max_iter: int = 50_000):
    """``(f_y, x)`` for a single observation."""
    res = lasso_batch(factors, np.asarray(y, dtype=float)[:, None], lam, tol, max_iter)
    return float(res.values[0]), res.X[:, 0]


def empirical_risk(factors, batch, lam: float, tol: float = 1e-10) -> float:
    """``F_Y(D) = (1/N) sum_n f_{y_n}(D)``; ``batch`` is an ObservationBatch or an ``(m, N)`` array."""
    Y = batch.Y if isinstance(batch, ObservationBatch) else np.asarray(batch, dtype=float)
    if Y.ndim != 2 or Y.shape[1] == 0:
        raise ValueError("empirical risk needs a nonempty batch")
    return float(np.mean(lasso_batch(factors, Y, lam, tol).values))


@dataclass(frozen=True)
class Certificate:
    holds: bool
    min_abs: float
    residual: float
    threshold: float
    mu_s: float
    mu_is_exact: bool

    def __bool__(self) -> bool:
        return self.holds


def sign_certificate(factors, y, x_true, lam: float, mu_s: tuple | None = None) -> Certificate:
    """Sufficient condition for the lasso solution to have the sign pattern of ``x_true``.

    Holds iff ``min_{j in J}|x_j| >= 2 lam`` and ``||y - D x||_2 < lam (1 - 2 mu_s(D))``.
    ``mu_s`` may be supplied as ``(value, is_exact)``.
    """
    factors = _as_factors(factors)
    x_true = np.asarray(x_true, dtype=float)
    flat = np.flatnonzero(x_true)
    if flat.size == 0:
        raise ValueError("x_true has empty support")
    if mu_s is None:
        sup = SeparableSupport.from_flat(flat, _p_vec(factors))
        mu_s = ks_mu_s(factors, sup.s_vec)
    mu, exact = float(mu_s[0]), bool(mu_s[1])
    if mu >= 0.5:
        raise CertificateInapplicable(f"mu_s = {mu:.4f} >= 1/2")
    min_abs = float(np.min(np.abs(x_true[flat])))
    residual = float(np.linalg.norm(np.asarray(y, dtype=float) - ks_apply(factors, x_true)))
    threshold = lam * (1.0 - 2.0 * mu)
    holds = lam > 0 and min_abs >= 2.0 * lam and residual < threshold
    return Certificate(bool(holds), min_abs, residual, threshold, mu, exact)


def certificate_batch(factors, batch: ObservationBatch, lam: float, mu_s: float) -> np.ndarray:
    """Boolean certificate per column of ``batch`` for the dictionary ``factors``.

    The residual norm is expanded through the per-mode Gram blocks; columns
    whose squared residual lies within rounding distance of the threshold
    are recomputed directly.
    """
    if mu_s >= 0.5:
        raise CertificateInapplicable(f"mu_s = {mu_s:.4f} >= 1/2")
    if lam <= 0:
        return np.zeros(batch.N, dtype=bool)
    factors = _as_factors(factors)
    sub = [f.T[idx] for f, idx in zip(factors, batch.support_idx)]  # (N, s_k, m_k)
    yt = np.ascontiguousarray(batch.Y.T)
    x = batch.values
    dty = batched_kron_apply(sub, yt)
    gx = batched_kron_apply([a @ np.swapaxes(a, 1, 2) for a in sub], x)
    yy = np.einsum("ij,ij->i", yt, yt)
    r2 = yy - 2.0 * np.einsum("ij,ij->i", x, dty) + np.einsum("ij,ij->i", x, gx)
    thr = lam * (1.0 - 2.0 * mu_s)
    close = np.flatnonzero(np.abs(r2 - thr * thr) <= 1e-10 * np.maximum(yy, 1.0))
    if close.size:
        mats = [np.swapaxes(a[close], 1, 2) for a in sub]
        resid = yt[close] - batched_kron_apply(mats, x[close])
        r2[close] = np.einsum("ij,ij->i", resid, resid)
    ok_min = np.min(np.abs(x), axis=1) >= 2.0 * lam
    return ok_min & (np.sqrt(np.maximum(r2, 0.0)) < thr)


@dataclass(frozen=True)
class GapTerms:
    d1: float
    d2: float
    d3: float
    d4: float
    d5: float
    d6: float

    @property
    def total(self) -> float:
        return self.d1 + self.d2 + self.d3 + self.d4 + self.d5 + self.d6

    def as_array(self) -> np.ndarray:
        return np.array([self.d1, self.d2, self.d3, self.d4, self.d5, self.d6])


def _neg_telescoped(op_d, op_d0, convention):
    """Term lists whose Kronecker products sum to ``kron(op_d0) - kron(op_d)``."""
    terms = kron_diff_decomposition(op_d, op_d0, convention)
    return [[-t[0]] + t[1:] for t in terms]


def _telescoped_forms(factors, factors0, support, a, w, sig, convention):
    """Six gap terms for column blocks ``a = D0_J x_J`` and ``w`` (shape ``(m, n)``)."""
    ops = kron_factorized_operators(factors, support)
    ops0 = kron_factorized_operators(factors0, support)
    dp = _neg_telescoped(ops.projector, ops0.projector, convention)   # P0 - P
    dpi = _neg_telescoped(ops.pinv, ops0.pinv, convention)            # D0^+ - D^+
    dh = _neg_telescoped(ops.gram_inv, ops0.gram_inv, convention)     # H0 - H
    pa = sum(ks_apply_batch(t, a) for t in dp)
    pw = sum(ks_apply_batch(t, w) for t in dp)
    pia = sum(ks_apply_batch(t, a) for t in dpi)
    piw = sum(ks_apply_batch(t, w) for t in dpi)
    hs = sum(ks_apply_batch(t, sig) for t in dh)
    d1 = 0.5 * np.sum(a * pa, axis=0)
    d2 = np.sum(w * pa, axis=0)
    d3 = 0.5 * np.sum(w * pw, axis=0)
    d4 = -np.sum(sig * pia, axis=0)
    d5 = -np.sum(sig * piw, axis=0)
    d6 = 0.5 * np.sum(sig * hs, axis=0)
    return d1, d2, d3, d4, d5, d6


def gap_terms(factors, factors0, x, w, lam: float, sigma=None, support=None,
              convention: Convention = "forward") -> GapTerms:
    """Six-term expansion of ``phi_y(D|sigma) - phi_y(D0|sigma)`` for ``y = D0 x + w``.

    ``x`` is the full-length generating coefficient vector; its support defines
    ``J`` unless ``support`` is given, and ``sigma`` defaults to ``sign(x_J)``.
    Each operator difference is evaluated through the telescoping split of the
    per-mode factor lists under ``convention``.
    """
    factors = _as_factors(factors)
    factors0 = _as_factors(factors0)
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    p_vec = _p_vec(factors)
    if support is None:
        support = SeparableSupport.from_flat(np.flatnonzero(x), p_vec)
    elif not isinstance(support, SeparableSupport):
        support = SeparableSupport(tuple(support), p_vec)
    flat = support.flat
    x_j = x[flat] if x.size == math.prod(p_vec) else x
    sig = np.sign(x_j) if sigma is None else _resolve_support(factors, sigma, support)[1]
    a = ks_apply(kron_support_factors(factors0, support), x_j)
    d = _telescoped_forms(factors, factors0, support, a[:, None], w[:, None], sig[:, None], convention)
    d1, d2, d3, d4, d5, d6 = (float(v[0]) for v in d)
    return GapTerms(d1, d2, d3, lam * d4, lam * d5, lam ** 2 * d6)


def kron_support_factors(factors, support) -> list[np.ndarray]:
    return [np.asarray(f, dtype=float)[:, idx] for f, idx in zip(factors, support.per_mode)]


def gap_terms_batch(factors, factors0, batch: ObservationBatch, lam: float,
                    convention: Convention = "forward") -> np.ndarray:
    """``(N, 6)`` gap terms for every column of ``batch`` (signs from the generating coefficients)."""
    factors = _as_factors(factors)
    factors0 = _as_factors(factors0)
    keys = np.concatenate([np.asarray(i) for i in batch.support_idx], axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = np.asarray(inv).ravel()
    out = np.empty((batch.N, 6))
    splits = np.cumsum(batch.model.s_vec)[:-1]
    for u, key in enumerate(uniq):
        cols = np.flatnonzero(inv == u)
        sup = SeparableSupport(tuple(np.split(key, splits)), batch.model.p_vec)
        vals = batch.values[cols].T
        a = ks_apply_batch(kron_support_factors(factors0, sup), vals)
        d = _telescoped_forms(factors, factors0, sup, a, batch.W[:, cols], np.sign(vals), convention)
        out[cols] = np.stack(d, axis=1) * np.array([1, 1, 1, lam, lam, lam ** 2])
    return out


def _mode_subsets(p: int, s: int, how, rng, cap: int):
    if how == "enumerate":
        if math.comb(p, s) > cap:
            raise EnumerationCapError(f"C({p},{s}) = {math.comb(p, s)} exceeds cap {cap}")
        return np.array(list(itertools.combinations(range(p), s)), dtype=int)
    if rng is None:
        raise ValueError("Monte Carlo support expectation needs an rng")
    keys = rng.random((int(how), p))
    return np.sort(np.argsort(keys, axis=1)[:, :s], axis=1)


def mode_trace_expectations(d: np.ndarray, d0: np.ndarray, s: int, how="enumerate",
                            rng=None, cap: int = 10_000) -> dict:
    """Expected per-mode traces over ``J_k`` for the three blocks of the gap expectation.

    For each block the dictionary holds the value with the true factor
    (``a``), with the candidate factor (``b``) and their difference ``a - b``
    evaluated directly for accuracy.
    """
    subsets = _mode_subsets(d.shape[1], s, how, rng, cap)
    acc = np.zeros(9)
    for cols in subsets:
        dj, d0j = d[:, cols], d0[:, cols]
        p, pi, h = mode_operators(dj)
        p0, pi0, h0 = mode_operators(d0j)
        g0 = d0j.T @ d0j
        resid = d0j - p @ d0j
        acc += [
            np.trace(g0), np.trace(d0j.T @ p @ d0j), np.sum(resid * resid),
            np.trace(pi0 @ d0j), np.trace(pi @ d0j), np.trace(pi @ (dj - d0j)),
            np.trace(h0), np.trace(h), np.trace(h @ (dj.T @ dj - g0) @ h0),
        ]
    acc /= len(subsets)
    names = ["a1", "b1", "diff1", "a2", "b2", "diff2", "a3", "b3", "diff3"]
    return dict(zip(names, acc.tolist()))


def _telescoped_product(a, b, diff, convention):
    """``prod a - prod b`` as the telescoping sum of per-mode differences."""
    K = len(a)
    total = 0.0
    for k in range(K):
        term = diff[k]
        for i in range(K):
            if i != k:
                term *= b[i] if _uses_first(convention, k, i) else a[i]
        total += term
    return total


def analytic_gap_expectation(factors, factors0, model: GenerativeModel, lam: float,
                             support_expectation="enumerate", rng=None,
                             convention: Convention = "forward", cap: int = 10_000,
                             return_blocks: bool = False):
    """Expected ``phi_y(D|sigma) - phi_y(D0|sigma)`` under the separable model.

    Each of the three blocks is a sum over modes of products of per-mode
    expected traces (the noise contributions vanish in expectation).
    ``support_expectation`` is ``"enumerate"`` or an integer number of
    sampled ``J_k`` per mode; one set of draws per mode serves all blocks.
    """
    factors = _as_factors(factors)
    factors0 = _as_factors(factors0)
    if len(factors) != model.K:
        raise ValueError("dictionary and model disagree on the number of modes")
    if support_expectation != "enumerate":
        support_expectation = int(support_expectation)
        if support_expectation < 1:
            raise ValueError("need at least one sampled support per mode")
    if support_expectation == "enumerate" and math.prod(
            math.comb(p, s) for p, s in zip(model.p_vec, model.s_vec)) > cap:
        raise EnumerationCapError("separable support count exceeds the enumeration cap")
    tr = [mode_trace_expectations(d, d0, s, support_expectation, rng, cap)
          for d, d0, s in zip(factors, factors0, model.s_vec)]

    def block(n):
        return _telescoped_product([t[f"a{n}"] for t in tr], [t[f"b{n}"] for t in tr],
                                   [t[f"diff{n}"] for t in tr], convention)

    b1 = 0.5 * model.Ex2 * block(1)
    b2 = -lam * model.Eabs * block(2)
    b3 = 0.5 * lam ** 2 * block(3)
    total = b1 + b2 + b3
    if return_blocks:
        return total, (b1, b2, b3)
    return total

"""Coordinate dictionaries with their coherence measures and sphere sampling."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels

__all__ = [
    "CoordinateDictionary",
    "CoherenceProfile",
    "EnumerationCapError",
    "normalize_columns",
    "random_dictionary",
    "near_orthonormal_dictionary",
    "worst_case_coherence",
    "cumulative_coherence",
    "separable_cumulative_coherence",
    "ks_cumulative_coherence_bound",
    "rip_constant",
    "norm_stats",
    "coherence_profile",
    "sphere_perturbation",
    "rotate_columns",
    "ks_mu_s",
]

UNIT_NORM_TOL = 1e-12
DEFAULT_RIP_CAP = 20_000


class EnumerationCapError(ValueError):
    """An exhaustive computation would exceed its configured enumeration cap."""


@dataclass(frozen=True)
class CoordinateDictionary:
    """An ``m x p`` matrix with unit-norm columns.

    Serializes to ``{"rows": m, "cols": p, "data": [...]}`` with ``data`` in
    row-major order.
    """

    matrix: np.ndarray

    def __post_init__(self):
        mat = np.array(self.matrix, dtype=float)
        if mat.ndim != 2:
            raise ValueError("a coordinate dictionary must be a matrix")
        norms = np.linalg.norm(mat, axis=0)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise ValueError("columns must have unit Euclidean norm")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def to_dict(self) -> dict:
        m, p = self.matrix.shape
        return {"rows": m, "cols": p, "data": self.matrix.ravel(order="C").tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "CoordinateDictionary":
        data = np.asarray(obj["data"], dtype=float)
        return cls(data.reshape(int(obj["rows"]), int(obj["cols"])))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "CoordinateDictionary":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class CoherenceProfile:
    mu1: float
    mu_s: dict
    delta_s: float
    delta_is_exact: bool
    A: float
    B: float


def normalize_columns(m) -> CoordinateDictionary:
    """Scale every column to unit norm."""
    m = np.asarray(m, dtype=float)
    norms = np.linalg.norm(m, axis=0)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero column")
    return CoordinateDictionary(m / norms)


def random_dictionary(m: int, p: int, rng: np.random.Generator) -> CoordinateDictionary:
    """Gaussian entries, then unit-norm columns."""
    return normalize_columns(rng.standard_normal((m, p)))


def near_orthonormal_dictionary(
    m: int, p: int, spread: float, rng: np.random.Generator
) -> CoordinateDictionary:
    """Orthonormal columns (``p <= m``) plus a Gaussian perturbation of size ``spread``."""
    if p > m:
        raise ValueError("near-orthonormal dictionaries need p <= m")
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    base = q[:, :p]
    return normalize_columns(base + spread * rng.standard_normal((m, p)) / math.sqrt(m))


def _abs_gram(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    g = np.abs(d.T @ d)
    return np.ascontiguousarray(g)


def worst_case_coherence(d) -> float:
    """Largest absolute inner product between two distinct columns."""
    d = np.asarray(d, dtype=float)
    if d.shape[1] < 2:
        raise ValueError("worst-case coherence needs at least two columns")
    g = _abs_gram(d)
    np.fill_diagonal(g, 0.0)
    return float(g.max())


def cumulative_coherence(d, s: int) -> float:
    """Order-``s`` cumulative coherence.

    For a fixed column ``j``, the largest l1 mass over at most ``s`` other
    columns is the sum of the ``s`` largest ``|<d_i, d_j>|``, so the maximum
    is exact without enumerating subsets.  ``s = 0`` gives 0.
    """
    d = np.asarray(d, dtype=float)
    p = d.shape[1]
    if s == 0:
        return 0.0
    if not 1 <= s <= p - 1:
        raise ValueError(f"order {s} out of range for {p} columns")
    return float(_kernels.top_s_sums(_abs_gram(d), int(s)).max())


def separable_cumulative_coherence(factors: Sequence, s_vec: Sequence[int]) -> float:
    """Cumulative coherence of ``kron(factors)`` over separable supports only.

    Maximizes ``||D_J^T d_j||_1`` over ``J = J_1 x ... x J_K`` with
    ``|J_k| <= s_k`` and ``j`` outside ``J``.  The l1 norm factorizes over
    modes, so for each column multi-index the best choice per mode is either
    to include ``j_k`` in ``J_k`` (factor ``1 + top_{s_k-1}``) or to exclude
    it (factor ``top_{s_k}``), with at least one mode excluded.
    """
    factors = [np.asarray(f, dtype=float) for f in factors]
    if len(factors) != len(s_vec):
        raise ValueError("need one order per factor")
    inside, outside = [], []
    for f, s in zip(factors, s_vec):
        p = f.shape[1]
        if not 1 <= s <= p:
            raise ValueError(f"order {s} out of range for {p} columns")
        g = _abs_gram(f)
        inside.append(1.0 + (_kernels.top_s_sums(g, s - 1) if s > 1 else np.zeros(p)))
        if p > 1:
            # excluding j_k leaves at most p - 1 candidates for J_k
            outside.append(_kernels.top_s_sums(g, min(s, p - 1)))
        else:
            outside.append(np.full(p, -np.inf))
    best = -np.inf
    for excluded in itertools.product((False, True), repeat=len(factors)):
        if not any(excluded):
            continue
        # Each mode's factor depends on its own index only, so the max over
        # multi-indices is the product of per-mode maxima.
        val = 1.0
        for k, ex in enumerate(excluded):
            val *= float((outside[k] if ex else inside[k]).max())
        best = max(best, val)
    return max(best, 0.0)


def ks_cumulative_coherence_bound(factors: Sequence, s_vec: Sequence[int]) -> float:
    """Upper bound ``max_k mu_{s_k}(D_k) prod_{i != k} (1 + mu_{s_i - 1}(D_i))``."""
    if len(factors) != len(s_vec):
        raise ValueError("need one order per factor")
    mus, mus_prev = [], []
    for f, s in zip(factors, s_vec):
        p = np.shape(f)[1]
        if not 1 <= s <= p:
            raise ValueError(f"order {s} out of range for {p} columns")
        mus.append(cumulative_coherence(f, s) if s <= p - 1 else cumulative_coherence(f, p - 1))
        mus_prev.append(cumulative_coherence(f, s - 1))
    best = 0.0
    for k in range(len(factors)):
        val = mus[k]
        for i in range(len(factors)):
            if i != k:
                val *= 1.0 + mus_prev[i]
        best = max(best, val)
    return best


def rip_constant(d, s: int, method: str = "exact", cap: int = DEFAULT_RIP_CAP) -> tuple[float, bool]:
    """Order-``s`` restricted isometry constant.

    ``method="exact"`` enumerates every size-``s`` column subset (refusing
    when there are more than ``cap``); ``"gershgorin"`` returns the bound
    ``mu_{s-1}(D)``.  The second return value flags an exact result.
    """
    d = np.asarray(d, dtype=float)
    p = d.shape[1]
    if not 1 <= s <= p:
        raise ValueError(f"order {s} out of range for {p} columns")
    if method == "gershgorin":
        return cumulative_coherence(d, s - 1), False
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    if s == 1:
        return 0.0, True
    count = math.comb(p, s)
    if count > cap:
        raise EnumerationCapError(f"C({p},{s}) = {count} subsets exceeds cap {cap}")
    gram = d.T @ d
    subsets = np.array(list(itertools.combinations(range(p), s)), dtype=int)
    worst = 0.0
    # batched eigenvalues keep the enumeration vectorized
    for start in range(0, len(subsets), 4096):
        chunk = subsets[start:start + 4096]
        sub = gram[chunk[:, :, None], chunk[:, None, :]]
        ev = np.linalg.eigvalsh(sub)
        worst = max(worst, float(np.max(np.abs(ev - 1.0))))
    return worst, True


def norm_stats(d) -> tuple[float, float]:
    """``A = ||D^T D - I||_F`` and ``B = ||D||_2``."""
    d = np.asarray(d, dtype=float)
    a = float(np.linalg.norm(d.T @ d - np.eye(d.shape[1]), "fro"))
    b = float(np.linalg.norm(d, 2))
    return a, b


def coherence_profile(d, s_max: int, rip_order: int | None = None,
                      rip_cap: int = DEFAULT_RIP_CAP) -> CoherenceProfile:
    d = np.asarray(d, dtype=float)
    p = d.shape[1]
    mu_s = {s: cumulative_coherence(d, s) for s in range(1, min(s_max, p - 1) + 1)}
    order = rip_order if rip_order is not None else min(s_max, p)
    try:
        delta, exact = rip_constant(d, order, "exact", cap=rip_cap)
    except EnumerationCapError:
        delta, exact = rip_constant(d, order, "gershgorin")
    a, b = norm_stats(d)
    return CoherenceProfile(worst_case_coherence(d), mu_s, delta, exact, a, b)


def rotate_columns(d0, v, theta) -> np.ndarray:
    """``D0 diag(cos theta) + V diag(sin theta)``."""
    theta = np.asarray(theta, dtype=float)
    return np.asarray(d0, dtype=float) * np.cos(theta) + np.asarray(v, dtype=float) * np.sin(theta)


def _tangent_directions(d0: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d0.shape)
    v -= d0 * np.sum(d0 * v, axis=0)
    norms = np.linalg.norm(v, axis=0)
    while np.any(norms < 1e-8):  # resample degenerate draws (m_k = 1 cannot happen for p>1 unit columns)
        bad = norms < 1e-8
        w = rng.standard_normal((d0.shape[0], int(bad.sum())))
        w -= d0[:, bad] * np.sum(d0[:, bad] * w, axis=0)
        v[:, bad] = w
        norms = np.linalg.norm(v, axis=0)
    return v / norms


def sphere_perturbation(
    d0,
    eps: float,
    rng: np.random.Generator,
    *,
    tol: float = 1e-10,
    max_iter: int = 200,
    return_angles: bool = False,
):
    """Sample a dictionary on the oblique manifold at Frobenius distance ``eps`` from ``d0``.

    Each column is rotated by ``theta_j = min(pi, t * a_j)`` toward a random
    unit tangent direction ``v_j`` (``v_j`` orthogonal to ``d0_j``), with
    random per-column weights ``a_j`` in ``(0, 1]``.  The global scale ``t``
    is found by bisection; the distance ``sqrt(sum 4 sin^2(theta_j/2))`` is
    continuous and nondecreasing in ``t`` and spans ``[0, 2 sqrt(p)]``.

    With ``return_angles=True`` returns ``(D, theta, V)``.
    """
    d0 = np.asarray(d0, dtype=float)
    p = d0.shape[1]
    if d0.shape[0] < 2:
        raise ValueError("sphere sampling needs m >= 2")
    if not 0.0 <= eps <= 2.0 * math.sqrt(p):
        raise ValueError(f"radius {eps} outside [0, 2 sqrt(p)]")
    v = _tangent_directions(d0, rng)
    if eps == 0.0:
        theta = np.zeros(p)
        out = CoordinateDictionary(normalize_columns(d0).matrix)
        return (out, theta, v) if return_angles else out
    a = rng.uniform(0.25, 1.0, size=p)
    a /= a.max()

    def dist(t: float) -> float:
        th = np.minimum(math.pi, t * a)
        return math.sqrt(float(np.sum(4.0 * np.sin(th / 2.0) ** 2)))

    lo, hi = 0.0, math.pi / float(a.min())
    if dist(hi) < eps - tol:  # only reachable by rounding at eps == 2 sqrt(p)
        lo = hi
    it = 0
    t = hi
    while it < max_iter:
        t = 0.5 * (lo + hi)
        r = dist(t)
        if abs(r - eps) <= tol * 0.5:
            break
        if r < eps:
            lo = t
        else:
            hi = t
        it += 1
    else:
        if abs(dist(t) - eps) > tol:
            raise RuntimeError("bisection on the rotation scale did not converge")
    theta = np.minimum(math.pi, t * a)
    out = rotate_columns(d0, v, theta)
    out = out / np.linalg.norm(out, axis=0)
    result = CoordinateDictionary(out)
    return (result, theta, v) if return_angles else result


DENSE_MU_CAP = 4096


def ks_mu_s(factors: Sequence, s_vec: Sequence[int], dense_cap: int = DENSE_MU_CAP) -> tuple[float, bool]:
    """Order-``s`` cumulative coherence of ``kron(factors)`` with ``s = prod s_vec``.

    Exact (unrestricted) when ``s = 1`` via ``mu_1 = max_k mu_1(D_k)`` or when the
    Kronecker product has at most ``dense_cap`` columns; otherwise the
    separable bound of :func:`ks_cumulative_coherence_bound`.  The flag marks
    an exact value.
    """
    from .tensor import kron

    s = math.prod(int(v) for v in s_vec)
    p = math.prod(int(np.shape(f)[1]) for f in factors)
    if s >= p:
        raise ValueError("order s must be smaller than the number of columns")
    if s == 1:
        return max(worst_case_coherence(f) if np.shape(f)[1] > 1 else 0.0 for f in factors), True
    if p <= dense_cap:
        return cumulative_coherence(kron(factors), s), True
    return ks_cumulative_coherence_bound(factors, s_vec), False

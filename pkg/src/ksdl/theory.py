"""Constants and hypothesis checks for local identifiability, with the supporting bounds.

Every inequality is stored as a :class:`Condition` holding both sides, so a
report can be re-verified from its JSON alone.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dictionary import (
    EnumerationCapError,
    cumulative_coherence,
    ks_mu_s,
    norm_stats,
    rip_constant,
    separable_cumulative_coherence,
)
from .generative import GenerativeModel

__all__ = [
    "Condition",
    "TheoremReport",
    "HypothesisError",
    "constants",
    "check_theorem1",
    "lipschitz_constants",
    "sample_complexity",
    "eta_n",
    "perturbed_coherence_bound",
    "operator_perturbation_bounds",
    "gram_bounds",
    "prop1_lower_bound",
    "eps_min",
    "rip_selector",
    "DEFAULT_XI",
]

DEFAULT_XI = 9.0
RIP_CAP = 20_000


class HypothesisError(ValueError):
    """A lemma or theorem was evaluated outside its hypotheses."""


@dataclass(frozen=True)
class Condition:
    name: str
    paper_eq: str
    lhs: float
    rhs: float
    holds: bool
    exact_flags: dict = field(default_factory=dict)

    @classmethod
    def compare(cls, name: str, eq: str, lhs: float, rel: str, rhs: float, **flags) -> "Condition":
        ops = {"<": lhs < rhs, "<=": lhs <= rhs, ">": lhs > rhs, ">=": lhs >= rhs}
        return cls(f"{name} [{rel}]", eq, float(lhs), float(rhs), bool(ops[rel]), dict(flags))

    def recheck(self) -> bool:
        rel = self.name.rsplit("[", 1)[1].rstrip("]")
        return {"<": self.lhs < self.rhs, "<=": self.lhs <= self.rhs,
                ">": self.lhs > self.rhs, ">=": self.lhs >= self.rhs}[rel]


@dataclass
class TheoremReport:
    per_mode: list
    globals: dict
    conditions: list
    supplementary: list = field(default_factory=list)

    @property
    def verdict(self) -> bool:
        return all(c.holds for c in self.conditions)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "per_mode": self.per_mode,
            "globals": self.globals,
            "conditions": [asdict(c) for c in self.conditions],
            "supplementary": [asdict(c) for c in self.supplementary],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_json_default)

    @classmethod
    def from_dict(cls, d: dict) -> "TheoremReport":
        return cls(d["per_mode"], d["globals"], [Condition(**c) for c in d["conditions"]],
                   [Condition(**c) for c in d.get("supplementary", [])])


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o)!r}")


def _factors(d0) -> list[np.ndarray]:
    return [np.asarray(f, dtype=float) for f in d0]


def rip_selector(d, s: int, cap: int = RIP_CAP) -> tuple[float, bool]:
    """Exact RIP constant when enumeration is feasible, else the coherence bound."""
    try:
        return rip_constant(d, s, "exact", cap=cap)
    except EnumerationCapError:
        return rip_constant(d, s, "gershgorin")


def eps_min(lam_bar: float, c_min: float, K: int) -> float:
    """Smallest radius for which the risk-gap lower bound is positive."""
    return (3 ** ((K - 1) / 2) / 2.0) * (1.5 ** ((K - 1) / 2) + 2 ** (K + 1) * lam_bar) * lam_bar * c_min


def constants(d0, model: GenerativeModel, lam: float) -> dict:
    """``C_{k,min}``, ``C_max``, ``lambda_bar`` and ``eps_{k,min}`` with their inputs."""
    d0 = _factors(d0)
    K = model.K
    mu_s, mu_exact = ks_mu_s(d0, model.s_vec)
    lam_bar = lam / model.Eabs
    per_mode = []
    for k, f in enumerate(d0):
        a, b = norm_stats(f)
        s_k, p_k = model.s_vec[k], model.p_vec[k]
        mu_sk = cumulative_coherence(f, min(s_k, p_k - 1))
        c_min = 8 * 3 ** ((K + 1) / 2) * model.kappa ** 2 * (s_k / p_k) * a * (b + 1)
        per_mode.append({
            "k": k, "m_k": model.m_vec[k], "p_k": p_k, "s_k": s_k, "A_k0": a, "B_k0": b,
            "mu_sk": mu_sk, "C_k_min": c_min, "eps_k_min": eps_min(lam_bar, c_min, K),
        })
    c_max = (1.0 / (3 * K * 1.5 ** (K / 2))) * (model.Eabs / model.M_x) * (1 - 2 * mu_s)
    glob = {
        "K": K, "s": model.s, "m": model.m, "p": model.p, "lambda": lam, "lambda_bar": lam_bar,
        "mu_s": mu_s, "mu_s_exact": mu_exact, "C_max": c_max,
        "C_max_valid": mu_s < 0.5, **model.statistics(),
    }
    return {"per_mode": per_mode, "globals": glob}


def check_theorem1(d0, model: GenerativeModel, lam: float, eps_vec: Sequence[float]) -> TheoremReport:
    """Evaluate every hypothesis of the asymptotic identifiability theorem."""
    d0 = _factors(d0)
    K = model.K
    eps_vec = [float(e) for e in eps_vec]
    if len(eps_vec) != K:
        raise ValueError("need one radius per mode")
    c = constants(d0, model, lam)
    per_mode, glob = c["per_mode"], c["globals"]
    lam_bar, c_max, mu_s = glob["lambda_bar"], glob["C_max"], glob["mu_s"]
    mu_flag = {"mu_s": glob["mu_s_exact"]}
    conds: list[Condition] = []
    for r in per_mode:
        k = r["k"]
        conds.append(Condition.compare(
            f"sparsity_mode{k}", "(6)", r["s_k"], "<=", r["p_k"] / (8 * (r["B_k0"] + 1) ** 2),
            B_k0=True))
    for r in per_mode:
        conds.append(Condition.compare(f"mu_sk_mode{r['k']}", "(6)", r["mu_sk"], "<=", 0.25, mu_sk=True))
    conds.append(Condition.compare("mu_s", "(6)", mu_s, "<", 0.5, **mu_flag))
    flat_lhs = model.Ex2 / (model.M_x * model.Eabs)
    worst = max(r["s_k"] / r["p_k"] * r["A_k0"] * (r["B_k0"] + 1) for r in per_mode)
    flat_rhs = (24 * math.sqrt(3) * 4.5 ** (K / 2) * K / (1 - 2 * mu_s) * worst
                if mu_s < 0.5 else math.inf)
    conds.append(Condition.compare("coefficient_flatness", "(7)", flat_lhs, ">", flat_rhs, **mu_flag))
    conds.append(Condition.compare("lambda", "(10)", lam, "<=", model.x_min / (8 * 3 ** ((K - 1) / 2))))
    for r, e in zip(per_mode, eps_vec):
        k = r["k"]
        conds.append(Condition.compare(f"eps_lower_mode{k}", "(11)", lam_bar * r["C_k_min"], "<", e))
        conds.append(Condition.compare(f"eps_upper_mode{k}", "(11)", e, "<", lam_bar * c_max, **mu_flag))
    noise_rhs = 3 * 1.5 ** (K / 2) * (lam_bar * K * c_max - sum(eps_vec))
    conds.append(Condition.compare("noise", "(12)", model.M_w / model.M_x, "<", noise_rhs, **mu_flag))

    supp: list[Condition] = []
    for r, e in zip(per_mode, eps_vec):
        k = r["k"]
        delta, exact = rip_selector(d0[k], r["s_k"])
        r["delta_sk"], r["delta_sk_exact"], r["eps_k"] = delta, exact, e
        supp.append(Condition.compare(f"rip_mode{k}", "(8)", delta, "<=", 0.25, delta_sk=exact))
        supp.append(Condition.compare(f"eps_above_min_mode{k}", "(13)", e, ">", r["eps_k_min"]))
        supp.append(Condition.compare(f"eps_cap_mode{k}", "(13)", e, "<=", 0.15))
    supp.append(Condition.compare("lambda_bar_prop1", "(8)", lam_bar, "<=", 1 / (8 * 3 ** ((K - 1) / 2))))
    cmin_max = max(r["C_k_min"] for r in per_mode)
    supp.append(Condition.compare("lambda_bar_eps_cap", "(8)", lam_bar, "<=",
                                  0.15 / cmin_max if cmin_max > 0 else math.inf))
    glob["eps"] = eps_vec
    glob["noise_condition_lhs"] = model.M_w / model.M_x
    glob["noise_condition_rhs"] = noise_rhs
    return TheoremReport(per_mode, glob, conds, supp)


def _deltas(d0, model, eps_vec):
    out = []
    for k, f in enumerate(_factors(d0)):
        d_sk, exact = rip_selector(f, model.s_vec[k])
        root = math.sqrt(1 - d_sk) - eps_vec[k] if d_sk < 1 else -1.0
        if root <= 0:
            raise HypothesisError(f"radius {eps_vec[k]} is not below sqrt(1 - delta) for mode {k}")
        out.append((d_sk, exact, 1 - root ** 2))
    return out


def lipschitz_constants(d0, model: GenerativeModel, lam: float, eps_vec: Sequence[float]):
    """Coordinate-wise Lipschitz constants ``L_k`` and the RIP values used.

    Returns ``(L, info)`` where ``info[k]`` has ``delta_sk``, its exactness flag
    and the derived ``delta_k`` with ``sqrt(1 - delta_k) = sqrt(1 - delta_sk) - eps_k``.
    """
    eps_vec = [float(e) for e in eps_vec]
    d = _deltas(d0, model, eps_vec)
    prod_rip = math.prod(math.sqrt(1 + ds) for ds, _, _ in d)
    prod_inv = math.prod((1 - dk) ** -0.5 for _, _, dk in d)
    inner = model.M_x * prod_rip + model.M_w + lam * math.sqrt(model.s) * prod_inv
    L = [(1 - dk) ** -0.5 * inner ** 2 for _, _, dk in d]
    info = [{"delta_sk": ds, "delta_sk_exact": ex, "delta_k": dk} for ds, ex, dk in d]
    return L, info


def eta_n(d0, model: GenerativeModel, lam: float, eps_vec: Sequence[float], N: int,
          xi: float = DEFAULT_XI) -> float:
    """Deviation bound ``sqrt(2/N) sum_k L_k eps_k (2 sqrt(pi m_k p_k) + sqrt(xi))``."""
    L, _ = lipschitz_constants(d0, model, lam, eps_vec)
    return math.sqrt(2.0 / N) * sum(
        lk * e * (2 * math.sqrt(math.pi * mk * pk) + math.sqrt(xi))
        for lk, e, mk, pk in zip(L, eps_vec, model.m_vec, model.p_vec))


@dataclass(frozen=True)
class SampleComplexity:
    N_k: list
    N: float
    N_k_omega: list
    N_omega: float
    L_k: list
    eps_k_min: list
    xi: float


def sample_complexity(d0, model: GenerativeModel, lam: float, eps_vec: Sequence[float],
                      xi: float = DEFAULT_XI, c1: float = 1.0, c2: float = 1.0) -> SampleComplexity:
    """Explicit per-mode sample sizes and the constant-absorbed variant.

    ``N_k = (2 sqrt(pi m_k p_k) + sqrt(xi))^2 (2^4.5 L_k p_k / (s E{x^2} (eps_k - eps_k_min)))^2``.
    The second form uses ``c1``, ``c2`` for the constants the asymptotic
    statement leaves unspecified.
    """
    eps_vec = [float(e) for e in eps_vec]
    c = constants(d0, model, lam)
    K = model.K
    mins = [r["eps_k_min"] for r in c["per_mode"]]
    for k, (e, em) in enumerate(zip(eps_vec, mins)):
        if e <= em:
            raise HypothesisError(f"radius {e} for mode {k} does not exceed eps_min = {em}")
    L, _ = lipschitz_constants(d0, model, lam, eps_vec)
    lam_bar = c["globals"]["lambda_bar"]
    nk, nk_omega = [], []
    for k in range(K):
        mk, pk = model.m_vec[k], model.p_vec[k]
        gap = eps_vec[k] - mins[k]
        nk.append((2 * math.sqrt(math.pi * mk * pk) + math.sqrt(xi)) ** 2
                  * (2 ** 4.5 * L[k] * pk / (model.s * model.Ex2 * gap)) ** 2)
        nk_omega.append(c1 * c2 * pk ** 2 * (mk * pk + xi)
                        * (2 ** K * (1 + lam_bar ** 2) * model.M_x ** 2 + model.M_w ** 2)
                        / (model.s ** 2 * model.Ex2 ** 2 * gap ** 2))
    return SampleComplexity(nk, max(nk), nk_omega, max(nk_omega), L, mins, xi)


def perturbed_coherence_bound(d0, eps_vec: Sequence[float], s_vec: Sequence[int],
                              mu_s0: float | None = None) -> float:
    """``mu_s(D0) + 2 (1.5)^{K/2} sqrt(s) sum_k eps_k``.

    ``mu_s(D0)`` defaults to the exact separable-support cumulative coherence.
    """
    d0 = _factors(d0)
    K = len(d0)
    for k, f in enumerate(d0):
        delta, _ = rip_selector(f, s_vec[k])
        if delta > 0.25:
            raise HypothesisError(f"delta_s for mode {k} is {delta:.4f} > 1/4")
    if max(eps_vec) > 0.15:
        raise HypothesisError("radii above 0.15")
    if mu_s0 is None:
        mu_s0 = separable_cumulative_coherence(d0, s_vec)
    s = math.prod(s_vec)
    return mu_s0 + 2 * 1.5 ** (K / 2) * math.sqrt(s) * sum(eps_vec)


def operator_perturbation_bounds(dk, dk_prime, s_k: int, delta: float | None = None) -> dict:
    """Right-hand sides of the four operator perturbation bounds.

    ``delta`` defaults to the larger exact RIP constant of the two factors.
    """
    dk = np.asarray(dk, dtype=float)
    dk_prime = np.asarray(dk_prime, dtype=float)
    if delta is None:
        delta = max(rip_selector(dk, s_k)[0], rip_selector(dk_prime, s_k)[0])
    if delta >= 1:
        raise HypothesisError(f"delta = {delta:.4f} >= 1")
    dist = float(np.linalg.norm(dk - dk_prime, "fro"))
    return {
        "delta": delta,
        "dist": dist,
        "I_minus_pinv_Dprime": (1 - delta) ** -0.5 * dist,
        "H_diff": 2 * (1 - delta) ** -1.5 * dist,
        "pinv_diff": 2 * (1 - delta) ** -1.0 * dist,
        "P_diff": 2 * (1 - delta) ** -0.5 * dist,
    }


def gram_bounds(delta: float) -> dict:
    """Bounds on ``||H||_2`` and ``||D^+||_2`` for a block with RIP constant ``delta``."""
    if delta >= 1:
        raise HypothesisError(f"delta = {delta:.4f} >= 1")
    return {"H": 1.0 / (1 - delta), "pinv": (1 - delta) ** -0.5}


def prop1_lower_bound(model: GenerativeModel, eps_vec: Sequence[float], eps_k_min: Sequence[float]) -> float:
    """``(s E{x^2}/8) sum_k (eps_k/p_k)(eps_k - eps_k_min)``."""
    return model.s * model.Ex2 / 8.0 * sum(
        e / p * (e - em) for e, p, em in zip(eps_vec, model.p_vec, eps_k_min))

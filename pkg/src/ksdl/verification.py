"""Randomized checks of the structural identities and supporting bounds.

Each check draws its instances from ``make_rng(seed, key, trial)`` and
compares a library quantity with an independent dense or brute-force
computation.  A check reports its worst observed ratio of measured value to
allowed value, so ``max_ratio <= 1`` means zero violations.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .dictionary import (
    cumulative_coherence,
    ks_cumulative_coherence_bound,
    ks_mu_s,
    near_orthonormal_dictionary,
    random_dictionary,
    rip_constant,
    sphere_perturbation,
)
from .generative import GenerativeModel, make_rng, sample_coefficients, sample_noise, \
    sample_support, synthesize
from .objective import analytic_gap_expectation, conditional_minimizer, gap_terms_batch, \
    lasso_value, phi_value, sign_certificate
from .oracle import exhaustive_mu_s, reference_lasso, semi_analytic_gap
from .tensor import kron, kron_diff_decomposition, kron_factorized_operators, kron_submatrix
from .theory import gram_bounds, lipschitz_constants, operator_perturbation_bounds, \
    perturbed_coherence_bound, rip_selector

__all__ = [
    "LemmaCheck",
    "check_structural",
    "check_closed_form",
    "check_certificate",
    "tiny_instance",
    "check_gap_expectation",
    "check_coherence_bound",
    "check_rip_bound",
    "check_perturbed_coherence",
    "check_operator_bounds",
    "check_lipschitz",
    "run_all",
]

STRUCT_TOL = 1e-10
CLOSED_FORM_TOL = 1e-8
LASSO_MATCH_TOL = 1e-6


@dataclass(frozen=True)
class LemmaCheck:
    name: str
    trials: int
    violations: int
    max_ratio: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_row(self) -> dict:
        row = asdict(self)
        row["passed"] = self.passed
        return row


def _rel(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1.0))


def _random_factors(rng, m_vec, p_vec):
    return [random_dictionary(m, p, rng).matrix for m, p in zip(m_vec, p_vec)]


def _random_support(rng, p_vec, s_vec):
    return tuple(np.sort(rng.choice(p, size=s, replace=False)) for p, s in zip(p_vec, s_vec))


def check_structural(trials: int = 100, seed: int = 0) -> LemmaCheck:
    """Kronecker factorizations of projector, pseudoinverse and inverse Gram, plus telescoping."""
    worst, bad = 0.0, 0
    for t in range(trials):
        rng = make_rng(seed, 101, t)
        K = int(rng.integers(1, 4))
        m_vec = rng.integers(1, 7, size=K)
        p_vec = rng.integers(1, 9, size=K)
        s_vec = [int(rng.integers(1, min(3, m, p) + 1)) for m, p in zip(m_vec, p_vec)]
        d = _random_factors(rng, m_vec, p_vec)
        d0 = _random_factors(rng, m_vec, p_vec)
        sup = _random_support(rng, p_vec, s_vec)
        dj = kron_submatrix(d, sup)
        ops = kron_factorized_operators(d, sup)
        pinv = np.linalg.pinv(dj)
        errs = [
            _rel(kron(ops.projector), dj @ pinv),
            _rel(kron(ops.pinv), pinv),
            _rel(kron(ops.gram_inv), np.linalg.inv(dj.T @ dj)),
        ]
        target = kron(d) - kron(d0)
        for conv in ("forward", "reverse"):
            terms = kron_diff_decomposition(d, d0, conv)
            errs.append(_rel(sum(kron(term) for term in terms), target))
        err = max(errs)
        worst = max(worst, err / STRUCT_TOL)
        bad += err > STRUCT_TOL
    return LemmaCheck("structural_identities", trials, int(bad), worst, STRUCT_TOL)


def check_closed_form(trials: int = 200, seed: int = 0) -> LemmaCheck:
    """Sign-conditioned minimizer and value against normal equations on the dense support block."""
    worst, bad = 0.0, 0
    for t in range(trials):
        rng = make_rng(seed, 102, t)
        K = int(rng.integers(1, 4))
        m_vec = rng.integers(3, 7, size=K)
        p_vec = rng.integers(2, 9, size=K)
        s_vec = [int(rng.integers(1, min(3, m, p) + 1)) for m, p in zip(m_vec, p_vec)]
        d = _random_factors(rng, m_vec, p_vec)
        sup = _random_support(rng, p_vec, s_vec)
        dj = kron_submatrix(d, sup)
        y = rng.standard_normal(dj.shape[0])
        sig = rng.choice([-1.0, 1.0], size=dj.shape[1])
        lam = float(rng.uniform(0.0, 1.0))
        z = np.linalg.solve(dj.T @ dj, dj.T @ y - lam * sig)
        phi = 0.5 * float(np.sum((y - dj @ z) ** 2)) + lam * float(sig @ z)
        sol = conditional_minimizer(d, y, sig, lam, support=sup)
        err = max(float(np.max(np.abs(sol.x_J - z))) / max(1.0, float(np.max(np.abs(z)))),
                  abs(sol.phi - phi) / max(1.0, abs(phi)))
        worst = max(worst, err / CLOSED_FORM_TOL)
        bad += err > CLOSED_FORM_TOL
    return LemmaCheck("closed_form_minimizer", trials, int(bad), worst, CLOSED_FORM_TOL)


def check_certificate(instances: int = 500, seed: int = 0, max_draws: int = 100_000) -> LemmaCheck:
    """Where the sign certificate holds, the full lasso solution equals the closed form."""
    worst, bad, found, draws = 0.0, 0, 0, 0
    model = GenerativeModel((6, 5), (5, 4), (2, 1), 1.0, 2.0, 0.004)
    d, mu = None, None
    while found < instances:
        if draws >= max_draws:
            raise RuntimeError(f"only {found} certified instances in {draws} draws")
        rng = make_rng(seed, 103, draws)
        if draws % 10 == 0:
            d = [near_orthonormal_dictionary(m, p, 0.1, rng).matrix
                 for m, p in zip(model.m_vec, model.p_vec)]
            mu = ks_mu_s(d, model.s_vec)
        draws += 1
        if mu[0] >= 0.5:
            continue
        lam = float(rng.uniform(0.05, 0.4))
        sup = sample_support(model.p_vec, model.s_vec, rng)
        x = sample_coefficients(sup, model, rng)
        y = kron_submatrix(d, sup) @ x[sup.flat] + sample_noise(model, rng)
        if not sign_certificate(d, y, x, lam, mu):
            continue
        found += 1
        xhat = conditional_minimizer(d, y, np.sign(x), lam).x_hat
        x_ref = reference_lasso(kron(d), y, lam)
        _, x_lib = lasso_value(d, y, lam, tol=1e-12)
        err = 0.0
        for sol in (x_ref, x_lib):
            if not np.array_equal(np.sign(sol), np.sign(xhat)):
                err = math.inf
            else:
                err = max(err, float(np.max(np.abs(sol - xhat))))
        worst = max(worst, err / LASSO_MATCH_TOL)
        bad += err > LASSO_MATCH_TOL
    return LemmaCheck("certificate_lasso_match", instances, int(bad), worst, LASSO_MATCH_TOL)


def tiny_instance(seed: int = 0):
    """``K = 2``, ``m = (3, 2)``, ``p = (4, 3)``, ``s = (2, 1)`` with a sphere-sampled candidate."""
    rng = make_rng(seed, 104)
    model = GenerativeModel((3, 2), (4, 3), (2, 1), 0.5, 1.5, 0.1)
    d0 = [random_dictionary(m, p, rng).matrix for m, p in zip(model.m_vec, model.p_vec)]
    d = [sphere_perturbation(f, 0.2, rng).matrix for f in d0]
    return d, d0, model, 0.1


def check_gap_expectation(samples: int = 100_000, seed: int = 0) -> dict:
    """Analytic gap expectation against the per-support oracle and a sampling average."""
    d, d0, model, lam = tiny_instance(seed)
    analytic = analytic_gap_expectation(d, d0, model, lam)
    oracle = semi_analytic_gap(d, d0, model, lam)
    batch = synthesize(d0, model, samples, make_rng(seed, 105))
    totals = gap_terms_batch(d, d0, batch, lam).sum(axis=1)
    mean = float(totals.mean())
    se = float(totals.std(ddof=1) / math.sqrt(samples))
    rel = abs(analytic - oracle) / max(abs(oracle), 1e-300)
    return {"analytic": analytic, "oracle": oracle, "relative_difference": rel,
            "mc_mean": mean, "mc_se": se, "z": abs(mean - analytic) / se,
            "passed": bool(rel <= 1e-10 and abs(mean - analytic) <= 3 * se)}


def check_coherence_bound(trials: int = 1000, seed: int = 0) -> LemmaCheck:
    """Exhaustive separable cumulative coherence of the Kronecker product against the factor bound."""
    worst, bad = 0.0, 0
    for t in range(trials):
        rng = make_rng(seed, 106, t)
        p_vec = rng.integers(2, 7, size=2)
        m_vec = rng.integers(2, 7, size=2)
        s_vec = [int(rng.integers(1, min(3, p) + 1)) for p in p_vec]
        if math.prod(s_vec) >= math.prod(p_vec):
            s_vec[0] = 1
        d = _random_factors(rng, m_vec, p_vec)
        lhs = exhaustive_mu_s(kron(d), 0, separable=(tuple(p_vec), tuple(s_vec)))
        rhs = ks_cumulative_coherence_bound(d, s_vec)
        worst = max(worst, lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf))
        bad += lhs > rhs * (1 + 1e-12)
    return LemmaCheck("ks_coherence_bound", trials, int(bad), worst, 0.0)


def check_rip_bound(trials: int = 500, seed: int = 0) -> LemmaCheck:
    """Exact restricted isometry constant of random 5 x 8 dictionaries at order 3 against ``mu_2``."""
    worst, bad = 0.0, 0
    for t in range(trials):
        rng = make_rng(seed, 107, t)
        m, p, s = 5, 8, 3
        d = random_dictionary(m, p, rng).matrix
        delta, _ = rip_constant(d, s, "exact")
        mu = cumulative_coherence(d, s - 1)
        worst = max(worst, delta / mu if mu > 0 else 0.0)
        bad += delta > mu * (1 + 1e-12) + 1e-15
    return LemmaCheck("rip_vs_coherence", trials, int(bad), worst, 0.0)


def check_perturbed_coherence(trials: int = 1000, seed: int = 0) -> LemmaCheck:
    """Separable cumulative coherence of sphere-sampled dictionaries against the perturbation bound."""
    worst, bad, done, draw = 0.0, 0, 0, 0
    while done < trials:
        rng = make_rng(seed, 108, draw)
        draw += 1
        p_vec = rng.integers(3, 6, size=2)
        s_vec = [int(rng.integers(1, 3)) for _ in p_vec]
        d0 = [near_orthonormal_dictionary(int(p), int(p), 0.05, rng).matrix for p in p_vec]
        if max(rip_selector(f, s)[0] for f, s in zip(d0, s_vec)) > 0.25:
            continue
        eps = rng.uniform(0.0, 0.15, size=2)
        d = [sphere_perturbation(f, float(e), rng).matrix for f, e in zip(d0, eps)]
        sep = (tuple(int(p) for p in p_vec), tuple(s_vec))
        mu0 = exhaustive_mu_s(kron(d0), 0, separable=sep)
        rhs = perturbed_coherence_bound(d0, eps, s_vec, mu_s0=mu0)
        lhs = exhaustive_mu_s(kron(d), 0, separable=sep)
        worst = max(worst, float(lhs / rhs))
        bad += lhs > rhs
        done += 1
    return LemmaCheck("perturbed_coherence_bound", trials, int(bad), worst, 0.0)


def check_operator_bounds(trials: int = 500, seed: int = 0) -> LemmaCheck:
    """Spectral norms of operator differences and Gram bounds on every support of size ``s_k``."""
    worst, bad = 0.0, 0
    done, draw = 0, 0
    while done < trials:
        rng = make_rng(seed, 109, draw)
        draw += 1
        m = int(rng.integers(4, 7))
        p = int(rng.integers(m, 9))
        s = int(rng.integers(1, 4))
        d = near_orthonormal_dictionary(m, p, 0.3, rng).matrix if p == m else \
            random_dictionary(m, p, rng).matrix
        dp = sphere_perturbation(d, float(rng.uniform(0.0, 0.3)), rng).matrix
        delta = max(rip_constant(d, s)[0], rip_constant(dp, s)[0])
        if delta >= 1:
            continue
        done += 1
        b = operator_perturbation_bounds(d, dp, s, delta)
        g = gram_bounds(delta)
        ratio = 0.0
        for cols in itertools.combinations(range(p), s):
            cols = list(cols)
            a, a2 = d[:, cols], dp[:, cols]
            pi, pi2 = np.linalg.pinv(a), np.linalg.pinv(a2)
            h, h2 = np.linalg.inv(a.T @ a), np.linalg.inv(a2.T @ a2)
            pairs = [
                (np.linalg.norm(np.eye(s) - pi @ a2, 2), b["I_minus_pinv_Dprime"]),
                (np.linalg.norm(h - h2, 2), b["H_diff"]),
                (np.linalg.norm(pi - pi2, 2), b["pinv_diff"]),
                (np.linalg.norm(a @ pi - a2 @ pi2, 2), b["P_diff"]),
                (np.linalg.norm(h, 2), g["H"]),
                (np.linalg.norm(h2, 2), g["H"]),
                (np.linalg.norm(pi, 2), g["pinv"]),
                (np.linalg.norm(pi2, 2), g["pinv"]),
            ]
            for lhs, rhs in pairs:
                # tiny slack for rounding when both sides vanish
                r = lhs / rhs if rhs > 0 else (0.0 if lhs <= 1e-12 else math.inf)
                ratio = max(ratio, r)
                bad += lhs > rhs * (1 + 1e-9) + 1e-12
        worst = max(worst, float(ratio))
    return LemmaCheck("operator_perturbation_bounds", trials, int(bad), worst, 0.0)


def check_lipschitz(trials: int = 1000, seed: int = 0) -> LemmaCheck:
    """``|phi_y(D) - phi_y(D')|`` against ``sum_k L_k ||D_k - D'_k||_F`` inside the balls."""
    rng = make_rng(seed, 110)
    model = GenerativeModel((5, 4), (5, 4), (2, 1), 1.0, 2.0, 0.05)
    d0 = [near_orthonormal_dictionary(m, p, 0.1, rng).matrix
          for m, p in zip(model.m_vec, model.p_vec)]
    lam = 0.2
    eps = [0.1, 0.1]
    L, _ = lipschitz_constants(d0, model, lam, eps)
    worst, bad = 0.0, 0
    for t in range(trials):
        r = make_rng(seed, 110, t + 1)
        d = [sphere_perturbation(f, float(r.uniform(0, e)), r).matrix for f, e in zip(d0, eps)]
        dp = [sphere_perturbation(f, float(r.uniform(0, e)), r).matrix for f, e in zip(d0, eps)]
        sup = sample_support(model.p_vec, model.s_vec, r)
        x = sample_coefficients(sup, model, r)
        y = kron_submatrix(d0, sup) @ x[sup.flat] + sample_noise(model, r)
        sig = np.sign(x)
        lhs = abs(phi_value(d, y, sig, lam) - phi_value(dp, y, sig, lam))
        rhs = sum(lk * float(np.linalg.norm(a - b)) for lk, a, b in zip(L, d, dp))
        worst = max(worst, lhs / rhs if rhs > 0 else 0.0)
        bad += lhs > rhs
    return LemmaCheck("coordinate_lipschitz", trials, int(bad), worst, 0.0)


def run_all(counts, seed: int = 0) -> list[LemmaCheck]:
    """Run every check with trial counts taken from ``counts`` (a LemmaConfig)."""
    gap = check_gap_expectation(seed=seed)
    gap_check = LemmaCheck("gap_expectation", 1, 0 if gap["passed"] else 1,
                           max(gap["relative_difference"] / 1e-10, gap["z"] / 3.0), 1e-10)
    return [
        check_structural(counts.structural, seed),
        check_closed_form(counts.closed_form, seed),
        check_certificate(counts.certificate, seed),
        gap_check,
        check_coherence_bound(counts.coherence, seed),
        check_rip_bound(counts.rip, seed),
        check_perturbed_coherence(counts.perturbed_coherence, seed),
        check_operator_bounds(counts.operator, seed),
        check_lipschitz(counts.lipschitz, seed),
    ]

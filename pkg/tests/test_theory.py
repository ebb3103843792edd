import json
import math

import numpy as np
import pytest

from ksdl.dictionary import near_orthonormal_dictionary, random_dictionary
from ksdl.generative import GenerativeModel, make_rng
from ksdl.theory import (
    HypothesisError,
    TheoremReport,
    check_theorem1,
    constants,
    eps_min,
    eta_n,
    gram_bounds,
    lipschitz_constants,
    operator_perturbation_bounds,
    perturbed_coherence_bound,
    prop1_lower_bound,
    sample_complexity,
)


def test_fixture_passes(fixture_instance):
    fx = fixture_instance
    rep = check_theorem1(fx["factors"], fx["model"], fx["lambda"], fx["eps"])
    assert rep.verdict
    assert all(c.recheck() == c.holds for c in rep.conditions + rep.supplementary)
    back = TheoremReport.from_dict(json.loads(rep.to_json()))
    assert back.verdict and back.to_json() == rep.to_json()
    assert {c.paper_eq for c in rep.conditions} >= {"(6)", "(7)", "(10)", "(11)", "(12)"}


def test_orthonormal_constants():
    model = GenerativeModel((8,), (8,), (4,), 1.0, 1.0, 0.0)
    c = constants([np.eye(8)], model, 0.05)
    assert c["per_mode"][0]["C_k_min"] == 0.0
    assert c["per_mode"][0]["eps_k_min"] == 0.0
    # E|x| / M_x = 1 / sqrt(s) = 1/2, mu_s = 0
    assert c["globals"]["mu_s"] == 0.0
    assert c["globals"]["C_max"] == pytest.approx(0.5 / (3 * math.sqrt(1.5)))


def test_eps_min():
    assert eps_min(0.0, 3.0, 2) == 0.0
    assert eps_min(0.1, 0.0, 3) == 0.0
    # K = 1: (1 + 4 lam) lam C / 2
    assert eps_min(0.1, 2.0, 1) == pytest.approx(0.5 * 1.4 * 0.1 * 2.0)


def test_condition_failures(fixture_instance):
    fx = fixture_instance
    rep = check_theorem1(fx["factors"], fx["model"], fx["lambda"], fx["eps"])
    noise = next(c for c in rep.conditions if c.name.startswith("noise"))
    m = fx["model"]
    loud = GenerativeModel(m.m_vec, m.p_vec, m.s_vec, m.x_min, m.x_max,
                           noise.rhs * m.M_x * 1.01)
    rep2 = check_theorem1(fx["factors"], loud, fx["lambda"], fx["eps"])
    assert not rep2.verdict
    assert [c.name for c in rep2.conditions if not c.holds] == [noise.name]
    big = check_theorem1(fx["factors"], m, 10 * fx["lambda"], fx["eps"])
    assert not next(c for c in big.conditions if c.name.startswith("lambda")).holds
    with pytest.raises(ValueError):
        check_theorem1(fx["factors"], m, fx["lambda"], fx["eps"][:1])


def test_full_support_fails_sparsity():
    rng = make_rng(0)
    model = GenerativeModel((4, 5), (4, 6), (4, 1), 1.0, 1.0, 0.0)
    f = [random_dictionary(4, 4, rng).matrix, random_dictionary(5, 6, rng).matrix]
    rep = check_theorem1(f, model, 0.01, [0.01, 0.01])
    assert not next(c for c in rep.conditions if c.name.startswith("sparsity_mode0")).holds


def test_lipschitz_constants():
    # orthonormal, no noise, lam = 0: L = M_x^2 / sqrt(1 - delta_k)
    model = GenerativeModel((6,), (6,), (2,), 1.0, 1.0, 0.0)
    L, info = lipschitz_constants([np.eye(6)], model, 0.0, [0.1])
    assert info[0]["delta_sk"] == pytest.approx(0.0, abs=1e-12)
    dk = 1 - 0.9 ** 2
    assert info[0]["delta_k"] == pytest.approx(dk)
    assert L[0] == pytest.approx(model.M_x ** 2 / math.sqrt(1 - dk))
    L2, _ = lipschitz_constants([np.eye(6)], model, 0.0, [0.2])
    L3, _ = lipschitz_constants([np.eye(6)], model, 0.1, [0.1])
    assert L2[0] > L[0] and L3[0] > L[0]
    with pytest.raises(HypothesisError):
        lipschitz_constants([np.eye(6)], model, 0.0, [1.0])


def test_eta_n_scaling(fixture_instance):
    fx = fixture_instance
    args = (fx["factors"], fx["model"], fx["lambda"], fx["eps"])
    assert eta_n(*args, 400) == pytest.approx(eta_n(*args, 100) / 2)


def test_sample_complexity(fixture_instance):
    fx = fixture_instance
    f, m, lam, eps = fx["factors"], fx["model"], fx["lambda"], fx["eps"]
    sc = sample_complexity(f, m, lam, eps)
    mins = sc.eps_k_min
    # doubling eps_k - eps_k_min while holding L_k fixed quarters N_k
    L, _ = lipschitz_constants(f, m, lam, eps)
    for k in range(m.K):
        mk, pk = m.m_vec[k], m.p_vec[k]
        hand = ((2 * math.sqrt(math.pi * mk * pk) + 3.0) ** 2
                * (2 ** 4.5 * L[k] * pk / (m.s * m.Ex2 * (eps[k] - mins[k]))) ** 2)
        assert sc.N_k[k] == pytest.approx(hand, rel=1e-12)
    wide = [2 * e - em for e, em in zip(eps, mins)]
    om = sample_complexity(f, m, lam, wide)
    for a, b in zip(sc.N_k_omega, om.N_k_omega):
        assert b == pytest.approx(a / 4, rel=1e-12)
    tiny = sample_complexity(f, m, lam, eps, xi=1e-300)
    assert all(t < n for t, n in zip(tiny.N_k, sc.N_k))
    with pytest.raises(HypothesisError):
        sample_complexity(f, m, lam, [mins[0], eps[1]])


def test_perturbed_coherence_and_operators():
    rng = make_rng(3)
    f = [near_orthonormal_dictionary(8, 6, 0.05, rng).matrix for _ in range(2)]
    b0 = perturbed_coherence_bound(f, [0.0, 0.0], [1, 1])
    assert b0 == pytest.approx(perturbed_coherence_bound(f, [0.0, 0.0], [1, 1], mu_s0=b0))
    b = perturbed_coherence_bound(f, [0.01, 0.02], [1, 1])
    assert b == pytest.approx(b0 + 2 * 1.5 * 0.03)
    with pytest.raises(HypothesisError):
        perturbed_coherence_bound(f, [0.2, 0.0], [1, 1])
    ob = operator_perturbation_bounds(f[0], f[0], 2)
    assert ob["dist"] == 0.0 and ob["P_diff"] == 0.0
    with pytest.raises(HypothesisError):
        operator_perturbation_bounds(f[0], f[1], 2, delta=1.0)
    gb = gram_bounds(0.19)
    assert gb["H"] == pytest.approx(1 / 0.81) and gb["pinv"] == pytest.approx(1 / 0.9)


def test_prop1_lower_bound():
    model = GenerativeModel((4, 4), (4, 4), (1, 1), 1.0, 1.0, 0.0)
    assert prop1_lower_bound(model, [0.1, 0.1], [0.1, 0.1]) == 0.0
    assert prop1_lower_bound(model, [0.2, 0.0], [0.1, 0.0]) == pytest.approx(1 / 8 * 0.2 / 4 * 0.1)

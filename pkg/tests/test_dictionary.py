import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ksdl.dictionary import (
    CoordinateDictionary,
    EnumerationCapError,
    coherence_profile,
    cumulative_coherence,
    ks_cumulative_coherence_bound,
    ks_mu_s,
    near_orthonormal_dictionary,
    norm_stats,
    normalize_columns,
    random_dictionary,
    rip_constant,
    separable_cumulative_coherence,
    sphere_perturbation,
    worst_case_coherence,
)
from ksdl.oracle import exhaustive_mu_s
from ksdl.tensor import kron


def test_coordinate_dictionary_rejects_non_unit_columns():
    with pytest.raises(ValueError):
        CoordinateDictionary(np.array([[1.0, 0.0], [0.0, 2.0]]))


def test_json_roundtrip(rng):
    d = random_dictionary(3, 5, rng)
    obj = json.loads(d.to_json())
    assert set(obj) == {"rows", "cols", "data"}
    assert obj["rows"] == 3 and obj["cols"] == 5 and len(obj["data"]) == 15
    np.testing.assert_array_equal(CoordinateDictionary.from_json(d.to_json()).matrix, d.matrix)
    # row-major payload
    assert obj["data"][:5] == d.matrix[0].tolist()


def test_normalize_columns(rng):
    np.testing.assert_array_equal(normalize_columns(np.eye(3)).matrix, np.eye(3))
    np.testing.assert_allclose(normalize_columns(np.array([[3.0], [4.0]])).matrix[:, 0], [0.6, 0.8])
    d = normalize_columns(rng.standard_normal((5, 9))).matrix
    np.testing.assert_allclose(np.linalg.norm(d, axis=0), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        normalize_columns(np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_worst_case_coherence():
    assert worst_case_coherence(np.eye(3)) == 0.0
    th = 0.7
    d = np.array([[1.0, math.cos(th)], [0.0, math.sin(th)]])
    assert worst_case_coherence(d) == pytest.approx(abs(math.cos(th)))
    with pytest.raises(ValueError):
        worst_case_coherence(np.ones((2, 1)))


def test_mu1_of_kronecker_is_max_of_factors(rng):
    for _ in range(20):
        f = [random_dictionary(3, 4, rng).matrix, random_dictionary(2, 3, rng).matrix]
        assert worst_case_coherence(kron(f)) == pytest.approx(max(map(worst_case_coherence, f)),
                                                               rel=1e-12)


def test_cumulative_coherence(rng):
    d = random_dictionary(4, 6, rng).matrix
    assert cumulative_coherence(d, 1) == pytest.approx(worst_case_coherence(d))
    assert cumulative_coherence(np.eye(5), 3) == 0.0
    assert cumulative_coherence(d, 2) == pytest.approx(exhaustive_mu_s(d, 2), rel=1e-12)
    with pytest.raises(ValueError):
        cumulative_coherence(d, 6)


@given(st.integers(0, 2 ** 32 - 1))
def test_separable_closed_form_matches_enumeration(seed):
    r = np.random.default_rng(seed)
    p_vec = tuple(int(v) for v in r.integers(2, 5, size=2))
    s_vec = tuple(int(r.integers(1, p + 1)) for p in p_vec)
    if math.prod(s_vec) >= math.prod(p_vec):
        s_vec = (1, s_vec[1])
    f = [random_dictionary(3, p, r).matrix for p in p_vec]
    exact = exhaustive_mu_s(kron(f), 0, separable=(p_vec, s_vec))
    assert separable_cumulative_coherence(f, s_vec) == pytest.approx(exact, rel=1e-12, abs=1e-15)


def test_ks_bound_trivial_cases(rng):
    assert ks_cumulative_coherence_bound([np.eye(3), np.eye(4)], (2, 2)) == 0.0
    d = random_dictionary(4, 6, rng).matrix
    assert ks_cumulative_coherence_bound([d], (2,)) == pytest.approx(cumulative_coherence(d, 2))


def test_ks_bound_dominates_exhaustive(rng):
    for _ in range(100):
        p_vec = tuple(int(v) for v in rng.integers(2, 7, size=2))
        s_vec = tuple(int(rng.integers(1, min(2, p) + 1)) for p in p_vec)
        f = [random_dictionary(int(rng.integers(2, 7)), p, rng).matrix for p in p_vec]
        exact = exhaustive_mu_s(kron(f), 0, separable=(p_vec, s_vec))
        assert exact <= ks_cumulative_coherence_bound(f, s_vec) * (1 + 1e-12)


def test_rip_constant(rng):
    assert rip_constant(np.eye(4), 3) == (0.0, True)
    d = random_dictionary(5, 8, rng).matrix
    assert rip_constant(d, 1)[0] == 0.0
    exact, flag = rip_constant(d, 3)
    bound, bflag = rip_constant(d, 3, "gershgorin")
    assert flag and not bflag and exact <= bound + 1e-15
    # brute force over subsets with dense eigenvalues
    brute = max(np.max(np.abs(np.linalg.eigvalsh(d[:, c].T @ d[:, c]) - 1))
                for c in map(list, itertools.combinations(range(8), 3)))
    assert exact == pytest.approx(brute, rel=1e-12)
    with pytest.raises(EnumerationCapError):
        rip_constant(random_dictionary(10, 30, rng).matrix, 5, cap=100)


def test_norm_stats(rng):
    a, b = norm_stats(np.eye(4))
    assert a == 0.0 and b == pytest.approx(1.0)
    dup = np.hstack([np.eye(2), np.eye(2)])
    a, b = norm_stats(dup)
    assert a == pytest.approx(2.0) and b == pytest.approx(math.sqrt(2))
    for _ in range(20):
        m, p = 3, 7
        a, _ = norm_stats(random_dictionary(m, p, rng).matrix)
        assert a >= math.sqrt(p * (p - m) / m) - 1e-12


def test_coherence_profile(rng):
    prof = coherence_profile(random_dictionary(5, 7, rng).matrix, 3)
    assert prof.delta_is_exact and set(prof.mu_s) == {1, 2, 3}


def test_sphere_perturbation_geometry(rng):
    d0 = random_dictionary(4, 6, rng).matrix
    np.testing.assert_allclose(sphere_perturbation(d0, 0.0, rng).matrix, d0, atol=1e-15)
    for _ in range(1000):
        eps = float(rng.uniform(0.0, 2 * math.sqrt(6)))
        d, theta, _ = sphere_perturbation(d0, eps, rng, return_angles=True)
        d = d.matrix
        chords = np.linalg.norm(d - d0, axis=0)
        np.testing.assert_allclose(chords, 2 * np.sin(theta / 2), atol=1e-12)
        dist = np.linalg.norm(d - d0)
        assert dist == pytest.approx(eps, abs=1e-9)
        assert 2 / math.pi * np.linalg.norm(theta) <= dist + 1e-12
        assert dist <= np.linalg.norm(theta) + 1e-12
    with pytest.raises(ValueError):
        sphere_perturbation(d0, 2 * math.sqrt(6) + 0.1, rng)


def test_ks_mu_s_selectors(rng):
    f = [near_orthonormal_dictionary(4, 4, 0.1, rng).matrix for _ in range(2)]
    val, exact = ks_mu_s(f, (1, 1))
    assert exact and val == pytest.approx(worst_case_coherence(kron(f)))
    val, exact = ks_mu_s(f, (2, 1))
    assert exact and val == pytest.approx(cumulative_coherence(kron(f), 2))
    val, exact = ks_mu_s(f, (2, 1), dense_cap=4)
    assert not exact and val == pytest.approx(ks_cumulative_coherence_bound(f, (2, 1)))

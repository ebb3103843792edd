import math

import numpy as np
import pytest

from ksdl.dictionary import random_dictionary
from ksdl.generative import (
    GenerativeModel,
    ObservationBatch,
    SeparableSupport,
    batched_kron_apply,
    flat_index,
    make_rng,
    sample_coefficients,
    sample_noise,
    sample_support,
    snr,
    synthesize,
)
from ksdl.tensor import kron


def test_flat_index_is_lexicographic():
    # J_1 = {2}, J_2 = {1} with p = (2, 3) in 1-based terms
    assert flat_index(([1], [0]), (2, 3)).tolist() == [3]
    sup = SeparableSupport((np.array([0, 1]), np.array([2])), (2, 3))
    assert sup.flat.tolist() == [2, 5]
    assert SeparableSupport.from_flat([2, 5], (2, 3)) == sup
    with pytest.raises(ValueError):
        SeparableSupport.from_flat([0, 4], (2, 3))


def test_support_validation():
    with pytest.raises(IndexError):
        SeparableSupport((np.array([3]),), (3,))
    with pytest.raises(ValueError):
        SeparableSupport((np.array([1, 1]),), (3,))


def test_full_support(rng):
    sup = sample_support((2, 3), (2, 3), rng)
    assert sup.flat.tolist() == list(range(6))
    with pytest.raises(ValueError):
        sample_support((2,), (3,), rng)


def test_support_uniformity():
    rng = make_rng(5)
    n = 100_000
    counts = np.zeros(4)
    for _ in range(n):
        counts[sample_support((2, 2), (1, 1), rng).flat[0]] += 1
    sd = math.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(counts - n / 4) <= 3 * sd)


def test_model_statistics():
    m = GenerativeModel((2, 3), (4, 5), (1, 2), 1.0, 1.0, 0.0)
    assert m.kappa == pytest.approx(1.0)
    assert m.s == 2 and m.m == 6 and m.p == 20
    m2 = GenerativeModel((2,), (3,), (1,), 1.0, 2.0, 0.3)
    assert m2.Ex2 == pytest.approx(7 / 3)
    assert m2.Eabs == pytest.approx(1.5)
    assert m2.Ew2 == pytest.approx(0.03)
    with pytest.raises(ValueError):
        GenerativeModel((2,), (3,), (4,), 1.0, 2.0, 0.0)
    with pytest.raises(ValueError):
        GenerativeModel((2,), (3,), (1,), 0.0, 2.0, 0.0)


def test_coefficient_moments():
    model = GenerativeModel((4,), (6,), (3,), 0.5, 1.5, 0.0)
    rng = make_rng(11)
    sup = SeparableSupport((np.array([0, 2, 5]),), (6,))
    n = 100_000
    xs = np.array([sample_coefficients(sup, model, rng)[sup.flat] for _ in range(n)])
    second = xs.T @ xs / n
    se_diag = np.std(xs ** 2, axis=0) / math.sqrt(n)
    assert np.all(np.abs(np.diag(second) - model.Ex2) <= 3 * se_diag)
    off = second[~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off) <= 3 * model.Ex2 / math.sqrt(n))
    cross = xs.T @ np.sign(xs) / n
    se_abs = np.std(np.abs(xs), axis=0) / math.sqrt(n)
    assert np.all(np.abs(np.diag(cross) - model.Eabs) <= 3 * se_abs)
    assert np.all(np.abs(cross[~np.eye(3, dtype=bool)]) <= 3 * model.Ex2 / math.sqrt(n))


def test_noise():
    rng = make_rng(2)
    assert not np.any(sample_noise(GenerativeModel((3,), (3,), (1,), 1, 1, 0.0), rng))
    model = GenerativeModel((2, 2), (2, 2), (1, 1), 1, 1, 0.2)
    w = sample_noise(model, rng, 100_000)
    cov = w @ w.T / w.shape[1]
    se = np.std(w ** 2, axis=1) / math.sqrt(w.shape[1])
    assert np.all(np.abs(np.diag(cov) - model.Ew2) <= 3 * se)
    assert np.all(np.linalg.norm(w, axis=0) <= model.M_w)


def test_snr():
    # s E{x^2} / (m E{w^2}) with s = 4, E{x^2} = 1, m = 12, E{w^2} = 0.01
    a = math.sqrt(0.03)
    model = GenerativeModel((12,), (16,), (4,), 1.0, 1.0, a)
    assert snr(model) == pytest.approx(100 / 3)
    doubled = GenerativeModel((12,), (16,), (4,), 1.0, 1.0, 2 * a)
    assert snr(doubled) == pytest.approx(snr(model) / 4)
    sym = GenerativeModel((3,), (4,), (3,), 1.0, 1.0, math.sqrt(3))
    assert snr(sym) == pytest.approx(1.0)
    assert snr(GenerativeModel((3,), (4,), (1,), 1.0, 1.0, 0.0)) == math.inf


def _tiny(rng, noise=0.05):
    model = GenerativeModel((3, 2), (4, 3), (2, 1), 0.5, 1.5, noise)
    d0 = [random_dictionary(m, p, rng).matrix for m, p in zip(model.m_vec, model.p_vec)]
    return model, d0


def test_synthesize_matches_dense(rng):
    model, d0 = _tiny(rng)
    b = synthesize(d0, model, 50, 3)
    assert b.seed == 3
    np.testing.assert_allclose(b.Y, kron(d0) @ b.X + b.W, atol=1e-12)
    assert np.all(np.abs(b.values) >= 0.5) and np.all(np.abs(b.values) <= 1.5)
    b2 = synthesize(d0, model, 50, 3)
    assert b.Y.tobytes() == b2.Y.tobytes()


def test_synthesize_noiseless_in_span(rng):
    model, d0 = _tiny(rng, noise=0.0)
    b = synthesize(d0, model, 20, 1)
    dense = kron(d0)
    for n, sup in enumerate(b.supports):
        cols = dense[:, sup.flat]
        coef, *_ = np.linalg.lstsq(cols, b.Y[:, n], rcond=None)
        np.testing.assert_allclose(cols @ coef, b.Y[:, n], atol=1e-12)


def test_synthesize_dimension_check(rng):
    model, d0 = _tiny(rng)
    with pytest.raises(ValueError):
        synthesize(d0[:1], model, 5, 0)
    with pytest.raises(ValueError):
        synthesize([d0[1], d0[0]], model, 5, 0)


def test_batched_kron_apply(rng):
    mats = [rng.standard_normal((5, 2, 3)), rng.standard_normal((5, 3, 2))]
    v = rng.standard_normal((5, 6))
    out = batched_kron_apply(mats, v)
    for n in range(5):
        np.testing.assert_allclose(out[n], np.kron(mats[0][n], mats[1][n]) @ v[n], atol=1e-12)


def test_batch_roundtrip(rng, tmp_path):
    model, d0 = _tiny(rng)
    b = synthesize(d0, model, 7, 9)
    b.write(str(tmp_path), "ksdl test")
    assert (tmp_path / "Y.csv").read_text().startswith("# ksdl test\n")
    r = ObservationBatch.read(str(tmp_path))
    np.testing.assert_array_equal(r.Y, b.Y)
    np.testing.assert_array_equal(r.values, b.values)
    np.testing.assert_array_equal(r.W, b.W)
    for a, c in zip(r.support_idx, b.support_idx):
        np.testing.assert_array_equal(a, c)
    assert r.model == b.model and r.seed == 9

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ksdl.generative import SeparableSupport
from ksdl.tensor import (
    RankDeficientError,
    kron,
    kron_diff_decomposition,
    kron_factorized_operators,
    kron_submatrix,
    ks_adjoint,
    ks_apply,
    ks_apply_batch,
    mode_operators,
    mode_product,
    refold,
    unfold,
    unvec,
    vec,
)

shapes = st.lists(st.integers(1, 4), min_size=1, max_size=4).map(tuple)


def test_unfold_order2_first_mode_is_matrix_itself():
    t = np.array([[1, 2], [3, 4]])
    np.testing.assert_array_equal(unfold(t, 0), t)
    np.testing.assert_array_equal(unfold(t, 1), t.T)


def test_unfold_elementwise_definition():
    t = np.arange(1, 9).reshape(2, 2, 2)
    for k in range(3):
        u = unfold(t, k)
        rest = [i for i in range(3) if i != k]
        for idx in itertools.product(range(2), repeat=3):
            # remaining indices ordered with the lowest mode varying fastest
            col = idx[rest[0]] + 2 * idx[rest[1]]
            assert u[idx[k], col] == t[idx]


@given(shapes.flatmap(lambda s: st.tuples(st.just(s), st.integers(0, len(s) - 1))))
def test_refold_roundtrip(args):
    shape, k = args
    t = np.arange(int(np.prod(shape)), dtype=float).reshape(shape)
    np.testing.assert_array_equal(refold(unfold(t, k), k, shape), t)


def test_unfold_bad_mode():
    with pytest.raises(ValueError):
        unfold(np.zeros((2, 2)), 2)


def test_vec_unvec_roundtrip(rng):
    t = rng.standard_normal((2, 3, 4))
    np.testing.assert_array_equal(unvec(vec(t), t.shape), t)
    np.testing.assert_array_equal(vec(t), vec(unfold(t, 0)))


def test_mode_product_identity_and_oracle(rng):
    t = rng.standard_normal((2, 3, 2))
    np.testing.assert_allclose(mode_product(t, np.eye(3), 1), t)
    a = rng.standard_normal((4, 2))
    out = mode_product(t, a, 2)
    np.testing.assert_allclose(out, refold(a @ unfold(t, 2), 2, (2, 3, 4)), rtol=1e-12)
    assert np.linalg.matrix_rank(unfold(mode_product(t, rng.standard_normal((1, 3)), 1), 1)) <= 1
    with pytest.raises(ValueError):
        mode_product(t, np.eye(2), 1)


def test_kron_basics(rng):
    np.testing.assert_array_equal(kron([np.eye(2), np.eye(3)]), np.eye(6))
    with pytest.raises(ValueError):
        kron([])
    x, y = rng.standard_normal((3, 4)), rng.standard_normal((2, 5))
    assert np.isclose(np.linalg.norm(kron([x, y])), np.linalg.norm(x) * np.linalg.norm(y),
                      rtol=1e-12)


def test_kron_vec_identity(rng):
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((2, 5))
    x = rng.standard_normal((5, 4))
    np.testing.assert_allclose(np.kron(a, b) @ vec(x), vec(b @ x @ a.T), rtol=1e-12)


@given(st.lists(st.tuples(st.integers(1, 4), st.integers(1, 4)), min_size=1, max_size=3),
       st.integers(0, 2 ** 32 - 1))
def test_ks_apply_matches_dense(dims, seed):
    r = np.random.default_rng(seed)
    factors = [r.standard_normal(d) for d in dims]
    v = r.standard_normal(int(np.prod([d[1] for d in dims])))
    dense = kron(factors)
    out = ks_apply(factors, v)
    np.testing.assert_allclose(out, dense @ v, rtol=1e-10, atol=1e-12)
    u = r.standard_normal(dense.shape[0])
    np.testing.assert_allclose(ks_adjoint(factors, u), dense.T @ u, rtol=1e-10, atol=1e-12)
    block = r.standard_normal((v.size, 3))
    np.testing.assert_allclose(ks_apply_batch(factors, block), dense @ block, rtol=1e-10, atol=1e-12)


def test_ks_apply_trivial_cases(rng):
    v = rng.standard_normal(6)
    np.testing.assert_array_equal(ks_apply([np.eye(2), np.eye(3)], v), v)
    a = rng.standard_normal((4, 6))
    np.testing.assert_allclose(ks_apply([a], v), a @ v)
    with pytest.raises(ValueError):
        ks_apply([a], rng.standard_normal(5))


def test_kron_submatrix_identity_and_full():
    col = kron_submatrix([np.eye(2), np.eye(3)], ([1], [2]))
    np.testing.assert_array_equal(col[:, 0], np.eye(6)[:, 5])
    f = [np.arange(6.0).reshape(2, 3), np.arange(4.0).reshape(2, 2)]
    np.testing.assert_array_equal(kron_submatrix(f, ([0, 1, 2], [0, 1])), kron(f))
    with pytest.raises(IndexError):
        kron_submatrix(f, ([3], [0]))


def test_kron_submatrix_enumerated(rng):
    f = [rng.standard_normal((2, 3)), rng.standard_normal((3, 2))]
    dense = kron(f)
    for j0 in itertools.combinations(range(3), 2):
        for j1 in itertools.combinations(range(2), 1):
            sup = SeparableSupport((np.array(j0), np.array(j1)), (3, 2))
            np.testing.assert_allclose(kron_submatrix(f, sup), dense[:, sup.flat])


def test_diff_decomposition(rng):
    d = [rng.standard_normal((2, 3)) for _ in range(2)]
    for t in kron_diff_decomposition(d, d):
        assert not np.any(kron(t))
    d0 = [rng.standard_normal((2, 3)) for _ in range(2)]
    # (D1 - D0_1) x D0_2 + D1 x (D2 - D0_2)
    manual = np.kron(d[0] - d0[0], d0[1]) + np.kron(d[0], d[1] - d0[1])
    np.testing.assert_allclose(manual, kron(d) - kron(d0), atol=1e-12)
    d3 = [rng.standard_normal((2, 2)) for _ in range(3)]
    d30 = [rng.standard_normal((2, 2)) for _ in range(3)]
    for conv in ("forward", "reverse"):
        total = sum(kron(t) for t in kron_diff_decomposition(d3, d30, conv))
        np.testing.assert_allclose(total, kron(d3) - kron(d30), atol=1e-12)
    with pytest.raises(ValueError):
        kron_diff_decomposition(d, [np.zeros((2, 2)), np.zeros((2, 3))])


def test_factorized_operators(rng):
    q = np.linalg.qr(rng.standard_normal((4, 4)))[0]
    ops = kron_factorized_operators([q, q], ([0, 2], [1]))
    np.testing.assert_allclose(ops.projector[0], q[:, [0, 2]] @ q[:, [0, 2]].T, atol=1e-12)
    np.testing.assert_allclose(ops.gram_inv[0], np.eye(2), atol=1e-12)
    f = [rng.standard_normal((4, 5)), rng.standard_normal((3, 4))]
    sup = ([1, 3], [0, 2])
    dj = kron_submatrix(f, sup)
    ops = kron_factorized_operators(f, sup)
    p = kron(ops.projector)
    np.testing.assert_allclose(p, dj @ np.linalg.pinv(dj), atol=1e-10)
    np.testing.assert_allclose(p @ p, p, atol=1e-10)
    np.testing.assert_allclose(p, p.T, atol=1e-10)


def test_rank_deficient_reports_mode():
    bad = np.array([[1.0, 1.0], [0.0, 0.0]])
    with pytest.raises(RankDeficientError) as exc:
        kron_factorized_operators([np.eye(2), bad], ([0], [0, 1]))
    assert exc.value.mode == 1
    with pytest.raises(RankDeficientError):
        mode_operators(np.ones((2, 3)))

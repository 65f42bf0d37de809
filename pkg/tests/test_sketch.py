import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import kr_column
from srcmpo.mps import random_mps, to_dense
from srcmpo.sketch import ensure_width, gaussian_matrix, grow, khatri_rao, new_sketch, qb_approx


def test_khatri_rao_columns_are_kronecker_products():
    sk = new_sketch(4, 3, 5, seed=0)
    m = khatri_rao(sk.omegas)
    assert m.shape == (81, 5)
    for j in range(5):
        assert np.allclose(m[:, j], kr_column(sk.omegas, j))


def test_entries_are_standard_normal():
    sk = new_sketch(2, 1000, 500, seed=1)
    x = np.concatenate([om.ravel() for om in sk.omegas])
    assert x.size == 10**6 and np.all(x.imag == 0)
    assert abs(x.real.mean()) <= 4 / np.sqrt(x.size)
    assert abs(x.real.var() - 1) <= 0.01


def test_complex_entries_have_unit_variance():
    x = new_sketch(1, 1000, 200, seed=2, dist="complex").omegas[0].ravel()
    assert abs(np.mean(np.abs(x) ** 2) - 1) <= 0.02 and np.abs(x.imag).max() > 0


def test_same_seed_identical():
    a, b = new_sketch(3, 2, 4, seed=5), new_sketch(3, 2, 4, seed=5)
    assert all(np.array_equal(x, y) for x, y in zip(a.omegas, b.omegas))


def test_per_factor_dims():
    sk = new_sketch(3, [2, 3, 4], 2, seed=0)
    assert [om.shape for om in sk.omegas] == [(2, 2), (3, 2), (4, 2)]


def test_grow_prefix_stable():
    sk = new_sketch(3, 2, 4, seed=6)
    big = grow(sk, 3)
    assert big.p == 7
    assert all(np.array_equal(b[:, :4], a) for a, b in zip(sk.omegas, big.omegas))


def test_grow_order_independent():
    sk = new_sketch(3, 2, 1, seed=7)
    a = grow(grow(sk, 2), 3)
    b = grow(sk, 5)
    assert all(np.array_equal(x, y) for x, y in zip(a.omegas, b.omegas))
    c = new_sketch(3, 2, 6, seed=7)
    assert all(np.array_equal(x, y) for x, y in zip(a.omegas, c.omegas))


def test_grow_rejects_nonpositive_and_ensure_width():
    sk = new_sketch(2, 2, 2, seed=0)
    with pytest.raises(ValueError):
        grow(sk, 0)
    assert ensure_width(sk, 1) is sk and ensure_width(sk, 5).p == 5


def test_qb_exact_for_low_rank_gaussian():
    rng = np.random.default_rng(8)
    a = rng.standard_normal((8, 3)) @ rng.standard_normal((3, 8))
    q, b = qb_approx(a, rng.standard_normal((8, 3)))
    assert np.linalg.norm(a - q @ b) <= 1e-10 * np.linalg.norm(a)
    assert np.allclose(q.conj().T @ q, np.eye(3), atol=1e-12)


def test_qb_exact_for_chain_unfolding_with_khatri_rao():
    for seed in range(20):
        psi = random_mps(6, 2, 4, seed=seed)
        a = to_dense(psi).reshape(8, 8)  # rank <= 4 at the middle cut
        omega = khatri_rao(new_sketch(3, 2, 4, seed=seed).omegas)
        q, b = qb_approx(a, omega)
        assert np.linalg.norm(a - q @ b) <= 1e-10 * np.linalg.norm(a)


def test_qb_zero_matrix_gives_rank_zero():
    q, b = qb_approx(np.zeros((4, 3)), np.ones((3, 2)))
    assert q.shape == (4, 0) and b.shape == (0, 3)


def test_qb_rejects_wrong_sketch_rows():
    with pytest.raises(ValueError):
        qb_approx(np.ones((4, 3)), np.ones((4, 2)))


def test_qb_near_rank_one_monte_carlo():
    # singular values (1, 1e-8): one column cannot beat the optimal error
    # 1e-16, two columns capture both directions
    rng = np.random.default_rng(9)
    u, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    v, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    a = (u[:, :2] * [1.0, 1e-8]) @ v[:, :2].T
    errs = []
    for seed in range(200):
        q, b = qb_approx(a, np.random.default_rng(seed).standard_normal((6, 1)))
        errs.append(np.linalg.norm(a - q @ b) ** 2)
    assert np.mean(errs) >= 1e-16 * (1 - 1e-6)
    q, b = qb_approx(a, rng.standard_normal((6, 2)))
    assert np.linalg.norm(a - q @ b) ** 2 <= 2e-16


@given(st.integers(0, 2**32 - 1))
def test_qb_unitary_covariance(seed):
    rng = np.random.default_rng(seed)
    a = gaussian_matrix(7, 5, rng, "complex")
    omega = gaussian_matrix(5, 3, rng, "real")
    u, _ = np.linalg.qr(gaussian_matrix(7, 7, rng, "complex"))
    q0, b0 = qb_approx(a, omega)
    q1, b1 = qb_approx(u @ a, omega)
    assert np.allclose(u.conj().T @ (q1 @ b1), q0 @ b0, atol=1e-12)
    assert np.allclose(q1.conj().T @ q1, np.eye(3), atol=1e-12)


def test_khatri_rao_cap():
    with pytest.raises(MemoryError):
        khatri_rao(new_sketch(30, 2, 1, seed=0).omegas)

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import inverse_adjoint as inv_adj_oracle
from srcmpo.estimators import (
    RankDeficientError,
    estimate,
    g_append,
    inverse_adjoint,
    is_rank_deficient,
    loo_error,
    loo_from_g,
    norm_estimate,
    qr_append,
)
from srcmpo.sketch import qb_approx
from srcmpo.tensor import qr_thin


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def upper(rng, k):
    t = np.triu(crandn(rng, k, k))
    t[np.diag_indices(k)] = np.abs(np.diag(t)) + k
    return t


# leave-one-out


def test_loo_identity_is_one():
    assert loo_error(np.eye(4)) == pytest.approx(1.0)


def test_loo_formula_matches_direct_evaluation():
    r = upper(np.random.default_rng(0), 5)
    g = inv_adj_oracle(r)
    want = np.sqrt(np.mean(1 / np.sum(np.abs(g) ** 2, axis=0)))
    assert loo_error(r) == pytest.approx(want, rel=1e-12)


def test_loo_is_leave_one_out_residual():
    # 1/||g_i|| is the distance of column i of Y from the span of the others
    rng = np.random.default_rng(1)
    y = crandn(rng, 9, 4)
    f = qr_thin(y)
    res = []
    for i in range(4):
        others = np.delete(y, i, axis=1)
        q, _ = np.linalg.qr(others)
        res.append(np.linalg.norm(y[:, i] - q @ (q.conj().T @ y[:, i])) ** 2)
    assert loo_error(f.r) ** 2 == pytest.approx(np.mean(res), rel=1e-10)


def test_loo_rank_one_input_is_zero():
    rng = np.random.default_rng(2)
    a = np.outer(crandn(rng, 6), crandn(rng, 6))
    r = qr_thin(a @ rng.standard_normal((6, 2))).r
    est = estimate(r)
    assert est.rank_deficient and est.err_hat == 0.0 and loo_error(r) <= 1e-10


def test_rank_deficiency_floor():
    assert is_rank_deficient(np.diag([1.0, 1e-14]))
    assert not is_rank_deficient(np.diag([1.0, 1e-12]))
    assert is_rank_deficient(np.ones((2, 3)))


def test_loo_unbiased_small_monte_carlo():
    rng = np.random.default_rng(3)
    u, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    v, _ = np.linalg.qr(rng.standard_normal((12, 12)))
    a = (u * 2.0 ** -np.arange(12)) @ v.T
    trials = 1500
    est = [loo_error(qr_thin(a @ np.random.default_rng([s, 0]).standard_normal((12, 4))).r) ** 2 for s in range(trials)]
    tru = []
    for s in range(trials):
        q, b = qb_approx(a, np.random.default_rng([s, 1]).standard_normal((12, 3)))
        tru.append(np.linalg.norm(a - q @ b) ** 2)
    est, tru = np.array(est), np.array(tru)
    se = np.sqrt(est.var(ddof=1) / trials + tru.var(ddof=1) / trials)
    assert abs(est.mean() - tru.mean()) <= 3 * se


def test_loo_conservative_on_average():
    rng = np.random.default_rng(4)
    u, _ = np.linalg.qr(rng.standard_normal((20, 20)))
    v, _ = np.linalg.qr(rng.standard_normal((20, 20)))
    a = (u * 2.0 ** -np.arange(20)) @ v.T
    est, real = [], []
    for s in range(2000):
        omega = np.random.default_rng(s).standard_normal((20, 5))
        q, b = qb_approx(a, omega)
        est.append(loo_error(qr_thin(a @ omega).r) ** 2)
        real.append(np.linalg.norm(a - q @ b) ** 2)
    est, real = np.array(est), np.array(real)
    se = np.sqrt((est.var(ddof=1) + real.var(ddof=1)) / 2000)
    assert est.mean() >= real.mean() - 3 * se


# norm estimate


def test_norm_estimate_zero_and_equal_inputs():
    assert norm_estimate(np.zeros((4, 3))) == 0.0
    y = crandn(np.random.default_rng(5), 10, 4)
    assert norm_estimate(y, 4) == pytest.approx(norm_estimate(qr_thin(y).r, 4), rel=1e-12)
    with pytest.raises(ValueError):
        norm_estimate(y, 0)


def test_norm_estimate_unbiased_and_variance_decays():
    rng = np.random.default_rng(6)
    b = crandn(rng, 16, 16)
    target = np.linalg.norm(b) ** 2

    def draws(p, tag):
        return np.array([norm_estimate(b @ np.random.default_rng([s, tag]).standard_normal((16, p)), p) ** 2 for s in range(2000)])

    v8, v32 = draws(8, 0), draws(32, 1)
    assert abs(v8.mean() - target) <= 3 * v8.std(ddof=1) / np.sqrt(2000)
    assert v32.var(ddof=1) <= (8 / 32 + 0.1) * v8.var(ddof=1)


# QR updating


def test_qr_append_to_empty_is_plain_qr():
    y = crandn(np.random.default_rng(7), 6, 3)
    empty = qr_thin(np.zeros((6, 0)))
    f = qr_append(empty, y)
    g = qr_thin(y)
    assert np.allclose(f.q, g.q) and np.allclose(f.r, g.r)


def test_qr_append_matches_from_scratch():
    rng = np.random.default_rng(8)
    y, z = crandn(rng, 12, 3), crandn(rng, 12, 2)
    f = qr_append(qr_thin(y), z)
    both = np.hstack([y, z])
    assert np.linalg.norm(f.q @ f.r - both) <= 1e-12 * np.linalg.norm(both)
    assert np.allclose(f.q.conj().T @ f.q, np.eye(5), atol=1e-12)
    scratch = qr_thin(both)
    assert np.allclose(f.r, scratch.r, atol=1e-12)
    assert np.array_equal(f.q[:, :3], qr_thin(y).q)


def test_qr_append_column_in_span():
    rng = np.random.default_rng(9)
    y = crandn(rng, 8, 3)
    col = y @ crandn(rng, 3, 1)
    f = qr_append(qr_thin(y), col)
    assert abs(f.r[3, 3]) <= 1e-10 * np.linalg.norm(col)


def test_qr_append_fills_all_rows():
    rng = np.random.default_rng(10)
    y, z = crandn(rng, 4, 2), crandn(rng, 4, 3)
    f = qr_append(qr_thin(y), z)
    assert f.q.shape == (4, 4) and f.r.shape == (4, 5)
    assert np.allclose(f.q @ f.r, np.hstack([y, z]))


@given(st.integers(0, 2**32 - 1), st.lists(st.integers(1, 3), min_size=1, max_size=4))
def test_qr_g_append_chain(seed, blocks):
    rng = np.random.default_rng(seed)
    p0 = 2
    m = p0 + sum(blocks) + 3
    y = crandn(rng, m, p0)
    f = qr_thin(y)
    g = inverse_adjoint(f.r)
    for delta in blocks:
        z = crandn(rng, m, delta)
        p = y.shape[1]
        y = np.hstack([y, z])
        f = qr_append(f, z)
        g = g_append(g, f.r[:p, p:], f.r[p:, p:])
    assert abs(np.linalg.norm(f.r) - np.linalg.norm(y)) <= 1e-12 * np.linalg.norm(y)
    assert loo_from_g(g) == pytest.approx(loo_error(qr_thin(y).r), rel=1e-10)


# G updating


def test_g_append_block_identity():
    g = g_append(np.eye(3), np.zeros((3, 2)), np.eye(2))
    assert np.allclose(g, np.eye(5))


def test_g_append_matches_direct_inverse():
    rng = np.random.default_rng(11)
    r, r2 = upper(rng, 4), upper(rng, 2)
    r1 = crandn(rng, 4, 2)
    g0 = inverse_adjoint(r)
    g = g_append(g0, r1, r2)
    full = np.block([[r, r1], [np.zeros((2, 4)), r2]])
    assert np.abs(g - inv_adj_oracle(full)).max() <= 1e-11 * np.abs(g).max()
    assert np.array_equal(g[:4, :4], g0)
    assert np.allclose(g[:4, 4:], 0)


def test_g_append_singular_block_flags():
    with pytest.raises(RankDeficientError):
        g_append(np.eye(2), np.ones((2, 1)), np.array([[1e-20]]), scale=1.0)

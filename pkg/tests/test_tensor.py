import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import naive_contract
from srcmpo.policy import FixedBond, Tolerance
from srcmpo.tensor import (
    DimensionError,
    contract,
    count_flops,
    eigh_descending,
    fold,
    qr_thin,
    select_rank,
    svd_truncated,
    unfold,
)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# contract


def test_contract_identity_matrix_vector():
    out = contract(np.eye(2), np.array([3, 4j]), [(1, 0)])
    assert np.allclose(out, [3, 4j])


def test_contract_delta_composition():
    assert np.allclose(contract(np.eye(2), np.eye(2), [(1, 0)]), np.eye(2))


def test_contract_matches_nested_loops():
    rng = np.random.default_rng(0)
    a, b = crandn(rng, 2, 3, 2), crandn(rng, 3, 2)
    out = contract(a, b, [(1, 0)])
    assert out.shape == (2, 2, 2)
    assert np.allclose(out, naive_contract(a, b, [(1, 0)]), atol=1e-13)


def test_contract_multi_axis_matches_nested_loops():
    rng = np.random.default_rng(1)
    a, b = crandn(rng, 2, 3, 4), crandn(rng, 4, 2, 3)
    axes = [(2, 0), (1, 2)]
    assert np.allclose(contract(a, b, axes), naive_contract(a, b, axes), atol=1e-12)


def test_contract_extent_mismatch_names_both_axes():
    with pytest.raises(DimensionError, match="axis 1 of a.*axis 0 of b"):
        contract(np.zeros((2, 3)), np.zeros((4, 2)), [(1, 0)])


@given(st.integers(0, 2**32 - 1), st.floats(-3, 3))
def test_contract_bilinear(seed, alpha):
    rng = np.random.default_rng(seed)
    a, b, c = crandn(rng, 3, 4), crandn(rng, 3, 4), crandn(rng, 4, 2)
    lhs = contract(alpha * a + b, c, [(1, 0)])
    rhs = alpha * contract(a, c, [(1, 0)]) + contract(b, c, [(1, 0)])
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(np.linalg.norm(rhs), 1.0)


def test_flop_counter_charges_and_nests():
    a, b = np.ones((3, 4)), np.ones((4, 5))
    with count_flops() as outer:
        with count_flops() as inner:
            contract(a, b, [(1, 0)])
        contract(a, b, [(1, 0)])
    assert inner.total == 60
    assert outer.total == 120


# unfold


def test_unfold_matrix_is_identity_operation():
    m = np.arange(6).reshape(2, 3)
    assert np.array_equal(unfold(m, [0], [1]), m)


def test_unfold_rows_from_trailing_axes():
    rng = np.random.default_rng(2)
    t = crandn(rng, 2, 3, 4, 5)
    m = unfold(t, [2, 3], [0, 1])
    assert m.shape == (20, 6)
    assert m[7, 4] == t[1, 1, 1, 2]  # row 7 = (1, 2), column 4 = (1, 1)


def test_fold_unfold_round_trip_bitwise():
    t = np.random.default_rng(3).standard_normal((2, 2, 2))
    m = unfold(t, [2, 0], [1])
    assert np.array_equal(fold(m, t.shape, [2, 0], [1]), t)


@pytest.mark.parametrize("rows, cols", [([0, 0], [1]), ([0], [2]), ([0], [])])
def test_unfold_rejects_bad_partition(rows, cols):
    with pytest.raises(ValueError):
        unfold(np.zeros((2, 3)), rows, cols)


# qr


def test_qr_of_isometry_is_trivial():
    q0, _ = np.linalg.qr(np.random.default_rng(4).standard_normal((5, 3)))
    # the sign convention forces q = input when input already has r = I
    q0 = q0 * np.sign(np.diag(np.linalg.qr(q0)[1]))
    f = qr_thin(q0)
    assert np.allclose(f.q, q0, atol=1e-12)
    assert np.allclose(f.r, np.eye(3), atol=1e-12)


def test_qr_complex_is_isometric():
    f = qr_thin(crandn(np.random.default_rng(5), 4, 2))
    assert np.allclose(f.q.conj().T @ f.q, np.eye(2), atol=1e-12)


def test_qr_rank_one_has_zero_trailing_diagonal():
    m = np.outer([1.0, 2.0, 3.0], [1.0, -2.0])
    assert abs(qr_thin(m).r[1, 1]) <= 1e-12


def test_qr_diagonal_is_real_nonnegative():
    f = qr_thin(crandn(np.random.default_rng(6), 6, 4))
    d = np.diag(f.r)
    assert np.all(d.real >= 0) and np.allclose(d.imag, 0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(0, 6))
def test_qr_reconstruction(seed, n, extra):
    m = crandn(np.random.default_rng(seed), n + extra, n)
    f = qr_thin(m)
    assert np.linalg.norm(m - f.q @ f.r) <= 1e-12 * np.linalg.norm(m)
    assert np.allclose(f.q.conj().T @ f.q, np.eye(n), atol=1e-12)
    assert np.allclose(np.tril(f.r, -1), 0)


# svd


def test_svd_rank_one_recovered():
    m = np.outer(np.arange(1, 5), np.arange(1, 4)).astype(complex)
    f = svd_truncated(m, max_rank=3)
    assert f.rank == 1
    assert f.discarded_weight <= 1e-24 * np.linalg.norm(m) ** 2


def test_svd_diag_max_rank():
    f = svd_truncated(np.diag([3.0, 2.0, 1.0]), max_rank=2)
    assert np.allclose(f.s, [3, 2])
    assert np.isclose(f.discarded_weight, 1.0)


def _exhaustive_rank(s, tol):
    # smallest k whose tail passes; scanned from k = 0 upwards
    total = np.sum(s**2)
    for k in range(len(s) + 1):
        if np.sum(s[k:] ** 2) <= tol**2 * total:
            return k


@pytest.mark.parametrize("tol", [0.0001, 0.2, 0.25, 0.267, 0.3, 0.4, 0.6, 0.9, 1.0])
def test_svd_tolerance_matches_exhaustive_scan(tol):
    s = np.array([3.0, 2.0, 1.0])
    f = svd_truncated(np.diag(s), tol=tol)
    assert f.rank == _exhaustive_rank(s, tol)


def test_svd_tolerance_diag_example():
    # 1 <= 0.16 * 14 holds, so the last value is dropped at tol = 0.4
    assert svd_truncated(np.diag([3.0, 2.0, 1.0]), tol=0.4).rank == 2
    assert svd_truncated(np.diag([3.0, 2.0, 1.0]), tol=0.2).rank == 3


def test_svd_accepts_policy_objects():
    m = np.diag([3.0, 2.0, 1.0])
    assert svd_truncated(m, FixedBond(1)).rank == 1
    assert svd_truncated(m, Tolerance(0.4)).rank == 2


def test_svd_zero_matrix_with_tolerance_is_rank_zero():
    assert svd_truncated(np.zeros((3, 3)), tol=0.1).rank == 0


def test_svd_ties_cut_by_index():
    m = np.diag([2.0, 1.0, 1.0, 1.0])
    a = svd_truncated(m, max_rank=2)
    b = svd_truncated(m, max_rank=2)
    assert a.rank == 2 and np.array_equal(a.u, b.u) and np.array_equal(a.s, b.s)


def test_select_rank_ignores_numerical_zeros_in_rank_mode():
    assert select_rank(np.array([1.0, 1e-40]), 1.0, max_rank=2) == 1


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6))
def test_svd_weight_identity(seed, m, n, k):
    a = crandn(np.random.default_rng(seed), m, n)
    f = svd_truncated(a, max_rank=k)
    total = np.linalg.norm(a) ** 2
    assert abs(total - np.sum(f.s**2) - f.discarded_weight) <= 1e-10 * total
    assert np.all(np.diff(f.s) <= 0) and np.all(f.s >= 0)
    approx = (f.u * f.s) @ f.v.conj().T
    assert abs(np.linalg.norm(a - approx) ** 2 - f.discarded_weight) <= 1e-10 * total


def test_eigh_descending_clamps():
    w, v = eigh_descending(np.diag([-1e-17, 2.0, 1.0]).astype(complex))
    assert np.allclose(w, [2, 1, 0]) and np.all(w >= 0)
    assert np.allclose(np.abs(v[:, 0]), [0, 1, 0])

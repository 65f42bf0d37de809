"""Dense complex tensor primitives: contraction, unfolding, thin QR, truncated SVD.

Tensors are plain ``numpy.ndarray`` objects of dtype ``complex128`` in
row-major order.  Every contraction and factorization routed through this
module is charged to the active :class:`FlopCounter` (if any), which is how the
benchmarks measure operation counts independently of wall time.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import Counter
from dataclasses import dataclass, field
from math import prod

import numpy as np
import scipy.linalg
from scipy.linalg import lapack

DTYPE = np.complex128


class DimensionError(ValueError):
    """Raised when paired axes of a contraction have different extents."""


# ---------------------------------------------------------------------------
# flop accounting


class FlopCounter:
    """Accumulates multiply-add counts by category."""

    def __init__(self):
        self.by_kind = Counter()

    @property
    def total(self) -> int:
        return sum(self.by_kind.values())

    def add(self, n, kind="contract"):
        self.by_kind[kind] += int(n)

    def __repr__(self):
        return f"FlopCounter(total={self.total}, by_kind={dict(self.by_kind)})"


_active_counters: contextvars.ContextVar[tuple] = contextvars.ContextVar(
    "srcmpo_flop_counters", default=()
)


@contextlib.contextmanager
def count_flops():
    """Context manager yielding a :class:`FlopCounter` charged by all
    contractions and factorizations executed inside the block.  Counters nest:
    an inner block also charges every enclosing counter."""
    counter = FlopCounter()
    token = _active_counters.set(_active_counters.get() + (counter,))
    try:
        yield counter
    finally:
        _active_counters.reset(token)


def add_flops(n, kind="contract"):
    for c in _active_counters.get():
        c.add(n, kind)


# ---------------------------------------------------------------------------
# contraction and reshaping


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a C-contiguous complex128 array."""
    return np.ascontiguousarray(x, dtype=DTYPE)


def contract(a, b, axes):
    """Contract ``a`` with ``b`` over ``axes``, a list of ``(axis_a, axis_b)``
    pairs.  The result carries the free axes of ``a`` followed by those of
    ``b``, each in their original order."""
    a = np.asarray(a)
    b = np.asarray(b)
    axes = list(axes)
    ia = [p[0] % a.ndim for p in axes]
    ib = [p[1] % b.ndim for p in axes]
    for i, j in zip(ia, ib):
        if a.shape[i] != b.shape[j]:
            raise DimensionError(
                f"axis {i} of a has extent {a.shape[i]} but axis {j} of b "
                f"has extent {b.shape[j]}"
            )
    paired = prod(a.shape[i] for i in ia)
    if paired:
        add_flops(a.size * b.size // paired)
    return np.tensordot(a, b, axes=(ia, ib))


def batched_matmul(a, b):
    """``a @ b`` over a leading batch axis, charged as multiply-adds."""
    batch, m, k = a.shape
    n = b.shape[-1]
    add_flops(batch * m * k * n)
    return np.matmul(a, b)


def unfold(t, row_axes, col_axes):
    """Matricize ``t`` with rows indexed by ``row_axes`` and columns by
    ``col_axes`` (both combined row-major)."""
    t = np.asarray(t)
    row_axes, col_axes = list(row_axes), list(col_axes)
    if sorted(row_axes + col_axes) != list(range(t.ndim)):
        raise ValueError(
            f"row_axes {row_axes} and col_axes {col_axes} must partition "
            f"the {t.ndim} axes"
        )
    rows = prod(t.shape[i] for i in row_axes)
    cols = prod(t.shape[i] for i in col_axes)
    return np.transpose(t, row_axes + col_axes).reshape(rows, cols)


def fold(m, shape, row_axes, col_axes):
    """Inverse of :func:`unfold`."""
    row_axes, col_axes = list(row_axes), list(col_axes)
    order = row_axes + col_axes
    t = np.asarray(m).reshape([shape[i] for i in order])
    return np.transpose(t, np.argsort(order))


# ---------------------------------------------------------------------------
# factorizations


@dataclass(frozen=True)
class ThinQr:
    """Thin QR factors with nonnegative real diagonal of ``r``.

    ``q`` is ``M x k`` with orthonormal columns and ``r`` is ``k x N`` upper
    trapezoidal, ``k = min(M, N)``.  The Householder reflectors that produced
    the factorization are kept so that columns can be appended later without
    refactoring (see :func:`srcmpo.estimators.qr_append`).
    """

    q: np.ndarray
    r: np.ndarray
    reflectors: np.ndarray | None = field(default=None, repr=False)
    tau: np.ndarray | None = field(default=None, repr=False)
    phase: np.ndarray | None = field(default=None, repr=False)


def _lapack_ok(info, name):
    if info != 0:
        raise np.linalg.LinAlgError(f"{name} failed with info={info}")


def householder_raw(a):
    """Raw Householder QR of ``a`` (LAPACK ``zgeqrf``)."""
    a = np.array(a, dtype=DTYPE, order="F")
    m, n = a.shape
    add_flops(m * n * min(m, n), "qr")
    if a.size == 0:
        return a, np.zeros(0, dtype=DTYPE)
    h, tau, _, info = lapack.zgeqrf(a)
    _lapack_ok(info, "zgeqrf")
    return h, tau


def apply_householder(h, tau, c, adjoint=False):
    """Apply the full unitary ``Q`` stored in reflectors ``(h, tau)`` (or its
    adjoint) to ``c`` from the left."""
    c = np.array(c, dtype=DTYPE, order="F")
    if tau.size == 0 or c.size == 0:
        return c
    add_flops(c.shape[0] * c.shape[1] * tau.size, "qr")
    out, _, info = lapack.zunmqr("L", "C" if adjoint else "N", h, tau, c, lwork=max(1, c.shape[1]) * 64)
    _lapack_ok(info, "zunmqr")
    return out


def _phase_of(diag):
    ph = np.ones(diag.shape, dtype=DTYPE)
    nz = diag != 0
    ph[nz] = diag[nz] / np.abs(diag[nz])
    return ph


def qr_thin(m) -> ThinQr:
    """Thin Householder QR ``m = q @ r`` with diag(r) real and nonnegative."""
    m = np.asarray(m)
    rows, cols = m.shape
    k = min(rows, cols)
    h, tau = householder_raw(m)
    if k == 0:
        return ThinQr(np.zeros((rows, 0), DTYPE), np.zeros((0, cols), DTYPE), h, tau, np.ones(0, DTYPE))
    r = np.triu(h[:k, :])
    q, _, info = lapack.zungqr(h[:, :k], tau[:k])
    _lapack_ok(info, "zungqr")
    add_flops(rows * k * k, "qr")
    ph = _phase_of(np.diag(r))
    q = np.ascontiguousarray(q * ph[None, :])
    r = np.ascontiguousarray(r * ph.conj()[:, None])
    return ThinQr(q, r, h, tau, ph)


@dataclass(frozen=True)
class TruncatedSvd:
    """``m ~= u @ diag(s) @ v.conj().T`` with ``discarded_weight`` the sum of
    the squared singular values that were dropped."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    discarded_weight: float

    @property
    def rank(self):
        return self.s.size


def _svd(m):
    add_flops(m.shape[0] * m.shape[1] * min(m.shape), "svd")
    try:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd", check_finite=False)


def select_rank(weights, total, max_rank=None, tol=None, atol=0.0, min_rank=0):
    """Number of leading entries of the non-increasing ``weights`` (squared
    singular values or eigenvalues) to keep.

    With a tolerance, keeps the fewest entries whose discarded tail is at most
    ``(atol + tol * sqrt(total))**2``.  With ``max_rank``, keeps at most that
    many and never keeps numerically-zero entries.  The cut is made by index,
    so equal values straddling it are resolved deterministically.
    """
    weights = np.asarray(weights, dtype=float)
    n = weights.size
    if n == 0:
        return 0
    if tol is None and max_rank is None:
        raise ValueError("need max_rank or tol")
    k = n
    if tol is not None or atol:
        budget = (atol + (tol or 0.0) * np.sqrt(max(total, 0.0))) ** 2
        # tail[i] = sum of weights[i:]
        tail = np.concatenate([np.cumsum(weights[::-1])[::-1], [0.0]])
        k = int(np.argmax(tail <= budget))
    if max_rank is not None:
        floor = weights[0] * (max(n, 1) * np.finfo(float).eps) ** 2
        numerical = int(np.count_nonzero(weights > floor))
        k = min(k, max_rank, numerical)
    return max(k, min(min_rank, n))


def svd_truncated(m, max_rank=None, tol=None, atol=0.0, min_rank=0) -> TruncatedSvd:
    """Truncated SVD by rank (``max_rank``), by relative Frobenius tolerance
    (``tol``, optionally plus ``atol``), or both.  A truncation policy object
    may be passed in place of ``max_rank``."""
    if max_rank is not None and not isinstance(max_rank, (int, np.integer)):
        from .policy import svd_rule

        max_rank, tol, atol = svd_rule(max_rank)
    m = np.asarray(m, dtype=DTYPE)
    u, s, vh = _svd(m)
    weights = s**2
    total = float(np.vdot(m, m).real)
    k = select_rank(weights, total, max_rank, tol, atol, min_rank)
    discarded = float(np.sum(weights[k:]))
    return TruncatedSvd(
        np.ascontiguousarray(u[:, :k]),
        s[:k].copy(),
        np.ascontiguousarray(vh[:k, :].conj().T),
        discarded,
    )


def eigh_descending(h):
    """Hermitian eigendecomposition with eigenvalues in non-increasing order
    and clamped at zero (for PSD inputs carrying round-off)."""
    n = h.shape[0]
    add_flops(n**3, "eigh")
    w, v = scipy.linalg.eigh(h, check_finite=False)
    w = np.maximum(w[::-1], 0.0)
    return w, np.ascontiguousarray(v[:, ::-1])

"""Stochastic diagnostics for randomized QB steps.

* leave-one-out error estimate from the triangular factor of ``A @ Omega``
* Girard-Hutchinson norm estimate ``||Y||_F / sqrt(p)``
* Householder updating of a thin QR factorization when sketch columns are
  appended, together with the matching update of ``G = R^{-H}``
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack, solve_triangular

from .tensor import DTYPE, ThinQr, add_flops, apply_householder, householder_raw, qr_thin

SINGULAR_FLOOR = 1e-13


class RankDeficientError(np.linalg.LinAlgError):
    """A triangular factor has a diagonal entry below the singularity floor."""


@dataclass(frozen=True)
class LooEstimate:
    err_hat: float
    norm_hat: float
    p: int
    rank_deficient: bool = False


def is_rank_deficient(r, scale=None):
    r = np.asarray(r)
    if r.ndim != 2 or r.shape[0] != r.shape[1] or r.shape[0] == 0:
        return True
    diag = np.abs(np.diag(r))
    ref = diag.max() if scale is None else max(scale, diag.max())
    return ref == 0 or bool(np.any(diag < SINGULAR_FLOOR * ref))


def inverse_adjoint(r):
    """``r^{-H}`` for square upper-triangular ``r``."""
    p = r.shape[0]
    add_flops(p**3 // 2, "trsm")
    return solve_triangular(r, np.eye(p, dtype=DTYPE), trans=2, lower=False, check_finite=False)


def loo_from_g(g):
    """``sqrt(mean_i ||g_i||^-2)`` over the columns of ``g``."""
    col = np.sum(np.abs(g) ** 2, axis=0)
    return math.sqrt(float(np.mean(1.0 / col)))


def loo_error(r):
    """Leave-one-out root-mean-square error estimate from the ``p x p``
    triangular factor ``r``; returns 0.0 when ``r`` is numerically singular
    (the sketch already spans the range)."""
    if is_rank_deficient(r):
        return 0.0
    return loo_from_g(inverse_adjoint(r))


def norm_estimate(x, p=None):
    """Girard-Hutchinson estimate ``||x||_F / sqrt(p)``; ``x`` may be the
    sketch ``Y`` or its triangular factor (same Frobenius norm)."""
    x = np.asarray(x)
    if p is None:
        p = x.shape[-1]
    if p < 1:
        raise ValueError("p must be >= 1")
    return float(np.linalg.norm(x)) / math.sqrt(p)


def estimate(r, p=None):
    """Error and norm estimates bundled with the rank-deficiency flag."""
    r = np.asarray(r)
    p = r.shape[1] if p is None else p
    deficient = is_rank_deficient(r)
    err = 0.0 if deficient else loo_from_g(inverse_adjoint(r))
    return LooEstimate(err, norm_estimate(r, p), p, deficient)


def _phase(diag):
    ph = np.ones(diag.shape, dtype=DTYPE)
    nz = diag != 0
    ph[nz] = diag[nz] / np.abs(diag[nz])
    return ph


def _qr_append_gram_schmidt(qr, y):
    # block classical Gram-Schmidt, applied twice
    q, r = qr.q, qr.r
    add_flops(4 * q.shape[0] * q.shape[1] * y.shape[1], "qr")
    r1 = q.conj().T @ y
    z = y - q @ r1
    r2 = q.conj().T @ z
    z = z - q @ r2
    f = qr_thin(z)
    top = np.hstack([r, r1 + r2])
    bottom = np.hstack([np.zeros((f.r.shape[0], r.shape[1]), DTYPE), f.r])
    return ThinQr(np.hstack([q, f.q]), np.vstack([top, bottom]))


def qr_append(qr, new_cols):
    """Thin QR of ``[Y, new_cols]`` given the thin QR of ``Y``.

    Uses the stored Householder reflectors: the new columns are rotated by
    the full ``Q^H``, the part below the existing rows is factored with a
    fresh Householder QR, and the reflectors are concatenated.  The leading
    columns of ``q`` and the leading block of ``r`` are unchanged.
    """
    y = np.asarray(new_cols, dtype=DTYPE)
    if qr.q.shape[1] == 0:
        return qr_thin(y)
    if y.shape[0] != qr.q.shape[0]:
        raise ValueError(f"row mismatch: {y.shape[0]} != {qr.q.shape[0]}")
    if qr.reflectors is None:
        return _qr_append_gram_schmidt(qr, y)
    h, tau, ph = qr.reflectors, qr.tau, qr.phase
    m = h.shape[0]
    k = ph.size
    delta = y.shape[1]
    w = apply_householder(h[:, :k], tau[:k], y, adjoint=True)
    r_prime_h = w[:k]
    r_prime = ph.conj()[:, None] * r_prime_h
    if k == m:
        refl = np.asfortranarray(np.hstack([h[:, :k], w]))
        return ThinQr(qr.q, np.hstack([qr.r, r_prime]), refl, tau[:k], ph)
    h2, tau2 = householder_raw(w[k:])
    k2 = min(m - k, delta)
    r_dd_h = np.triu(h2[:k2])
    ph2 = _phase(np.diag(r_dd_h))
    r_dd = ph2.conj()[:, None] * r_dd_h
    q2, _, info = lapack.zungqr(h2[:, :k2], tau2[:k2])
    if info != 0:
        raise np.linalg.LinAlgError(f"zungqr failed with info={info}")
    lifted = np.vstack([np.zeros((k, k2), DTYPE), q2])
    new_q = apply_householder(h[:, :k], tau[:k], lifted) * ph2[None, :]
    refl = np.zeros((m, qr.r.shape[1] + delta), dtype=DTYPE, order="F")
    refl[:, :k] = h[:, :k]
    refl[:k, k : k + delta] = r_prime_h
    refl[k:, k : k + delta] = h2
    top = np.hstack([qr.r, r_prime])
    bottom = np.hstack([np.zeros((k2, qr.r.shape[1]), DTYPE), r_dd])
    return ThinQr(
        np.ascontiguousarray(np.hstack([qr.q, new_q])),
        np.vstack([top, bottom]),
        refl,
        np.concatenate([tau[:k], tau2[:k2]]),
        np.concatenate([ph, ph2]),
    )


def g_append(g, r_prime, r_dprime, scale=None):
    """Extend ``G = R^{-H}`` to the inverse-adjoint of
    ``[[R, R'], [0, R'']]`` using the block-triangular inverse.

    Raises :class:`RankDeficientError` if ``R''`` is numerically singular
    (relative to ``scale``, the largest diagonal magnitude of ``R``, when
    given).
    """
    g = np.asarray(g, dtype=DTYPE)
    r_prime = np.asarray(r_prime, dtype=DTYPE)
    r_dprime = np.asarray(r_dprime, dtype=DTYPE)
    if is_rank_deficient(r_dprime, scale):
        raise RankDeficientError("appended triangular block is singular")
    p, delta = r_prime.shape
    g_dd = inverse_adjoint(r_dprime)
    add_flops(delta * p * p + delta * delta * p, "trsm")
    lower = -(g_dd @ (r_prime.conj().T @ g))
    out = np.zeros((p + delta, p + delta), dtype=DTYPE)
    out[:p, :p] = g
    out[p:, :p] = lower
    out[p:, p:] = g_dd
    return out

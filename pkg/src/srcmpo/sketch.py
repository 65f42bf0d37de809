"""Khatri-Rao structured random test matrices and randomized QB approximation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import DTYPE, add_flops, qr_thin

ENTRY_DISTS = ("real", "complex")


def _column(seed, factor, column, d, dist):
    # one independent stream per (seed, factor, column): prefix-stable growth
    rng = np.random.default_rng([seed, factor, column])
    if dist == "real":
        return rng.standard_normal(d).astype(DTYPE)
    return (rng.standard_normal(d) + 1j * rng.standard_normal(d)) / math.sqrt(2)


def _columns(seed, factor, start, stop, d, dist):
    out = np.empty((d, stop - start), dtype=DTYPE)
    for c in range(start, stop):
        out[:, c - start] = _column(seed, factor, c, d, dist)
    return out


@dataclass(frozen=True)
class KhatriRaoSketch:
    """Factors ``omegas[i]`` (each ``d x p``) of a Khatri-Rao test matrix."""

    omegas: tuple
    seed: int
    dist: str = "real"

    @property
    def p(self):
        return self.omegas[0].shape[1] if self.omegas else 0

    @property
    def n_factors(self):
        return len(self.omegas)

    def columns(self, start, stop):
        """Column slice ``[start, stop)`` of every factor."""
        return [om[:, start:stop] for om in self.omegas]


def new_sketch(n_factors, d, p, seed=None, dist="real"):
    """``n_factors`` independent ``d x p`` standard normal matrices.

    ``d`` may be an int or a per-factor list.  Each column is drawn from its
    own stream keyed by ``(seed, factor, column)``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if dist not in ENTRY_DISTS:
        raise ValueError(f"dist must be one of {ENTRY_DISTS}")
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1)[0])
    dims = [d] * n_factors if isinstance(d, int) else list(d)
    omegas = tuple(_columns(seed, i, 0, p, dims[i], dist) for i in range(n_factors))
    return KhatriRaoSketch(omegas, int(seed), dist)


def grow(sketch, extra):
    """Append ``extra`` columns to every factor; existing columns are kept
    bitwise."""
    if extra < 1:
        raise ValueError("extra must be >= 1")
    p = sketch.p
    omegas = tuple(
        np.concatenate(
            [om, _columns(sketch.seed, i, p, p + extra, om.shape[0], sketch.dist)], axis=1
        )
        for i, om in enumerate(sketch.omegas)
    )
    return KhatriRaoSketch(omegas, sketch.seed, sketch.dist)


def ensure_width(sketch, p):
    return sketch if sketch.p >= p else grow(sketch, p - sketch.p)


def khatri_rao(factors, cap=2**22):
    """Materialize the columnwise Kronecker product of ``factors`` (first
    factor most significant).  Test utility only."""
    rows = math.prod(f.shape[0] for f in factors)
    p = factors[0].shape[1]
    if rows * p > cap:
        raise MemoryError(f"Khatri-Rao product would have {rows * p} entries (cap {cap})")
    out = np.ones((1, p), dtype=DTYPE)
    for f in factors:
        out = (out[:, None, :] * f[None, :, :]).reshape(-1, p)
    return out


def gaussian_matrix(rows, cols, rng, dist="real"):
    if dist == "real":
        return rng.standard_normal((rows, cols)).astype(DTYPE)
    return (rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))) / math.sqrt(2)


def qb_approx(a, omega):
    """Randomized QB approximation ``a ~= q @ b`` with ``q = orth(a @ omega)``
    and ``b = q^H a``."""
    a = np.asarray(a, dtype=DTYPE)
    omega = np.asarray(omega, dtype=DTYPE)
    if omega.shape[0] != a.shape[1]:
        raise ValueError(f"omega has {omega.shape[0]} rows, a has {a.shape[1]} columns")
    add_flops(a.shape[0] * a.shape[1] * omega.shape[1])
    y = a @ omega
    if not np.any(y):
        return np.zeros((a.shape[0], 0), DTYPE), np.zeros((0, a.shape[1]), DTYPE)
    q = qr_thin(y).q
    add_flops(q.shape[0] * q.shape[1] * a.shape[1])
    return q, q.conj().T @ a

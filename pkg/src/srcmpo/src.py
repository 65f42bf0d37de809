"""Successive randomized compression of MPO-MPS products.

One left-to-right pass contracts a shared Khatri-Rao sketch into the chain,
caching the partial contractions ``C[i]`` of shape ``(p, D_i, chi_i)``.  A
right-to-left pass then produces the output one site at a time: the sketch of
the remaining (implicit) network is ``Y[j]``, its orthonormal factor becomes
output site ``j`` and the projected right environment ``S[j]`` of shape
``(chi_j, D_j, chibar_j)`` is carried to the next site.  The unprojected
remainder of the network is never formed.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .estimators import (
    LooEstimate,
    RankDeficientError,
    g_append,
    inverse_adjoint,
    is_rank_deficient,
    loo_from_g,
    norm_estimate,
    qr_append,
)
from .mps import Mps, check_compatible, identity_mpo, truncate, zero_mps
from .policy import Adaptive, FixedBond, Oversampled, Tolerance
from .sketch import ensure_width, new_sketch
from .tensor import DTYPE, batched_matmul, contract, qr_thin


class CapReachedWarning(UserWarning):
    """Adaptive growth hit ``chi_cap`` before the error estimate met the
    tolerance.  ``err_hat`` carries the last estimate."""

    def __init__(self, message, err_hat=None, site=None):
        super().__init__(message)
        self.err_hat = err_hat
        self.site = site


@dataclass
class SrcInfo:
    """Diagnostics of one SRC run, indexed by site ``j`` (the cut to the left
    of site ``j``, so entries ``1..n-1`` are meaningful)."""

    widths: list = field(default_factory=list)
    estimates: dict = field(default_factory=dict)
    r_factors: dict = field(default_factory=dict)
    cap_reached: list = field(default_factory=list)
    sketch_width: int = 0
    seed: int | None = None


# ---------------------------------------------------------------------------
# local contractions


def env_step(c_prev, omega, w, s):
    """Absorb site ``(w, s)`` and sketch factor ``omega`` (``d x p``) into the
    cached contraction ``c_prev`` of shape ``(p, D, chi)``."""
    p, dl, _ = c_prev.shape
    t1 = contract(c_prev, s, [(2, 0)])  # (p, Dl, t, cr)
    hw = contract(omega, w, [(0, 1)])  # (p, Dl, t, Dr)
    dt = dl * w.shape[2]
    a = hw.reshape(p, dt, -1).transpose(0, 2, 1)
    return batched_matmul(a, t1.reshape(p, dt, -1))  # (p, Dr, cr)


def y_site(c_prev, w, s, s_next):
    """Sketch ``Y`` of shape ``(p, d, chibar_right)`` for one term."""
    t1 = contract(c_prev, s, [(2, 0)])  # (p, Dl, t, h)
    t2 = contract(t1, w, [(1, 0), (2, 2)])  # (p, h, s, f)
    return contract(t2, s_next, [(1, 0), (3, 1)])  # (p, s, c)


def _right_block(w, s, s_next):
    t1 = contract(s, s_next, [(2, 0)])  # (a, t, f, c)
    return contract(t1, w, [(1, 2), (2, 3)])  # (a, c, b, s)


def s_site(eta, w, s, s_next):
    """Project site ``j`` onto ``conj(eta)``: new environment
    ``(chi_left, D_left, chibar_left)``."""
    t2 = _right_block(w, s, s_next)
    return contract(t2, eta.conj(), [(1, 2), (3, 1)])  # (a, b, k)


def first_site(w, s, s_next):
    t2 = _right_block(w, s, s_next)  # (1, c, 1, s)
    return t2[0, :, 0, :].T[None, :, :]


# ---------------------------------------------------------------------------
# terms and environments


def _normalize_terms(terms):
    out = []
    n = dims = None
    for item in terms:
        coeff, h, psi = item
        if h is None:
            h = identity_mpo(psi.n, psi.d)
            if psi.phys_dims != h.phys_dims:
                raise ValueError("identity MPO needs uniform physical dimension")
        check_compatible(h, psi)
        if n is None:
            n, dims = psi.n, psi.phys_dims
        elif psi.n != n or psi.phys_dims != dims:
            raise ValueError("all terms must share n and physical dimensions")
        out.append((complex(coeff), h, psi))
    if not out:
        raise ValueError("need at least one term")
    if n < 2:
        raise ValueError("need n >= 2 sites")
    return out, n, dims


def _is_zero(coeff, h, psi):
    return coeff == 0 or any(not np.any(x) for x in h.sites) or any(not np.any(x) for x in psi.sites)


def _env_columns(terms, sketch, start, stop, upto):
    """Columns ``[start, stop)`` of the cached contractions ``C[0..upto]``
    for every term."""
    omegas = sketch.columns(start, stop)
    out = []
    for _, h, psi in terms:
        c = np.ones((stop - start, 1, 1), dtype=DTYPE)
        envs = []
        for i in range(upto + 1):
            c = env_step(c, omegas[i], h.sites[i], psi.sites[i])
            envs.append(c)
        out.append(envs)
    return out


def sketch_environments(terms, sketch, upto=None):
    """All cached contractions ``C[i]`` (``i = 0..n-2``) for each term."""
    terms, n, _ = _normalize_terms(terms)
    upto = n - 2 if upto is None else upto
    return _env_columns(terms, sketch, 0, sketch.p, upto)


def _cut_bounds(terms, dims):
    """Largest useful width at each cut ``j`` (left bond of site ``j``)."""
    n = len(dims)
    bounds = [1] * (n + 1)
    for j in range(1, n):
        exact = sum(h.bonds[j] * psi.bonds[j] for _, h, psi in terms)
        left = math.prod(dims[:j])
        right = math.prod(dims[j:])
        bounds[j] = min(exact, left, right)
    return bounds


# ---------------------------------------------------------------------------
# the sweep


class _Sweep:
    """Mutable state of one right-to-left pass: the shared sketch, the cached
    left contractions ``C`` of every term and the right environments ``S``."""

    def __init__(self, terms, n, dims, p, seed, dist):
        self.terms = terms
        self.n = n
        self.dims = dims
        self.bounds = _cut_bounds(terms, dims)
        self.sketch = new_sketch(n - 1, dims[:-1], p, seed, dist)
        self.envs = _env_columns(terms, self.sketch, 0, p, n - 2)
        self.width = p
        self.s_next = [np.ones((1, 1, 1), dtype=DTYPE) for _ in terms]

    def widen(self, p, j):
        """Make at least ``p`` sketch columns available for site ``j``."""
        if p <= self.width:
            return
        self.sketch = ensure_width(self.sketch, p)
        extra = _env_columns(self.terms, self.sketch, self.width, p, j - 1)
        self.envs = [
            [np.concatenate([a, b], axis=0) for a, b in zip(old[:j], new)]
            for old, new in zip(self.envs, extra)
        ]
        self.width = p

    def sketch_y(self, j, start, stop):
        """Columns ``[start, stop)`` of the sketch of site ``j`` as a
        ``(d * chibar_right) x (stop - start)`` matrix."""
        y = None
        for (coeff, h, psi), env, s_env in zip(self.terms, self.envs, self.s_next):
            part = y_site(env[j - 1][start:stop], h.sites[j], psi.sites[j], s_env)
            part = part if coeff == 1 else coeff * part
            y = part if y is None else y + part
        return y.reshape(stop - start, -1).T

    def emit(self, j, q):
        chibar_right = self.s_next[0].shape[2]
        eta = np.ascontiguousarray(q.T).reshape(q.shape[1], self.dims[j], chibar_right)
        self.s_next = [
            s_site(eta, h.sites[j], psi.sites[j], s_env)
            for (_, h, psi), s_env in zip(self.terms, self.s_next)
        ]
        for env in self.envs:
            del env[j - 1 :]
        return eta

    def first(self):
        out = None
        for (coeff, h, psi), s_env in zip(self.terms, self.s_next):
            part = coeff * first_site(h.sites[0], psi.sites[0], s_env)
            out = part if out is None else out + part
        return out


def _adaptive_site(sweep, j, p, bound, policy, info):
    """Grow the sketch of site ``j`` until the leave-one-out estimate meets the
    tolerance; returns the final thin QR."""
    qr = qr_thin(sweep.sketch_y(j, 0, p))
    g = None
    scale = None
    while True:
        r = qr.r
        if p >= bound or is_rank_deficient(r, scale):
            info.estimates[j] = LooEstimate(0.0, norm_estimate(r, p), p, True)
            return qr
        if g is None:
            g = inverse_adjoint(r)
        scale = float(np.abs(np.diag(r)).max())
        est = LooEstimate(loo_from_g(g), norm_estimate(r, p), p)
        info.estimates[j] = est
        if est.err_hat <= policy.tau_abs + policy.tau_rel * est.norm_hat:
            return qr
        if p >= policy.chi_cap:
            info.cap_reached.append(j)
            warnings.warn(
                CapReachedWarning(
                    f"site {j}: chi_cap={policy.chi_cap} reached with error estimate "
                    f"{est.err_hat:.3e} (target {policy.tau_abs + policy.tau_rel * est.norm_hat:.3e})",
                    est.err_hat,
                    j,
                ),
                stacklevel=4,
            )
            return qr
        new_p = min(p + policy.delta_chi, bound, policy.chi_cap)
        sweep.widen(new_p, j)
        qr = qr_append(qr, sweep.sketch_y(j, p, new_p))
        r = qr.r
        if r.shape[0] != r.shape[1]:
            p = new_p
            continue
        try:
            g = g_append(g, r[:p, p:], r[p:, p:], scale)
        except RankDeficientError:
            info.estimates[j] = LooEstimate(0.0, norm_estimate(r, new_p), new_p, True)
            return qr
        p = new_p


def _run(terms, n, dims, policy, seed, dist):
    info = SrcInfo(seed=seed)
    terms = [t for t in terms if not _is_zero(*t)]
    if not terms:
        info.widths = [1] * (n + 1)
        return zero_mps(n, dims[0]), info
    adaptive = policy if isinstance(policy, Adaptive) else None
    if adaptive is not None:
        start = adaptive.chi0
    elif isinstance(policy, Oversampled):
        start = policy.sketch_bond
    else:
        start = policy.chi_bar
    bounds = _cut_bounds(terms, dims)
    sweep = _Sweep(terms, n, dims, max(1, min(start, max(bounds[1:n]))), seed, dist)
    info.seed = sweep.sketch.seed

    sites = [None] * n
    widths = [1] * (n + 1)
    prev = None
    for j in range(n - 1, 0, -1):
        bound = min(bounds[j], dims[j] * widths[j + 1])
        if adaptive is not None:
            p = start if prev is None or not adaptive.inherit else max(start, prev)
            p = max(1, min(p, bound, adaptive.chi_cap))
            sweep.widen(p, j)
            qr = _adaptive_site(sweep, j, p, bound, adaptive, info)
            prev = qr.r.shape[1]
        else:
            p = max(1, min(start, bound))
            sweep.widen(p, j)
            qr = qr_thin(sweep.sketch_y(j, 0, p))
        info.r_factors[j] = qr.r
        sites[j] = sweep.emit(j, qr.q)
        widths[j] = qr.q.shape[1]
    sites[0] = sweep.first()
    info.widths = widths
    info.sketch_width = sweep.sketch.p
    return Mps(tuple(sites), "right"), info


def _as_policy(policy):
    if isinstance(policy, int):
        return Oversampled(policy)
    if isinstance(policy, Tolerance):
        return Adaptive(
            tau_rel=policy.tol,
            tau_abs=policy.atol,
            chi_cap=policy.chi_max or Adaptive.chi_cap,
        )
    if isinstance(policy, (FixedBond, Oversampled, Adaptive)):
        return policy
    raise TypeError(f"not a truncation policy: {policy!r}")


def src_multiply_sum(terms, policy, seed=None, dist="real", return_info=False):
    """Compress ``sum_i coeff_i * H_i |psi_i>`` with one shared sketch.

    ``terms`` holds ``(coeff, mpo, mps)`` triples; ``mpo=None`` stands for
    the identity.  ``policy`` is a :class:`FixedBond` (right-canonical
    output), :class:`Oversampled` (left-canonical output, the default when an
    int is given) or :class:`Adaptive`.
    """
    policy = _as_policy(policy)
    terms, n, dims = _normalize_terms(terms)
    if isinstance(policy, Adaptive) and policy.final_round:
        inner = Adaptive(
            tau_rel=policy.tau_rel * 0.1,
            tau_abs=policy.tau_abs * 0.1,
            chi0=policy.chi0,
            delta_chi=policy.delta_chi,
            chi_cap=policy.chi_cap,
            final_round=False,
            inherit=policy.inherit,
        )
        out, info = _run(terms, n, dims, inner, seed, dist)
        out = truncate(out, policy.rounding())
    else:
        out, info = _run(terms, n, dims, policy, seed, dist)
        if isinstance(policy, Oversampled):
            out = truncate(out, FixedBond(policy.chi_bar))
    return (out, info) if return_info else out


def src_multiply(h, psi, policy, seed=None, dist="real", return_info=False):
    """Successive randomized compression of ``h |psi>``.

    ``policy`` may be an int (oversampled SRC at that output bond), or any of
    :class:`FixedBond`, :class:`Oversampled`, :class:`Adaptive`,
    :class:`Tolerance`.
    """
    return src_multiply_sum([(1.0, h, psi)], policy, seed, dist, return_info)


def randomized_round(phi, chi_bar, seed=None, dist="real"):
    """Khatri-Rao sketched rounding of an MPS to bond ``chi_bar``
    (right-canonical output)."""
    return src_multiply_sum([(1.0, None, phi)], FixedBond(chi_bar), seed, dist)

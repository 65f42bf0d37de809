"""Comparison algorithms for the compressed MPO-MPS product.

Every method returns a :class:`MethodReport` with the output state, the wall
time and the counted flops of the call.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .mps import Mps, apply_exact, canonicalize, check_compatible, gaussian_mps, inner, norm, truncate
from .policy import Adaptive, FixedBond, Oversampled, Tolerance, svd_rule
from .src import s_site, src_multiply, src_multiply_sum
from .tensor import DTYPE, contract, count_flops, eigh_descending, select_rank, svd_truncated


@dataclass
class MethodReport:
    output: Mps
    wall_time: float
    flops: int
    sweeps: int = 0
    converged: bool = True
    max_bond: int = 0


def _timed(fn, *args, **kwargs):
    with count_flops() as fc:
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        elapsed = time.perf_counter() - t0
    extra = {}
    if isinstance(out, tuple):
        out, extra = out
    return MethodReport(out, elapsed, max(fc.total, 1), max_bond=out.max_bond, **extra)


def _rounding(policy):
    # truncation rule for methods that cut by SVD or eigenvalues
    if isinstance(policy, int):
        return FixedBond(policy)
    if isinstance(policy, Oversampled):
        return FixedBond(policy.chi_bar)
    if isinstance(policy, Adaptive):
        return policy.rounding()
    return policy


# ---------------------------------------------------------------------------
# contract-then-compress


def ctc_basic(h, psi, policy):
    """Exact product followed by SVD rounding."""
    rule = _rounding(policy)
    return _timed(lambda: truncate(apply_exact(h, psi), rule))


def ctc_randomized(h, psi, chi_bar, seed=None):
    """Exact product followed by a Khatri-Rao sketched rounding sweep."""
    if isinstance(chi_bar, (FixedBond, Oversampled)):
        chi_bar = chi_bar.chi_bar
    if chi_bar < 1:
        raise ValueError("chi_bar must be >= 1")
    return _timed(
        lambda: src_multiply_sum([(1.0, None, apply_exact(h, psi))], FixedBond(chi_bar), seed)
    )


def src_report(h, psi, policy, seed=None):
    """:func:`src_multiply` wrapped in a report."""
    return _timed(lambda: src_multiply(h, psi, policy, seed))


# ---------------------------------------------------------------------------
# zip-up


def _mpo_right_canonical(h):
    # treat (out, in) as one physical index
    merged = Mps(tuple(w.reshape(w.shape[0], -1, w.shape[3]) for w in h.sites))
    merged = canonicalize(merged, "right")
    return [
        s.reshape(s.shape[0], w.shape[1], w.shape[2], s.shape[2])
        for s, w in zip(merged.sites, h.sites)
    ]


def _zip_up(h, psi, policy):
    check_compatible(h, psi)
    max_rank, tol, atol = svd_rule(_rounding(policy))
    ws = _mpo_right_canonical(h)
    ss = canonicalize(psi, "right").sites
    n = len(ss)
    carry = np.ones((1, 1, 1), dtype=DTYPE)  # (chibar, D, chi)
    out = []
    for i in range(n):
        t1 = contract(carry, ss[i], [(2, 0)])  # (a, b, t, C)
        t2 = contract(t1, ws[i], [(1, 0), (2, 2)])  # (a, C, s, B)
        a, cr, d, br = t2.shape
        t2 = t2.transpose(0, 2, 3, 1)  # (a, s, B, C)
        if i == n - 1:
            out.append(t2.reshape(a, d, 1))
            break
        f = svd_truncated(t2.reshape(a * d, br * cr), max_rank, tol, atol, min_rank=1)
        out.append(f.u.reshape(a, d, f.rank))
        carry = (f.s[:, None] * f.v.conj().T).reshape(f.rank, br, cr)
    return Mps(tuple(out), "left")


def zip_up(h, psi, policy):
    """Single left-to-right merge-and-truncate sweep over right-canonical
    inputs; tolerance cuts are made per site against the local block norm."""
    return _timed(_zip_up, h, psi, policy)


# ---------------------------------------------------------------------------
# density matrix


def _gram_step(e, w, s):
    # e: (b, c, b', c') -> next left Gram environment of H psi
    t = contract(e, s, [(1, 0)])  # (b, b', c', t, C)
    t = contract(t, w, [(0, 0), (3, 2)])  # (b', c', C, s, B)
    t = contract(t, s.conj(), [(1, 0)])  # (b', C, s, B, t', C')
    t = contract(t, w.conj(), [(0, 0), (2, 1), (4, 2)])  # (C, B, C', B')
    return t.transpose(1, 0, 3, 2)


def _open_block(w, s, s_next):
    # X(b, c, s, k) = sum H psi S_next, left bonds left open
    t = contract(w, s, [(2, 1)])  # (b, s, B, c, C)
    t = contract(t, s_next, [(4, 0), (2, 1)])  # (b, s, c, k)
    return t.transpose(0, 2, 1, 3)


def _density_matrix(h, psi, policy):
    check_compatible(h, psi)
    max_rank, tol, atol = svd_rule(_rounding(policy))
    n = psi.n
    grams = [np.ones((1, 1, 1, 1), dtype=DTYPE)]
    for i in range(n - 1):
        grams.append(_gram_step(grams[-1], h.sites[i], psi.sites[i]))
    s_env = np.ones((1, 1, 1), dtype=DTYPE)
    sites = [None] * n
    for j in range(n - 1, 0, -1):
        x = _open_block(h.sites[j], psi.sites[j], s_env)
        b, c, d, k = x.shape
        xm = x.reshape(b * c, d * k)
        gram = grams[j].reshape(b * c, b * c)
        rho = contract(xm, contract(gram, xm.conj(), [(1, 0)]), [(0, 0)])
        rho = 0.5 * (rho + rho.conj().T)
        w, v = eigh_descending(rho)
        keep = select_rank(w, float(np.sum(w)), max_rank, tol, atol, min_rank=1)
        # eigenvalues carry round-off of order eps * w[0], not eps**2
        noise = w[0] * w.size * np.finfo(float).eps
        keep = max(1, min(keep, b * c, int(np.count_nonzero(w > noise))))
        eta = np.ascontiguousarray(v[:, :keep].T).reshape(keep, d, k)
        sites[j] = eta
        s_env = s_site(eta, h.sites[j], psi.sites[j], s_env)
    x = _open_block(h.sites[0], psi.sites[0], s_env)
    sites[0] = x.reshape(1, x.shape[2], x.shape[3])
    return Mps(tuple(sites), "right")


def density_matrix(h, psi, policy):
    """Right-to-left sweep keeping the leading eigenvectors of the reduced
    density matrix of the remaining network at every cut."""
    return _timed(_density_matrix, h, psi, policy)


# ---------------------------------------------------------------------------
# two-site fitting


def _left_env(l_env, eta, w, s):
    t1 = contract(l_env, s, [(2, 0)])  # (a, b, t, C)
    t2 = contract(t1, w, [(1, 0), (2, 2)])  # (a, C, s, B)
    return contract(eta.conj(), t2, [(0, 0), (1, 2)]).transpose(0, 2, 1)  # (k, B, C)


def _two_site_target(l_env, r_env, w1, s1, w2, s2):
    t = contract(l_env, s1, [(2, 0)])  # (a, b, t, c)
    t = contract(t, w1, [(1, 0), (2, 2)])  # (a, c, s, B)
    t = contract(t, s2, [(1, 0)])  # (a, s, B, t, C)
    t = contract(t, w2, [(2, 0), (3, 2)])  # (a, s, C, u, E)
    return contract(t, r_env, [(2, 0), (4, 1)])  # (a, s, u, k)


def _fit_bond(policy, h, psi):
    if isinstance(policy, int):
        return policy
    if isinstance(policy, (FixedBond, Oversampled)):
        return policy.chi_bar
    cap = policy.chi_max if isinstance(policy, Tolerance) else policy.chi_cap
    guess = max(h.max_bond * psi.max_bond, 1)
    return min(guess, cap) if cap else guess


def _fitting(h, psi, policy, max_sweeps, guess, seed, conv_tol):
    check_compatible(h, psi)
    if max_sweeps < 1:
        raise ValueError("max_sweeps must be >= 1")
    max_rank, tol, atol = svd_rule(_rounding(policy))
    n = psi.n
    if guess is None:
        guess = gaussian_mps(n, psi.d, _fit_bond(policy, h, psi), seed=seed)
    g_norm = norm(guess)
    eta = list(canonicalize(guess, "right").sites)
    ws, ss = h.sites, psi.sites

    one = np.ones((1, 1, 1), dtype=DTYPE)
    left = [one] + [None] * n
    right = [None] * (n + 1)
    right[n] = one
    for j in range(n - 1, 1, -1):
        right[j] = s_site(eta[j], ws[j], ss[j], right[j + 1])

    # starting point: best multiple of the guess
    prev_norm = 0.0 if g_norm == 0 else abs(inner(guess, apply_exact(h, psi))) / g_norm
    prev_proxy = 0.0
    converged = False
    sweeps = 0
    form = "right"
    while sweeps < max_sweeps:
        to_right = sweeps % 2 == 0
        order = range(n - 1) if to_right else range(n - 2, -1, -1)
        discarded = 0.0
        kept = 0.0
        for i in order:
            theta = _two_site_target(left[i], right[i + 2], ws[i], ss[i], ws[i + 1], ss[i + 1])
            a, d1, d2, k = theta.shape
            m = theta.reshape(a * d1, d2 * k)
            if not np.any(m):
                # zero local gradient: keep the current two-site subspace
                old = contract(eta[i], eta[i + 1], [(2, 0)]).reshape(a * d1, d2 * k)
                f = svd_truncated(old, max_rank, tol, atol, min_rank=1)
                s_vals = np.zeros_like(f.s)
            else:
                f = svd_truncated(m, max_rank, tol, atol, min_rank=1)
                s_vals = f.s
            discarded += f.discarded_weight
            kept = float(np.sum(s_vals**2))
            if to_right:
                eta[i] = f.u.reshape(a, d1, f.rank)
                eta[i + 1] = (s_vals[:, None] * f.v.conj().T).reshape(f.rank, d2, k)
                left[i + 1] = _left_env(left[i], eta[i], ws[i], ss[i])
            else:
                eta[i] = (f.u * s_vals[None, :]).reshape(a, d1, f.rank)
                eta[i + 1] = f.v.conj().T.reshape(f.rank, d2, k)
                right[i + 1] = s_site(eta[i + 1], ws[i + 1], ss[i + 1], right[i + 2])
        sweeps += 1
        form = "left" if to_right else "right"
        cur_norm = float(np.sqrt(kept))
        proxy = discarded / kept if kept > 0 else np.inf
        if cur_norm > 0:
            d_norm = abs(cur_norm - prev_norm) / cur_norm
            if d_norm <= conv_tol and abs(proxy - prev_proxy) <= conv_tol:
                converged = True
                break
        prev_norm, prev_proxy = cur_norm, proxy
    return Mps(tuple(eta), form), {"sweeps": sweeps, "converged": converged}


def fitting(h, psi, policy, max_sweeps=10, guess=None, seed=None, conv_tol=1e-10):
    """Two-site fitting of ``h |psi>`` by alternating sweeps.

    Each directional half-sweep counts as one sweep.  The run is reported as
    converged once the fitted norm and the discarded-weight proxy change by
    at most ``conv_tol`` (relative) between sweeps while the fitted norm is
    nonzero; otherwise it stops after ``max_sweeps`` with
    ``converged=False``.
    """
    return _timed(_fitting, h, psi, policy, max_sweeps, guess, seed, conv_tol)


METHODS = {
    "ctc": ctc_basic,
    "rctc": ctc_randomized,
    "zipup": zip_up,
    "density": density_matrix,
    "fitting": fitting,
}

"""Matrix product states and operators.

Site tensors of an MPS are ordered ``(left bond, physical, right bond)`` and
those of an MPO ``(left bond, out, in, right bond)``.  The boundary bonds are
explicit axes of extent one.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .policy import svd_rule
from .tensor import DTYPE, as_tensor, contract, qr_thin, svd_truncated

CANONICAL_FORMS = ("none", "left", "right")
DEFAULT_DENSE_CAP = 2**20


class DenseCapError(RuntimeError):
    """Raised when densifying a network would exceed the entry cap."""


def dense_cap():
    return int(os.environ.get("TN_DENSE_CAP", DEFAULT_DENSE_CAP))


@dataclass(frozen=True)
class Mps:
    sites: tuple
    canonical_form: str = "none"

    def __post_init__(self):
        sites = tuple(as_tensor(s) for s in self.sites)
        object.__setattr__(self, "sites", sites)
        if not sites:
            raise ValueError("an MPS needs at least one site")
        if self.canonical_form not in CANONICAL_FORMS:
            raise ValueError(f"canonical_form must be one of {CANONICAL_FORMS}")
        for j, s in enumerate(sites):
            if s.ndim != 3:
                raise ValueError(f"site {j} has {s.ndim} axes, expected 3")
        if sites[0].shape[0] != 1 or sites[-1].shape[2] != 1:
            raise ValueError("boundary bonds must have extent 1")
        for j in range(len(sites) - 1):
            if sites[j].shape[2] != sites[j + 1].shape[0]:
                raise ValueError(
                    f"bond mismatch between sites {j} and {j + 1}: "
                    f"{sites[j].shape[2]} != {sites[j + 1].shape[0]}"
                )

    @property
    def n(self):
        return len(self.sites)

    @property
    def phys_dims(self):
        return [s.shape[1] for s in self.sites]

    @property
    def d(self):
        return self.sites[0].shape[1]

    @property
    def bonds(self):
        return [1] + [s.shape[2] for s in self.sites]

    @property
    def max_bond(self):
        return max(self.bonds)

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class Mpo:
    sites: tuple

    def __post_init__(self):
        sites = tuple(as_tensor(s) for s in self.sites)
        object.__setattr__(self, "sites", sites)
        if not sites:
            raise ValueError("an MPO needs at least one site")
        for j, s in enumerate(sites):
            if s.ndim != 4:
                raise ValueError(f"site {j} has {s.ndim} axes, expected 4")
            if s.shape[1] != s.shape[2]:
                raise ValueError(f"site {j} is not square: out {s.shape[1]} != in {s.shape[2]}")
        if sites[0].shape[0] != 1 or sites[-1].shape[3] != 1:
            raise ValueError("boundary bonds must have extent 1")
        for j in range(len(sites) - 1):
            if sites[j].shape[3] != sites[j + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {j} and {j + 1}")

    @property
    def n(self):
        return len(self.sites)

    @property
    def phys_dims(self):
        return [s.shape[1] for s in self.sites]

    @property
    def d(self):
        return self.sites[0].shape[1]

    @property
    def bonds(self):
        return [1] + [s.shape[3] for s in self.sites]

    @property
    def max_bond(self):
        return max(self.bonds)

    def __len__(self):
        return self.n


def check_compatible(h, psi):
    if h.n != psi.n or h.phys_dims != psi.phys_dims:
        raise ValueError(
            f"MPO ({h.n} sites, dims {h.phys_dims}) does not match "
            f"MPS ({psi.n} sites, dims {psi.phys_dims})"
        )


# ---------------------------------------------------------------------------
# construction


def _check_ensemble_args(n, d, bond, alpha):
    if n < 2:
        raise ValueError("n must be >= 2")
    if d < 2:
        raise ValueError("d must be >= 2")
    if bond < 1:
        raise ValueError("bond dimension must be >= 1")
    if not -1.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [-1, 1]")


def clipped_bonds(n, local_dim, bond):
    """Bond dimensions ``min(local_dim**j, local_dim**(n-j), bond)``."""
    out = []
    for j in range(n + 1):
        cap = min(j, n - j)
        # avoid forming huge powers
        reach = local_dim**cap if cap * math.log2(local_dim) < 62 else bond
        out.append(min(reach, bond))
    return out


def random_mps(n, d, chi, alpha=-0.5, seed=None):
    """Random MPS with i.i.d. entries uniform on ``[alpha, 1]`` (real values
    stored as complex), bonds clipped to the attainable rank at each cut."""
    _check_ensemble_args(n, d, chi, alpha)
    rng = np.random.default_rng(seed)
    b = clipped_bonds(n, d, chi)
    sites = [rng.uniform(alpha, 1.0, size=(b[j], d, b[j + 1])) for j in range(n)]
    return Mps(tuple(sites))


def random_mpo(n, d, bond_dim, alpha=-0.5, seed=None):
    """Random MPO from the same ensemble as :func:`random_mps`."""
    _check_ensemble_args(n, d, bond_dim, alpha)
    rng = np.random.default_rng(seed)
    b = clipped_bonds(n, d * d, bond_dim)
    sites = [rng.uniform(alpha, 1.0, size=(b[j], d, d, b[j + 1])) for j in range(n)]
    return Mpo(tuple(sites))


def gaussian_mps(n, d, chi, seed=None):
    """Random MPS with complex standard normal entries."""
    rng = np.random.default_rng(seed)
    b = clipped_bonds(n, d, chi)
    sites = [
        (rng.standard_normal((b[j], d, b[j + 1])) + 1j * rng.standard_normal((b[j], d, b[j + 1])))
        / np.sqrt(2)
        for j in range(n)
    ]
    return Mps(tuple(sites))


def identity_mpo(n, d):
    eye = np.eye(d, dtype=DTYPE).reshape(1, d, d, 1)
    return Mpo(tuple(eye for _ in range(n)))


def product_mps(vectors):
    """Product state from a list of local vectors."""
    return Mps(tuple(np.asarray(v, dtype=DTYPE).reshape(1, -1, 1) for v in vectors))


def zero_mps(n, d):
    return Mps(tuple(np.zeros((1, d, 1), dtype=DTYPE) for _ in range(n)))


def scale(psi, c):
    """``c * psi``, with the factor absorbed into the first site."""
    sites = list(psi.sites)
    sites[0] = sites[0] * c
    return Mps(tuple(sites), psi.canonical_form if c != 0 else "none")


def add(a, b):
    """Direct-sum MPS representing ``a + b`` (bonds add)."""
    if a.phys_dims != b.phys_dims:
        raise ValueError("MPS shapes differ")
    n = a.n
    if n == 1:
        return Mps((a.sites[0] + b.sites[0],))
    sites = []
    for j, (x, y) in enumerate(zip(a.sites, b.sites)):
        if j == 0:
            sites.append(np.concatenate([x, y], axis=2))
        elif j == n - 1:
            sites.append(np.concatenate([x, y], axis=0))
        else:
            lx, d, rx = x.shape
            ly, _, ry = y.shape
            s = np.zeros((lx + ly, d, rx + ry), dtype=DTYPE)
            s[:lx, :, :rx] = x
            s[lx:, :, rx:] = y
            sites.append(s)
    return Mps(tuple(sites))


# ---------------------------------------------------------------------------
# exact product and dense materialization


def apply_site(w, s):
    """Merge one MPO site with one MPS site into a product site of bond
    ``(D * chi)``, bond index ``D`` major."""
    dl, dout, _, dr = w.shape
    cl, _, cr = s.shape
    t = contract(w, s, [(2, 1)])  # (Dl, out, Dr, cl, cr)
    return t.transpose(0, 3, 1, 2, 4).reshape(dl * cl, dout, dr * cr)


def apply_exact(h, psi):
    """Exact MPO-MPS product with bond dimensions ``D_j * chi_j``."""
    check_compatible(h, psi)
    return Mps(tuple(apply_site(w, s) for w, s in zip(h.sites, psi.sites)))


def _check_cap(entries):
    cap = dense_cap()
    if entries > cap:
        raise DenseCapError(f"dense form would need {entries} entries (cap {cap}; set TN_DENSE_CAP)")


def to_dense(psi):
    """State vector of length ``prod(d_j)``."""
    _check_cap(math.prod(psi.phys_dims))
    out = psi.sites[0].reshape(-1, psi.sites[0].shape[2])
    for s in psi.sites[1:]:
        out = contract(out, s, [(1, 0)]).reshape(-1, s.shape[2])
    return out.reshape(-1)


def to_dense_matrix(h):
    """Operator as a ``prod(d) x prod(d)`` matrix (row index = out)."""
    dim = math.prod(h.phys_dims)
    _check_cap(dim * dim)
    out = h.sites[0].reshape(h.sites[0].shape[1], h.sites[0].shape[2], -1)
    for w in h.sites[1:]:
        t = contract(out, w, [(2, 0)])  # (O, I, o, i, r)
        o, i = t.shape[0] * t.shape[2], t.shape[1] * t.shape[3]
        out = t.transpose(0, 2, 1, 3, 4).reshape(o, i, -1)
    return out.reshape(dim, dim)


def from_dense(vec, dims, tol=1e-14, max_rank=None):
    """Tensor-train SVD of a dense vector with local dimensions ``dims``."""
    vec = np.asarray(vec, dtype=DTYPE).reshape(-1)
    dims = list(dims)
    if math.prod(dims) != vec.size:
        raise ValueError("dims do not match vector length")
    sites = []
    rest = vec.reshape(1, -1)
    left = 1
    for d in dims[:-1]:
        m = rest.reshape(left * d, -1)
        f = svd_truncated(m, max_rank=max_rank, tol=tol, min_rank=1)
        sites.append(f.u.reshape(left, d, f.rank))
        rest = f.s[:, None] * f.v.conj().T
        left = f.rank
    sites.append(rest.reshape(left, dims[-1], 1))
    return Mps(tuple(sites), "left")


def mpo_from_dense(mat, dims, tol=1e-14):
    """MPO from a dense operator matrix by tensor-train SVD over the merged
    ``(out, in)`` local index."""
    dims = list(dims)
    n = len(dims)
    dim = math.prod(dims)
    t = np.asarray(mat, dtype=DTYPE).reshape(dims + dims)
    order = [k for j in range(n) for k in (j, n + j)]
    merged = from_dense(t.transpose(order).reshape(-1), [d * d for d in dims], tol=tol)
    sites = [
        s.reshape(s.shape[0], d, d, s.shape[2]) for s, d in zip(merged.sites, dims)
    ]
    assert math.prod(dims) == dim
    return Mpo(tuple(sites))


# ---------------------------------------------------------------------------
# inner products and norms


def inner_scaled(a, b):
    """``<a|b>`` as ``(mantissa, log_scale)`` with ``<a|b> = mantissa *
    exp(log_scale)``; the environment is renormalized at every site so long
    chains cannot overflow."""
    if a.phys_dims != b.phys_dims:
        raise ValueError("MPS shapes differ")
    env = np.ones((1, 1), dtype=DTYPE)
    log_scale = 0.0
    for x, y in zip(a.sites, b.sites):
        t = contract(env, y, [(1, 0)])  # (xa, s, yb)
        env = contract(x.conj(), t, [(0, 0), (1, 1)])
        m = np.max(np.abs(env))
        if m == 0:
            return 0j, 0.0
        env = env / m
        log_scale += math.log(m)
    return complex(env[0, 0]), log_scale


def inner(a, b):
    """``<a|b>`` by a left-to-right environment sweep."""
    val, log_scale = inner_scaled(a, b)
    return val * math.exp(log_scale)


def norm(a):
    val, log_scale = inner_scaled(a, a)
    return math.sqrt(max(val.real, 0.0)) * math.exp(log_scale / 2)


def log_norm(a):
    """Natural log of the norm, computed by a QR sweep (accurate even for
    norms outside the double range)."""
    carry = np.ones((1, 1), dtype=DTYPE)
    total = 0.0
    for s in a.sites:
        t = contract(carry, s, [(1, 0)])
        left, d, right = t.shape
        f = qr_thin(t.reshape(left * d, right))
        carry = f.r
        nrm = np.linalg.norm(carry)
        if nrm == 0:
            return -math.inf
        carry = carry / nrm
        total += math.log(nrm)
    return total


def relative_error(reference, approx, method="qr"):
    """``||reference - approx|| / ||reference||``.

    ``method="qr"`` canonicalizes the direct-sum difference and resolves
    errors down to machine precision; ``method="inner"`` uses
    ``<a|a> - 2 Re<a|b> + <b|b>`` and bottoms out near ``1e-8``.
    """
    if method == "inner":
        vr, lr = inner_scaled(reference, reference)
        vx, lx = inner_scaled(reference, approx)
        va, la = inner_scaled(approx, approx)
        if vr == 0:
            raise ZeroDivisionError("reference has zero norm")
        cross = (vx / vr) * math.exp(lx - lr)
        own = (va / vr) * math.exp(la - lr)
        return math.sqrt(max(1.0 - 2.0 * cross.real + own.real, 0.0))
    if method != "qr":
        raise ValueError(f"unknown method {method!r}")
    lr = log_norm(reference)
    if lr == -math.inf:
        raise ZeroDivisionError("reference has zero norm")
    diff = add(reference, scale(approx, -1.0))
    ld = log_norm(diff)
    return 0.0 if ld == -math.inf else math.exp(ld - lr)


# ---------------------------------------------------------------------------
# canonical forms and rounding


def canonicalize(psi, direction="right"):
    """Return an equivalent MPS in left or right canonical form (QR sweep)."""
    sites = list(psi.sites)
    n = len(sites)
    if direction == "left":
        for j in range(n - 1):
            left, d, right = sites[j].shape
            f = qr_thin(sites[j].reshape(left * d, right))
            sites[j] = f.q.reshape(left, d, -1)
            sites[j + 1] = contract(f.r, sites[j + 1], [(1, 0)])
    elif direction == "right":
        for j in range(n - 1, 0, -1):
            left, d, right = sites[j].shape
            f = qr_thin(sites[j].reshape(left, d * right).conj().T)
            sites[j] = f.q.conj().T.reshape(-1, d, right)
            sites[j - 1] = contract(sites[j - 1], f.r.conj().T, [(2, 0)])
    else:
        raise ValueError("direction must be 'left' or 'right'")
    return Mps(tuple(sites), direction)


def truncate(psi, policy, direction="left"):
    """SVD rounding.  The input is first brought to the opposite canonical
    form, then swept in ``direction``-canonical order with a truncated SVD at
    every bond; the output is ``direction``-canonical."""
    max_rank, tol, atol = svd_rule(policy)
    sites = list(psi.sites)
    n = len(sites)
    if direction == "left":
        if psi.canonical_form != "right":
            sites = list(canonicalize(psi, "right").sites)
        for j in range(n - 1):
            left, d, right = sites[j].shape
            f = svd_truncated(sites[j].reshape(left * d, right), max_rank, tol, atol, min_rank=1)
            sites[j] = f.u.reshape(left, d, f.rank)
            carry = f.s[:, None] * f.v.conj().T
            sites[j + 1] = contract(carry, sites[j + 1], [(1, 0)])
    elif direction == "right":
        if psi.canonical_form != "left":
            sites = list(canonicalize(psi, "left").sites)
        for j in range(n - 1, 0, -1):
            left, d, right = sites[j].shape
            f = svd_truncated(sites[j].reshape(left, d * right), max_rank, tol, atol, min_rank=1)
            sites[j] = f.v.conj().T.reshape(f.rank, d, right)
            carry = f.u * f.s[None, :]
            sites[j - 1] = contract(sites[j - 1], carry, [(2, 0)])
    else:
        raise ValueError("direction must be 'left' or 'right'")
    return Mps(tuple(sites), direction)


def is_canonical(psi, direction, atol=1e-10):
    """Check the partial-isometry identities of every site but the center."""
    n = psi.n
    if direction == "right":
        for s in psi.sites[1:]:
            m = s.reshape(s.shape[0], -1)
            if not np.allclose(m @ m.conj().T, np.eye(m.shape[0]), atol=atol):
                return False
        return True
    if direction == "left":
        for s in psi.sites[: n - 1]:
            m = s.reshape(-1, s.shape[2])
            if not np.allclose(m.conj().T @ m, np.eye(m.shape[1]), atol=atol):
                return False
        return True
    raise ValueError("direction must be 'left' or 'right'")

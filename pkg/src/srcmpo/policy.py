"""Truncation policies shared by every compression routine."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class FixedBond:
    """Cap every output bond at ``chi_bar``."""

    chi_bar: int

    def __post_init__(self):
        if self.chi_bar < 1:
            raise ValueError("chi_bar must be >= 1")


def default_oversampled_bond(chi_bar):
    return max(math.ceil(1.5 * chi_bar), chi_bar + 10)


@dataclass(frozen=True)
class Oversampled:
    """Sketch at ``chi_prime`` then round down to ``chi_bar``.

    ``chi_prime`` defaults to ``max(ceil(1.5 chi_bar), chi_bar + 10)``.
    """

    chi_bar: int
    chi_prime: int | None = None

    def __post_init__(self):
        if self.chi_bar < 1:
            raise ValueError("chi_bar must be >= 1")
        if self.chi_prime is not None and self.chi_prime < self.chi_bar:
            raise ValueError("chi_prime must be >= chi_bar")

    @property
    def sketch_bond(self):
        if self.chi_prime is not None:
            return self.chi_prime
        return default_oversampled_bond(self.chi_bar)


@dataclass(frozen=True)
class Tolerance:
    """Keep the fewest singular values per bond whose discarded tail has norm
    at most ``atol + tol * ||bond matrix||_F``; optionally capped at
    ``chi_max``."""

    tol: float
    atol: float = 0.0
    chi_max: int | None = None

    def __post_init__(self):
        if self.tol < 0 or self.atol < 0 or (self.tol == 0 and self.atol == 0):
            raise ValueError("tolerances must be >= 0 and not both zero")


@dataclass(frozen=True)
class Adaptive:
    """Grow each bond from ``chi0`` in steps of ``delta_chi`` until the
    leave-one-out error estimate meets ``tau_abs + tau_rel * norm_estimate``.

    With ``final_round`` the sketching stage runs at a tenth of the requested
    tolerances and the result is rounded at the requested ones.
    ``inherit=True`` starts each site at the previously accepted width instead
    of restarting at ``chi0``.
    """

    tau_rel: float = 0.0
    tau_abs: float = 0.0
    chi0: int = 2
    delta_chi: int = 3
    chi_cap: int = 1024
    final_round: bool = True
    inherit: bool = False

    def __post_init__(self):
        if self.tau_rel < 0 or self.tau_abs < 0 or (self.tau_rel == 0 and self.tau_abs == 0):
            raise ValueError("tolerances must be >= 0 and not both zero")
        if self.chi0 < 1 or self.delta_chi < 1:
            raise ValueError("chi0 and delta_chi must be >= 1")
        if self.chi_cap < self.chi0:
            raise ValueError("chi_cap must be >= chi0")

    def rounding(self) -> Tolerance:
        return Tolerance(tol=self.tau_rel, atol=self.tau_abs)


TruncationPolicy = FixedBond | Oversampled | Tolerance | Adaptive


def svd_rule(policy):
    """``(max_rank, tol, atol)`` used when a policy drives an SVD or
    eigenvalue cut."""
    if isinstance(policy, int):
        return policy, None, 0.0
    if isinstance(policy, (FixedBond, Oversampled)):
        return policy.chi_bar, None, 0.0
    if isinstance(policy, Tolerance):
        return policy.chi_max, policy.tol, policy.atol
    if isinstance(policy, Adaptive):
        return policy.chi_cap, policy.tau_rel, policy.tau_abs
    raise TypeError(f"not a truncation policy: {policy!r}")

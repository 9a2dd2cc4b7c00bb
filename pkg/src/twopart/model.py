"""Pointwise user model: charges, achievable demand, optimal usage and utility.

All quantities are plain floats.  Two sentinels are used throughout the
package and are exact IEEE infinities rather than "large" numbers:

* ``UNLIMITED`` -- a data cap that never binds (flat-rate tariff).
* ``INFINITE_CONGESTION`` -- congestion of a dummy free provider whose
  achievable demand is zero for everybody.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

UNLIMITED = math.inf
INFINITE_CONGESTION = math.inf


class DomainError(ValueError):
    """Raised when an argument lies outside the model's domain."""


def _check_nonneg(name: str, value: float, allow_inf: bool = False) -> float:
    value = float(value)
    if math.isnan(value) or value < 0.0:
        raise DomainError(f"{name} must be >= 0, got {value!r}")
    if math.isinf(value) and not allow_inf:
        raise DomainError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class UserType:
    """A user type: desirable demand ``u`` and per-unit value ``v``."""

    u: float
    v: float

    def __post_init__(self):
        _check_nonneg("u", self.u)
        _check_nonneg("v", self.v)


@dataclass(frozen=True)
class Tariff:
    """Two-part tariff: data cap ``g``, lump-sum fee ``f``, per-unit fee ``p``."""

    g: float
    f: float
    p: float

    def __post_init__(self):
        _check_nonneg("g", self.g, allow_inf=True)
        _check_nonneg("f", self.f)
        _check_nonneg("p", self.p)

    @classmethod
    def flat_rate(cls, f: float) -> "Tariff":
        return cls(UNLIMITED, f, 0.0)

    @classmethod
    def pay_as_you_go(cls, p: float) -> "Tariff":
        return cls(0.0, 0.0, p)

    @property
    def is_flat_rate(self) -> bool:
        return math.isinf(self.g)

    @property
    def is_pay_as_you_go(self) -> bool:
        return self.g == 0.0 and self.f == 0.0

    def with_(self, **changes) -> "Tariff":
        fields = {"g": self.g, "f": self.f, "p": self.p}
        fields.update(changes)
        return Tariff(**fields)


@dataclass(frozen=True)
class UserDistribution:
    """Product measure on ``[0, u_max] x [0, v_max]``.

    ``F_u(x) = (x/u_max)**alpha`` and ``F_v(x) = (x/v_max)**beta``, scaled by
    a total ``mass``.  The defaults give the normalized probability measure
    on the unit square; the scale fields exist so that the normalization
    map in :func:`twopart.oracle.normalize_market` can be checked.
    """

    alpha: float = 1.0
    beta: float = 1.0
    u_max: float = 1.0
    v_max: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "u_max", "v_max", "mass"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise DomainError(f"{name} must be finite and > 0, got {value!r}")

    @property
    def is_normalized(self) -> bool:
        return self.u_max == 1.0 and self.v_max == 1.0 and self.mass == 1.0

    def cdf_u(self, x: float) -> float:
        """Normalized CDF of desirable demand (ignores ``mass``)."""
        return min(max(x / self.u_max, 0.0), 1.0) ** self.alpha

    def cdf_v(self, x: float) -> float:
        return min(max(x / self.v_max, 0.0), 1.0) ** self.beta

    def density_u(self, x: float) -> float:
        """Density of ``mass * F_u`` at ``x``."""
        if not 0.0 < x <= self.u_max:
            return 0.0
        return self.mass * self.alpha * (x / self.u_max) ** (self.alpha - 1.0) / self.u_max


def charge(y: float, tariff: Tariff) -> float:
    """Bill for ``y`` units of data: ``f + p * (y - g)^+``."""
    y = _check_nonneg("y", y)
    if y <= tariff.g:
        return tariff.f
    return tariff.f + tariff.p * (y - tariff.g)


def achievable_demand(u: float, q: float) -> float:
    """``u * exp(-q)``; zero at infinite congestion."""
    u = _check_nonneg("u", u, allow_inf=False)
    q = _check_nonneg("q", q, allow_inf=True)
    if math.isinf(q):
        return 0.0
    return u * math.exp(-q)


def optimal_usage(user: UserType, tariff: Tariff, q: float) -> float:
    """Utility-maximizing usage given congestion ``q``.

    A user whose achievable demand exceeds the cap stops at the cap only
    when her value is strictly below the per-unit fee.
    """
    rho = achievable_demand(user.u, q)
    if rho > tariff.g and user.v < tariff.p:
        return tariff.g
    return rho


def optimal_utility(user: UserType, tariff: Tariff, q: float) -> float:
    """Utility ``v*y - t(y)`` at the optimal usage."""
    rho = achievable_demand(user.u, q)
    if rho <= tariff.g:
        return user.v * rho - tariff.f
    if user.v < tariff.p:
        return user.v * tariff.g - tariff.f
    return user.v * rho - tariff.f - tariff.p * (rho - tariff.g)


def free_utility(user: UserType, q0: float) -> float:
    """Utility from the zero-fee outside option at congestion ``q0``."""
    return user.v * achievable_demand(user.u, q0)


def congestion(d: float, c: float) -> float:
    """Capacity-sharing congestion ``d / c``."""
    d = _check_nonneg("d", d)
    c = float(c)
    if not (c > 0.0 and math.isfinite(c)):
        raise DomainError(f"capacity must be finite and > 0, got {c!r}")
    return d / c


def inverse_congestion(q: float, c: float) -> float:
    """Load implied by congestion ``q`` at capacity ``c`` (``q * c``)."""
    q = _check_nonneg("q", q)
    c = float(c)
    if not (c > 0.0 and math.isfinite(c)):
        raise DomainError(f"capacity must be finite and > 0, got {c!r}")
    return q * c

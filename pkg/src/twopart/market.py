"""Market shares, data loads, revenue and welfare at fixed congestion levels.

For a fixed desirable demand ``u`` every provider's optimal utility is the
upper envelope of at most two lines in ``v`` (stop at the cap, or consume
the full achievable demand), and the free provider's is a single line.  So
the set of values choosing each provider is a union of intervals whose
endpoints are line crossings, and the integrals over ``v`` against
``F_v(v) = (v/V)**beta`` are exact.  Only the outer integral over ``u`` is
numerical (see :mod:`twopart.quadrature`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .model import (
    DomainError,
    Tariff,
    UserDistribution,
    UserType,
    free_utility,
    optimal_utility,
)
from .quadrature import integrate

FREE = -1

# Order of the integrand components everywhere in this module.
LOAD, REVENUE, WELFARE, MEASURE = range(4)

# Two utilities this close at an interval midpoint are the same line.
_TIE_ATOL = 1e-13


@dataclass(frozen=True)
class ProviderConfig:
    tariff: Tariff
    capacity: float

    def __post_init__(self):
        if not (math.isfinite(self.capacity) and self.capacity > 0.0):
            raise DomainError(f"capacity must be finite and > 0, got {self.capacity!r}")


@dataclass(frozen=True)
class MarketScenario:
    providers: tuple[ProviderConfig, ...]
    q0: float = math.inf
    distribution: UserDistribution = field(default_factory=UserDistribution)

    def __post_init__(self):
        object.__setattr__(self, "providers", tuple(self.providers))
        if not self.providers:
            raise DomainError("a market needs at least one provider")
        if math.isnan(self.q0) or self.q0 < 0.0:
            raise DomainError(f"q0 must be >= 0 or inf, got {self.q0!r}")

    @classmethod
    def monopoly(cls, tariff: Tariff, capacity: float, q0: float = math.inf,
                 distribution: UserDistribution | None = None) -> "MarketScenario":
        return cls((ProviderConfig(tariff, capacity),), q0,
                   distribution or UserDistribution())

    @property
    def n(self) -> int:
        return len(self.providers)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([pc.capacity for pc in self.providers])

    def with_tariff(self, tariff: Tariff, index: int = 0) -> "MarketScenario":
        providers = list(self.providers)
        providers[index] = ProviderConfig(tariff, providers[index].capacity)
        return MarketScenario(tuple(providers), self.q0, self.distribution)


@dataclass(frozen=True)
class SliceInterval:
    provider: int
    lo: float
    hi: float
    # Providers whose utility coincides with the owner's on the whole
    # interval; integrals split the mass equally among them.
    shared_with: tuple[int, ...] = ()


@dataclass(frozen=True)
class ShareSlice:
    u: float
    intervals: tuple[SliceInterval, ...]

    def owner(self, v: float) -> int:
        for iv in self.intervals:
            if iv.lo <= v < iv.hi:
                return iv.provider
        return self.intervals[-1].provider

    def intervals_of(self, provider: int) -> list[tuple[float, float]]:
        return [(iv.lo, iv.hi) for iv in self.intervals if iv.provider == provider]


@dataclass(frozen=True)
class MarketMetrics:
    """Per-provider integrals at a fixed congestion vector."""

    load: np.ndarray
    revenue: np.ndarray
    welfare: np.ndarray
    measure: np.ndarray
    error: float
    evaluations: int


def _as_q(scenario: MarketScenario, q) -> np.ndarray:
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if q.shape != (scenario.n,):
        raise DomainError(f"expected {scenario.n} congestion levels, got shape {q.shape}")
    if np.any(~np.isfinite(q)) or np.any(q < 0):
        raise DomainError(f"provider congestion must be finite and >= 0, got {q}")
    return q


def _decay(q: float) -> float:
    return 0.0 if math.isinf(q) else math.exp(-q)


def best_provider(user: UserType, scenario: MarketScenario, q) -> int:
    """Index of the provider chosen by ``user``, or ``FREE``.

    Ties go to a normal provider over the free one, then to the lowest index.
    """
    q = _as_q(scenario, q)
    best, best_u = FREE, free_utility(user, scenario.q0)
    for i, pc in enumerate(scenario.providers):
        util = optimal_utility(user, pc.tariff, q[i])
        if util > best_u or (best == FREE and util == best_u):
            best, best_u = i, util
    return best


# ---------------------------------------------------------------------------
# Inner (v) integrals

def _clip_cdf(t, v_max, beta):
    return np.clip(t / v_max, 0.0, 1.0) ** beta


def _clip_first_moment(t, v_max, beta):
    """``int_0^t v dF_v`` for ``F_v(v) = (v/V)**beta``, clipped to ``[0, V]``."""
    return v_max * beta / (beta + 1.0) * np.clip(t / v_max, 0.0, 1.0) ** (beta + 1.0)


def _threshold(num, den):
    """Smallest ``v`` with ``v * den >= num`` (``num >= 0``); inf when none."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
    return np.where(den > 0, ratio, np.where((den == 0) & (num == 0), 0.0, np.inf))


def monopoly_inner(u, q: float, q0: float, g, f, p, beta: float = 1.0, v_max: float = 1.0):
    """Inner integrals for a single provider at demand(s) ``u``.

    Returns an array of shape ``(4, len(u))`` holding load, revenue, welfare
    and share measure per unit of ``dF_u``.  Tariff components may be arrays
    broadcastable against ``u`` (demand-based tariffs).
    """
    u = np.asarray(u, dtype=float)
    g, f, p = (np.broadcast_to(np.asarray(x, dtype=float), u.shape) for x in (g, f, p))
    a, b = _decay(q), _decay(q0)
    rho = u * a
    rho0 = u * b
    drho = rho - rho0
    F = lambda t: _clip_cdf(t, v_max, beta)
    G = lambda t: _clip_first_moment(t, v_max, beta)
    G_top = v_max * beta / (beta + 1.0)

    with np.errstate(invalid="ignore", over="ignore"):
        # Cap never reached: pay f, use rho.
        t_light = _threshold(f, drho)
        m_light = 1.0 - F(t_light)
        light = np.stack([rho * m_light, f * m_light, rho * (G_top - G(t_light)), m_light])

        # Cap reached: v < p stops at g, v >= p pays overage and uses rho.
        over = np.where(rho > g, rho - g, 0.0)
        t_lo = np.minimum(_threshold(f, g - rho0), p)
        m_lo = F(p) - F(t_lo)
        k_hi = f + p * over
        t_hi = np.maximum(_threshold(k_hi, drho), p)
        m_hi = 1.0 - F(t_hi)
        heavy = np.stack([
            g * m_lo + rho * m_hi,
            f * m_lo + k_hi * m_hi,
            g * (G(p) - G(t_lo)) + rho * (G_top - G(t_hi)),
            m_lo + m_hi,
        ])
    return np.where(rho <= g, light, heavy)


def monopoly_u_breakpoints(q: float, q0: float, tariff: Tariff,
                           u_max: float = 1.0, v_max: float = 1.0) -> list[float]:
    """Demands at which the monopoly inner integrals change formula."""
    g, f, p = tariff.g, tariff.f, tariff.p
    a, b = _decay(q), _decay(q0)
    da = a - b
    cands = []
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = [
            (g, a),                        # achievable demand meets the cap
            (f, da * v_max),               # light-user threshold reaches V
            (g - f / v_max, b),            # capped-user threshold reaches V
            (g - (f / p if p > 0 else math.inf), b),  # capped threshold reaches p
            (g, b),                        # capped users lose to the free option
            (f - p * g, v_max * da - p * a),  # overage threshold reaches V
            (p * g - f, p * b),            # overage threshold reaches p
            (p * g - f, p * a),            # overage threshold reaches 0
        ]
        for num, den in terms:
            if den != 0 and math.isfinite(num):
                cands.append(num / den)
    return sorted({x for x in cands if math.isfinite(x) and 0.0 < x < u_max})


def _lines(u, scenario: MarketScenario, q: np.ndarray):
    """Slopes/intercepts of each provider's two utility lines at demands ``u``."""
    n = scenario.n
    slopes = np.empty((2 * n + 1, u.size))
    icpts = np.empty_like(slopes)
    for i, pc in enumerate(scenario.providers):
        t = pc.tariff
        rho = u * math.exp(-q[i])
        over = np.where(rho > t.g, rho - t.g, 0.0)
        slopes[2 * i] = np.minimum(rho, t.g)
        icpts[2 * i] = -t.f
        slopes[2 * i + 1] = rho
        icpts[2 * i + 1] = -t.f - t.p * over
    slopes[2 * n] = u * _decay(scenario.q0)
    icpts[2 * n] = 0.0
    return slopes, icpts


def _general_pieces(u, scenario: MarketScenario, q: np.ndarray):
    """Sorted v-breakpoints and per-piece ownership shares for each ``u``.

    Returns ``(v, share)`` with ``v`` of shape ``(n_u, K)`` and ``share`` of
    shape ``(N, n_u, K-1)``; the free provider takes ``1 - sum(share)``.
    """
    v_max = scenario.distribution.v_max
    slopes, icpts = _lines(u, scenario, q)
    owner = np.repeat(np.arange(scenario.n), 2).tolist() + [FREE]
    cands = [np.zeros(u.size), np.full(u.size, v_max)]
    for pc in scenario.providers:
        cands.append(np.full(u.size, min(pc.tariff.p, v_max)))
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for j, k in combinations(range(len(owner)), 2):
            if owner[j] == owner[k]:
                continue
            cands.append((icpts[k] - icpts[j]) / (slopes[j] - slopes[k]))
    v = np.stack(cands, axis=1)
    v = np.where(np.isfinite(v), np.clip(v, 0.0, v_max), 0.0)
    v.sort(axis=1)

    mid = 0.5 * (v[:, 1:] + v[:, :-1])
    util = np.empty((scenario.n,) + mid.shape)
    for i, pc in enumerate(scenario.providers):
        lo = slopes[2 * i][:, None] * mid + icpts[2 * i][:, None]
        hi = slopes[2 * i + 1][:, None] * mid + icpts[2 * i + 1][:, None]
        util[i] = np.where(mid < pc.tariff.p, lo, hi)
    free = slopes[-1][:, None] * mid
    best = util.max(axis=0)
    tied = util >= best - _TIE_ATOL
    wins = tied & (best >= free - _TIE_ATOL)[None]
    share = wins / np.maximum(tied.sum(axis=0), 1)[None]
    return v, mid, share


def general_inner(u, scenario: MarketScenario, q):
    """Inner integrals for any number of providers.

    Returns shape ``(4, N, len(u))`` in the component order of this module.
    """
    q = _as_q(scenario, q)
    u = np.asarray(u, dtype=float)
    dist = scenario.distribution
    v, mid, share = _general_pieces(u, scenario, q)
    dF = np.diff(_clip_cdf(v, dist.v_max, dist.beta), axis=1)
    dG = np.diff(_clip_first_moment(v, dist.v_max, dist.beta), axis=1)
    out = np.empty((4, scenario.n, u.size))
    for i, pc in enumerate(scenario.providers):
        t = pc.tariff
        rho = (u * math.exp(-q[i]))[:, None]
        usage = np.where((rho > t.g) & (mid < t.p), t.g, rho)
        bill = t.f + t.p * np.where(usage > t.g, usage - t.g, 0.0)
        s = share[i]
        out[LOAD, i] = (s * usage * dF).sum(axis=1)
        out[REVENUE, i] = (s * bill * dF).sum(axis=1)
        out[WELFARE, i] = (s * usage * dG).sum(axis=1)
        out[MEASURE, i] = (s * dF).sum(axis=1)
    return out


def share_slice(u: float, scenario: MarketScenario, q) -> ShareSlice:
    """Exact partition of ``[0, V]`` by chosen provider at demand ``u``."""
    q = _as_q(scenario, q)
    v, _, share = _general_pieces(np.array([float(u)]), scenario, q)
    v = v[0]
    share = share[:, 0, :]
    pieces: list[SliceInterval] = []
    for k in range(v.size - 1):
        lo, hi = float(v[k]), float(v[k + 1])
        if hi <= lo:
            continue
        winners = tuple(int(i) for i in np.flatnonzero(share[:, k] > 0))
        owner = winners[0] if winners else FREE
        prev = pieces[-1] if pieces else None
        if prev and prev.provider == owner and prev.shared_with == winners[1:]:
            pieces[-1] = SliceInterval(owner, prev.lo, hi, prev.shared_with)
        else:
            pieces.append(SliceInterval(owner, lo, hi, winners[1:]))
    if not pieces:
        # u == 0 collapses nothing in v; everybody is indifferent.
        pieces.append(SliceInterval(FREE, 0.0, scenario.distribution.v_max))
    return ShareSlice(float(u), tuple(pieces))


# ---------------------------------------------------------------------------
# Outer (u) integral

def integrate_over_u(inner, dist: UserDistribution, u_breaks: Sequence[float] = (),
                     tol: float = 1e-9, max_intervals: int = 100_000):
    """Integrate ``inner(u)`` against ``mass * dF_u``.

    For ``alpha >= 1`` the density is bounded and the integral is taken in
    ``x = u/U``; otherwise it is taken in the CDF coordinate ``w = F_u(u)``,
    which removes the singular density at zero.
    """
    U, alpha = dist.u_max, dist.alpha
    if alpha >= 1.0:
        def integrand(x):
            return inner(U * x) * (dist.mass * alpha * x ** (alpha - 1.0))
        pts = [0.0] + [ub / U for ub in u_breaks] + [1.0]
    else:
        def integrand(w):
            return inner(U * w ** (1.0 / alpha)) * dist.mass
        pts = [0.0] + [(ub / U) ** alpha for ub in u_breaks] + [1.0]
    return integrate(integrand, sorted(pts), tol=tol, max_intervals=max_intervals)


def market_metrics(scenario: MarketScenario, q, tol: float = 1e-9,
                   method: str = "auto") -> MarketMetrics:
    """Load, revenue, welfare and share measure of every provider.

    ``method`` selects the closed-form monopoly integrand (``"analytic"``),
    the line-envelope integrand (``"general"``) or picks automatically.
    """
    q = _as_q(scenario, q)
    dist = scenario.distribution
    if method == "auto":
        method = "analytic" if scenario.n == 1 else "general"

    if method == "analytic":
        if scenario.n != 1:
            raise ValueError("the analytic integrand handles a single provider")
        t = scenario.providers[0].tariff
        breaks = monopoly_u_breakpoints(q[0], scenario.q0, t, dist.u_max, dist.v_max)
        res = integrate_over_u(
            lambda u: monopoly_inner(u, q[0], scenario.q0, t.g, t.f, t.p, dist.beta, dist.v_max),
            dist, breaks, tol)
        vals = res.value[:, None]
    elif method == "general":
        breaks = sorted({pc.tariff.g * math.exp(qi)
                         for pc, qi in zip(scenario.providers, q)
                         if 0.0 < pc.tariff.g * math.exp(qi) < dist.u_max})
        n = scenario.n
        res = integrate_over_u(
            lambda u: general_inner(u, scenario, q).reshape(4 * n, -1), dist, breaks, tol)
        vals = res.value.reshape(4, n)
    else:
        raise ValueError(f"unknown method {method!r}")
    return MarketMetrics(
        load=vals[LOAD].copy(),
        revenue=vals[REVENUE].copy(),
        welfare=vals[WELFARE].copy(),
        measure=vals[MEASURE].copy(),
        error=res.error,
        evaluations=res.evaluations,
    )


def data_load(provider: int, scenario: MarketScenario, q, tol: float = 1e-9) -> float:
    return float(market_metrics(scenario, q, tol).load[provider])


def revenue(provider: int, scenario: MarketScenario, q, tol: float = 1e-9) -> float:
    return float(market_metrics(scenario, q, tol).revenue[provider])


def welfare(provider: int, scenario: MarketScenario, q, tol: float = 1e-9) -> float:
    return float(market_metrics(scenario, q, tol).welfare[provider])

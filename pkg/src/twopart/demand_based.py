"""Demand-based tariffs and their pay-as-you-go equivalents.

A demand-based tariff charges users according to their desirable demand
``u``.  For a fixed congestion level, every two-part tariff restricted to
the users of one demand ``u`` can be replaced by a per-unit price that
collects the same revenue with no more load.  Doing this for every ``u``
gives a demand-based pay-as-you-go schedule that, once the market
re-equilibrates, earns at least the original revenue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import EquilibriumResult, _solve_monotone
from .market import LOAD, REVENUE, integrate_over_u, monopoly_inner, monopoly_u_breakpoints
from .model import DomainError, Tariff, UserDistribution

CASE_1 = "case-1"
CASE_2 = "case-2"


class EquivalenceError(RuntimeError):
    """The revenue-matching price could not be bracketed."""


@dataclass(frozen=True)
class DemandBasedTariff:
    """Piecewise-constant tariff over demand bands ``[edges[k], edges[k+1])``."""

    edges: tuple[float, ...]
    tariffs: tuple[Tariff, ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(float(e) for e in self.edges))
        object.__setattr__(self, "tariffs", tuple(self.tariffs))
        if len(self.edges) != len(self.tariffs) + 1 or not self.tariffs:
            raise DomainError("need one tariff per band and len(edges) == bands + 1")
        if self.edges[0] != 0.0 or any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise DomainError("band edges must start at 0 and increase strictly")

    @classmethod
    def uniform(cls, tariff: Tariff, n_bands: int = 1, u_max: float = 1.0) -> "DemandBasedTariff":
        edges = np.linspace(0.0, u_max, n_bands + 1)
        return cls(tuple(edges), (tariff,) * n_bands)

    @property
    def n_bands(self) -> int:
        return len(self.tariffs)

    def band_of(self, u):
        idx = np.searchsorted(self.edges, u, side="right") - 1
        return np.clip(idx, 0, self.n_bands - 1)

    def components(self, u):
        idx = self.band_of(u)
        g = np.array([t.g for t in self.tariffs])[idx]
        f = np.array([t.f for t in self.tariffs])[idx]
        p = np.array([t.p for t in self.tariffs])[idx]
        return g, f, p

    def breakpoints(self, q: float, q0: float, dist: UserDistribution) -> list[float]:
        out = set(e for e in self.edges if 0.0 < e < dist.u_max)
        for lo, hi, t in zip(self.edges, self.edges[1:], self.tariffs):
            out.update(b for b in monopoly_u_breakpoints(q, q0, t, dist.u_max, dist.v_max)
                       if lo < b < hi)
        return sorted(out)


def _decay(q):
    return np.where(np.isinf(q), 0.0, np.exp(-np.minimum(q, 745.0)))


def _y(x, beta, v_max):
    """Revenue per unit of ``rho_I - rho_0`` at normalized threshold ``x``."""
    return x * (1.0 - np.clip(x / v_max, 0.0, 1.0) ** beta)


def payg_prices(u, g, f, p, q_i: float, q0: float, beta: float = 1.0, v_max: float = 1.0):
    """Vectorized per-demand pay-as-you-go prices and case tags.

    Returns ``(p_tilde, is_case2)``.  ``u`` and the tariff components are
    arrays of equal shape; demands with zero achievable demand get price 0.
    """
    u = np.asarray(u, dtype=float)
    g, f, p = (np.broadcast_to(np.asarray(x, dtype=float), u.shape) for x in (g, f, p))
    rho = u * _decay(q_i)
    rho0 = u * _decay(q0)
    with np.errstate(divide="ignore", invalid="ignore"):
        over = np.where(rho > g, rho - g, 0.0)
        p_case1 = np.where(rho > 0, (f + over * p) / rho, 0.0)
    with np.errstate(invalid="ignore"):
        case2 = (rho > g) & (g * p - f > rho0 * p) & (q_i < q0) & (rho > 0)
    if not case2.any():
        return p_case1, case2

    # Case 2: match the per-demand revenue with y(M p~) on the decreasing
    # branch of y, M = rho_I / (rho_I - rho_0).
    r2, r02 = rho[case2], rho0[case2]
    target = monopoly_inner(u[case2], q_i, q0, g[case2], f[case2], p[case2], beta, v_max)[REVENUE]
    level = target / (r2 - r02)
    x_lo = np.full(level.shape, v_max * (1.0 / (beta + 1.0)) ** (1.0 / beta))
    x_hi = np.full(level.shape, v_max)
    y_peak = _y(x_lo, beta, v_max)
    if np.any(level > y_peak * (1.0 + 1e-12) + 1e-300):
        raise EquivalenceError("per-demand revenue exceeds the pay-as-you-go maximum")
    for _ in range(200):
        mid = 0.5 * (x_lo + x_hi)
        above = _y(mid, beta, v_max) > level
        x_lo = np.where(above, mid, x_lo)
        x_hi = np.where(above, x_hi, mid)
        if np.all(x_hi - x_lo <= 1e-15 * v_max):
            break
    x = 0.5 * (x_lo + x_hi)
    out = p_case1.copy()
    out[case2] = x * (r2 - r02) / r2
    return out, case2


def payg_equivalent_price(u: float, tariff: Tariff, q_i: float, q0: float = math.inf,
                          dist: UserDistribution | None = None) -> tuple[float, str]:
    """Pay-as-you-go price matching ``tariff``'s revenue from users of demand ``u``."""
    dist = dist or UserDistribution()
    if u <= 0.0 or math.isinf(q_i):
        raise DomainError("achievable demand must be positive")
    price, case2 = payg_prices(np.array([u]), tariff.g, tariff.f, tariff.p, q_i, q0,
                               dist.beta, dist.v_max)
    return float(price[0]), (CASE_2 if case2[0] else CASE_1)


@dataclass(frozen=True)
class EquivalenceReport:
    u: float
    tariff: Tariff
    p_tilde: float
    case: str
    revenue_original: float
    revenue_payg: float
    load_original: float
    load_payg: float


def equivalence_report(u: float, tariff: Tariff, q_i: float, q0: float = math.inf,
                       dist: UserDistribution | None = None) -> EquivalenceReport:
    """Revenue and load from demand-``u`` users under ``tariff`` and its equivalent.

    Values are densities in ``u`` (inner integrals times ``F_u'(u)``).
    """
    dist = dist or UserDistribution()
    p_tilde, case = payg_equivalent_price(u, tariff, q_i, q0, dist)
    dens = dist.density_u(u)
    orig = monopoly_inner(np.array([u]), q_i, q0, tariff.g, tariff.f, tariff.p,
                          dist.beta, dist.v_max)[:, 0] * dens
    payg = monopoly_inner(np.array([u]), q_i, q0, 0.0, 0.0, p_tilde,
                          dist.beta, dist.v_max)[:, 0] * dens
    return EquivalenceReport(u, tariff, p_tilde, case, float(orig[REVENUE]), float(payg[REVENUE]),
                             float(orig[LOAD]), float(payg[LOAD]))


@dataclass(frozen=True)
class PaygSchedule:
    """Demand-based pay-as-you-go prices built from ``source`` at congestion ``q_i``."""

    source: DemandBasedTariff
    q_i: float
    q0: float
    dist: UserDistribution

    def components(self, u):
        g, f, p = self.source.components(u)
        price, _ = payg_prices(u, g, f, p, self.q_i, self.q0, self.dist.beta, self.dist.v_max)
        zeros = np.zeros_like(price)
        return zeros, zeros, price

    def breakpoints(self, q: float, q0: float, dist: UserDistribution) -> list[float]:
        # Kinks of the schedule itself sit where the source tariff has them.
        return sorted(set(self.source.breakpoints(self.q_i, q0, dist))
                      | set(self.source.breakpoints(q, q0, dist)))


def demand_based_metrics(tariff, q: float, q0: float, dist: UserDistribution,
                         tol: float = 1e-9) -> np.ndarray:
    """``[load, revenue, welfare, measure]`` of a demand-based tariff at congestion ``q``."""
    def inner(u):
        g, f, p = tariff.components(u)
        return monopoly_inner(u, q, q0, g, f, p, dist.beta, dist.v_max)

    return integrate_over_u(inner, dist, tariff.breakpoints(q, q0, dist), tol).value


def solve_demand_based_equilibrium(tariff, capacity: float, q0: float = math.inf,
                                   dist: UserDistribution | None = None, tol: float = 1e-10,
                                   quad_tol: float = 1e-9, max_iter: int = 200,
                                   method: str = "bisect") -> EquilibriumResult:
    """Unique congestion equilibrium under a demand-based tariff."""
    dist = dist or UserDistribution()
    if not (math.isfinite(capacity) and capacity > 0.0):
        raise DomainError("capacity must be finite and > 0")

    def load(q):
        return float(demand_based_metrics(tariff, q, q0, dist, quad_tol)[LOAD])

    return _solve_monotone(load, capacity, q0, tol, max_iter, method)


@dataclass(frozen=True)
class DominanceReport:
    q_original: float
    q_payg: float
    revenue_original: float
    revenue_payg: float
    load_original: float
    load_payg: float
    holds: bool


def verify_payg_dominance(tariff: DemandBasedTariff, capacity: float, q0: float = math.inf,
                          dist: UserDistribution | None = None, tol: float = 1e-8,
                          quad_tol: float = 1e-11) -> DominanceReport:
    """Re-equilibrate under the constructed pay-as-you-go schedule and compare."""
    dist = dist or UserDistribution()
    eq0 = solve_demand_based_equilibrium(tariff, capacity, q0, dist, quad_tol=quad_tol)
    q_orig = eq0.q[0]
    m0 = demand_based_metrics(tariff, q_orig, q0, dist, quad_tol)
    schedule = PaygSchedule(tariff, q_orig, q0, dist)
    eq1 = solve_demand_based_equilibrium(schedule, capacity, q0, dist, quad_tol=quad_tol)
    q_new = eq1.q[0]
    m1 = demand_based_metrics(schedule, q_new, q0, dist, quad_tol)
    holds = q_new <= q_orig + tol and m1[REVENUE] >= m0[REVENUE] - tol
    return DominanceReport(q_orig, q_new, float(m0[REVENUE]), float(m1[REVENUE]),
                           float(m0[LOAD]), float(m1[LOAD]), bool(holds))


@dataclass(frozen=True)
class ProbeReport:
    p_star: float
    base_revenue: float
    max_gain: float
    best_band: int
    best_sign: int
    gains: tuple[float, ...]


def check_constant_price_optimality(p_star: float, capacity: float, q0: float = math.inf,
                                    dist: UserDistribution | None = None, n_bands: int = 4,
                                    eps: float = 0.02, quad_tol: float = 1e-11) -> ProbeReport:
    """Perturb each band of a constant pay-as-you-go price by ``+-eps``.

    Returns the largest equilibrium revenue gain over the constant price; a
    revenue-optimal constant price should admit none.
    """
    dist = dist or UserDistribution()
    base_tariff = Tariff.pay_as_you_go(p_star)

    def revenue_of(tariffs):
        dbt = DemandBasedTariff(tuple(np.linspace(0.0, dist.u_max, n_bands + 1)), tariffs)
        eq = solve_demand_based_equilibrium(dbt, capacity, q0, dist, quad_tol=quad_tol)
        return float(demand_based_metrics(dbt, eq.q[0], q0, dist, quad_tol)[REVENUE])

    base = revenue_of((base_tariff,) * n_bands)
    gains = []
    best = (-math.inf, -1, 0)
    for band in range(n_bands):
        for sign in (1, -1):
            price = max(p_star + sign * eps, 0.0)
            tariffs = [base_tariff] * n_bands
            tariffs[band] = Tariff.pay_as_you_go(price)
            gain = revenue_of(tuple(tariffs)) - base
            gains.append(gain)
            if gain > best[0]:
                best = (gain, band, sign)
    return ProbeReport(p_star, base, best[0], best[1], best[2], tuple(gains))

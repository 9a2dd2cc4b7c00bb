"""Brute-force reference: a deterministic grid of weighted discrete agents.

Every integral of the market module becomes a weighted sum over agents
placed at cell midpoints, each routed to its preferred provider one by one.
Nothing here reuses the interval machinery of :mod:`twopart.market`, so the
two paths check each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .equilibrium import EquilibriumResult, _solve_monotone
from .market import FREE, MarketScenario, ProviderConfig
from .model import Tariff, UserDistribution, UserType


@dataclass(frozen=True)
class AgentGrid:
    """Agents at the midpoints of an ``n_u x n_v`` cell grid.

    The weight of agent ``(i, j)`` is the measure of its cell, stored in
    product form as ``u_weights[i] * v_weights[j]``.
    """

    u: np.ndarray
    v: np.ndarray
    u_weights: np.ndarray
    v_weights: np.ndarray

    @property
    def resolution(self) -> tuple[int, int]:
        return self.u.size, self.v.size

    @property
    def total_weight(self) -> float:
        return float(self.u_weights.sum() * self.v_weights.sum())

    def weights(self) -> np.ndarray:
        return np.outer(self.u_weights, self.v_weights)

    def agents(self):
        """Yield ``(UserType, weight)`` pairs in row-major order."""
        for ui, wu in zip(self.u, self.u_weights):
            for vj, wv in zip(self.v, self.v_weights):
                yield UserType(float(ui), float(vj)), float(wu * wv)


def build_grid(dist: UserDistribution, n_u: int, n_v: int) -> AgentGrid:
    if n_u < 1 or n_v < 1:
        raise ValueError("grid needs at least one cell per axis")
    eu = np.linspace(0.0, dist.u_max, n_u + 1)
    ev = np.linspace(0.0, dist.v_max, n_v + 1)
    wu = dist.mass * np.diff((eu / dist.u_max) ** dist.alpha)
    wv = np.diff((ev / dist.v_max) ** dist.beta)
    return AgentGrid(0.5 * (eu[1:] + eu[:-1]), 0.5 * (ev[1:] + ev[:-1]), wu, wv)


@dataclass(frozen=True)
class OracleMetrics:
    load: np.ndarray
    revenue: np.ndarray
    welfare: np.ndarray
    measure: np.ndarray


def oracle_metrics(grid: AgentGrid, scenario: MarketScenario, q, chunk: int = 128) -> OracleMetrics:
    """Route every agent and sum weighted usage, charge and value."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    n = scenario.n
    totals = np.zeros((4, n))
    decay0 = 0.0 if math.isinf(scenario.q0) else math.exp(-scenario.q0)
    vv = grid.v[None, :]
    for start in range(0, grid.u.size, chunk):
        uu = grid.u[start:start + chunk, None]
        w = grid.u_weights[start:start + chunk, None] * grid.v_weights[None, :]
        best_util = vv * (uu * decay0)
        winner = np.full(best_util.shape, FREE)
        usages, bills = [], []
        for i, pc in enumerate(scenario.providers):
            t = pc.tariff
            rho = uu * math.exp(-q[i])
            use = np.where((rho > t.g) & (vv < t.p), t.g, rho)
            bill = t.f + t.p * np.maximum(use - t.g, 0.0) if math.isfinite(t.g) else t.f + 0.0 * use
            util = vv * use - bill
            take = (util > best_util) | ((winner == FREE) & (util == best_util))
            winner = np.where(take, i, winner)
            best_util = np.where(take, util, best_util)
            usages.append(use)
            bills.append(bill)
        for i in range(n):
            mine = w * (winner == i)
            totals[0, i] += (mine * usages[i]).sum()
            totals[1, i] += (mine * bills[i]).sum()
            totals[2, i] += (mine * vv * usages[i]).sum()
            totals[3, i] += mine.sum()
    return OracleMetrics(*totals)


def oracle_equilibrium(grid: AgentGrid, provider: ProviderConfig, q0: float = math.inf,
                       tol: float = 1e-7, max_iter: int = 200) -> EquilibriumResult:
    """Monopoly equilibrium over the discrete agent measure (bisection).

    The discrete load is a step function of congestion, so the residual at
    the returned point is bounded by the largest single-agent load jump.
    """
    scenario = MarketScenario((provider,), q0)

    def load(q):
        return float(oracle_metrics(grid, scenario, [q]).load[0])

    return _solve_monotone(load, provider.capacity, q0, tol, max_iter, "bisect")


def normalize_market(scenario: MarketScenario, k: float = 1.0) -> MarketScenario:
    """Map a market on ``[0,U] x [0,V]`` to the unit square.

    Fees, caps and capacities are rescaled (``f/(UV)``, ``g/U``, ``p/V``,
    ``k c/U``) and the user measure is multiplied by ``k``.  Equilibrium
    congestion is unchanged and loads scale by ``k/U``.
    """
    if not k > 0:
        raise ValueError("k must be positive")
    dist = scenario.distribution
    U, V = dist.u_max, dist.v_max
    providers = tuple(
        ProviderConfig(Tariff(pc.tariff.g / U, pc.tariff.f / (U * V), pc.tariff.p / V),
                       k * pc.capacity / U)
        for pc in scenario.providers
    )
    new_dist = UserDistribution(dist.alpha, dist.beta, 1.0, 1.0, k * dist.mass)
    return MarketScenario(providers, scenario.q0, new_dist)

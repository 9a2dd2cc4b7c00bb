"""Congestion equilibria: ``q_i = Q(D_i(q), c_i)`` for every provider."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .market import MarketScenario, ProviderConfig, market_metrics
from .model import UserDistribution, congestion

log = logging.getLogger(__name__)


class EquilibriumError(RuntimeError):
    """An invariant the solver relies on was violated."""


@dataclass(frozen=True)
class EquilibriumResult:
    q: tuple[float, ...]
    d: tuple[float, ...]
    residual: float
    iterations: int
    converged: bool
    message: str = ""


def _solve_monotone(load, capacity: float, q0: float, tol: float,
                    max_iter: int, method: str) -> EquilibriumResult:
    """Root of ``phi(q) = q - Q(load(q), c)`` with ``load`` non-increasing in ``q``."""
    calls = [0]

    def counted(q):
        calls[0] += 1
        return load(q)

    d_zero = counted(0.0)
    if d_zero <= 0.0:
        return EquilibriumResult((0.0,), (0.0,), 0.0, 1, True, "empty market share")

    # phi(0) < 0, and phi(Q(D(0))) >= 0 because D is non-increasing.
    hi = congestion(d_zero, capacity)
    bounded_by_q0 = hi >= q0
    if bounded_by_q0:
        hi = q0
    lo = 0.0

    def phi(q):
        return q - congestion(counted(q), capacity)

    if method == "brent" and not bounded_by_q0:
        try:
            q = brentq(phi, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=max_iter)
        except ValueError as exc:
            # phi(0) < 0 <= phi(hi) holds whenever the load is non-increasing
            raise EquilibriumError(f"equilibrium bracket [0, {hi:.6g}] failed: {exc}") from exc
        d = counted(q)
        res = abs(q - congestion(d, capacity))
        if res <= tol:
            return EquilibriumResult((q,), (d,), res, calls[0], True)
        log.debug("brent residual %.2e above tol; falling back to bisection", res)
    elif method not in ("bisect", "brent"):
        raise ValueError(f"unknown method {method!r}")

    # Bisection on the sign of phi; the endpoint q0 itself is never
    # evaluated because users are indifferent there.
    best = None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        d = counted(mid)
        val = mid - congestion(d, capacity)
        if best is None or abs(val) < best[2]:
            best = (mid, d, abs(val))
        if abs(val) <= tol:
            return EquilibriumResult((mid,), (d,), abs(val), calls[0], True)
        if val < 0:
            lo = mid
        else:
            hi = mid
        if not lo < 0.5 * (lo + hi) < hi:
            break
    q, d, res = best
    msg = "bracket collapsed above tolerance"
    if bounded_by_q0 and q0 - q < 1e-6 * max(1.0, q0):
        msg = "no interior fixed point: load jumps at the free provider's congestion"
    return EquilibriumResult((q,), (d,), res, calls[0], False, msg)


def solve_monopoly(provider: ProviderConfig, q0: float = math.inf,
                   dist: UserDistribution | None = None, tol: float = 1e-10,
                   quad_tol: float = 1e-9, max_iter: int = 200,
                   method: str = "bisect") -> EquilibriumResult:
    """Unique equilibrium congestion of a single provider.

    The map ``q -> q - D(q)/c`` is non-decreasing, so its root is bracketed
    by ``[0, min(q0, D(0)/c)]``.  ``method="brent"`` swaps bisection for
    Brent's bracketing iteration (same bracket, fewer load evaluations).
    """
    scenario = MarketScenario((provider,), q0, dist or UserDistribution())

    def load(q):
        return float(market_metrics(scenario, [q], quad_tol).load[0])

    return _solve_monotone(load, provider.capacity, q0, tol, max_iter, method)


def solve_oligopoly(scenario: MarketScenario, tol: float = 1e-10, damping: float = 0.5,
                    max_iters: int = 10_000, quad_tol: float = 1e-9,
                    stall_window: int = 50) -> EquilibriumResult:
    """Damped fixed-point iteration ``q <- (1-lam) q + lam Q(D(q))`` from ``q = 0``.

    Multiple equilibria may exist when several providers compete; this
    returns the one reached from zero congestion.  Non-convergence is
    reported through ``converged`` and ``residual`` with the best iterate.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must lie in (0, 1], got {damping}")
    if max_iters <= 0:
        raise ValueError("max_iters must be positive")
    caps = scenario.capacities
    q = np.zeros(scenario.n)
    best = None
    stalled = 0
    for it in range(1, max_iters + 1):
        d = market_metrics(scenario, q, quad_tol).load
        target = np.array([congestion(di, ci) for di, ci in zip(d, caps)])
        res = float(np.max(np.abs(q - target)))
        if best is None or res < best[2]:
            best = (q.copy(), d.copy(), res)
            stalled = 0
        else:
            stalled += 1
        if res <= tol:
            return EquilibriumResult(tuple(q.tolist()), tuple(d.tolist()), res, it, True)
        if stalled >= stall_window:
            q_best, d_best, r_best = best
            return EquilibriumResult(tuple(q_best.tolist()), tuple(d_best.tolist()), r_best, it,
                                     False, f"residual stalled for {stall_window} iterations")
        q = (1.0 - damping) * q + damping * target
    q_best, d_best, r_best = best
    return EquilibriumResult(tuple(q_best.tolist()), tuple(d_best.tolist()), r_best, max_iters,
                             False, "iteration budget exhausted")


def solve_equilibrium(scenario: MarketScenario, tol: float = 1e-10, **kwargs) -> EquilibriumResult:
    """Dispatch to the monopoly or oligopoly solver."""
    if scenario.n == 1:
        keys = ("quad_tol", "max_iter", "method")
        return solve_monopoly(scenario.providers[0], scenario.q0, scenario.distribution, tol,
                              **{k: v for k, v in kwargs.items() if k in keys})
    keys = ("damping", "max_iters", "quad_tol", "stall_window")
    return solve_oligopoly(scenario, tol, **{k: v for k, v in kwargs.items() if k in keys})

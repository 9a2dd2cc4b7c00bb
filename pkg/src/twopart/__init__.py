"""Congestion equilibria and two-part tariffs for network service markets."""

__version__ = "0.1.0"

from .equilibrium import EquilibriumResult, solve_equilibrium, solve_monopoly, solve_oligopoly
from .market import (FREE, MarketMetrics, MarketScenario, ProviderConfig, best_provider, data_load,
                     market_metrics, revenue, share_slice, welfare)
from .model import (UNLIMITED, DomainError, Tariff, UserDistribution, UserType, achievable_demand,
                    charge, congestion, inverse_congestion, optimal_usage, optimal_utility)
from .optimize import CapSweepRow, FeeOptimum, SearchConfig, optimize_fees, sweep_cap

__all__ = [
    "FREE", "UNLIMITED", "CapSweepRow", "DomainError", "EquilibriumResult", "FeeOptimum",
    "MarketMetrics", "MarketScenario", "ProviderConfig", "SearchConfig", "Tariff",
    "UserDistribution", "UserType", "achievable_demand", "best_provider", "charge", "congestion",
    "data_load", "inverse_congestion", "market_metrics", "optimal_usage", "optimal_utility",
    "optimize_fees", "revenue", "share_slice", "solve_equilibrium", "solve_monopoly",
    "solve_oligopoly", "sweep_cap", "welfare",
]

"""Randomized property checks over the whole model.

Each check draws its own cases from a seeded generator and returns a
:class:`CheckResult`.  Hard checks gate the ``verify`` command; soft checks
record sweep-level observations that the model is not required to obey.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .demand_based import (CASE_1, DemandBasedTariff, check_constant_price_optimality,
                       equivalence_report, verify_payg_dominance)
from .equilibrium import solve_monopoly
from .market import MarketScenario, ProviderConfig, market_metrics
from .model import UNLIMITED, Tariff, UserDistribution
from .optimize import REVENUE, SearchConfig, bracket_violations, optimize_fees, soft_violations, sweep_cap
from .oracle import normalize_market


@dataclass(frozen=True)
class CheckResult:
    name: str
    hard: bool
    passed: bool
    cases: int
    detail: str = ""
    counterexample: dict = field(default_factory=dict)


# -- random instances -----------------------------------------------------

def random_tariff(rng: np.random.Generator) -> Tariff:
    """A tariff whose load is continuous in congestion.

    ``f = 0`` with a positive cap makes the load jump at the free provider's
    congestion, so ``f = 0`` is only drawn together with ``g = 0``.
    """
    kind = rng.random()
    if kind < 0.15:
        return Tariff.pay_as_you_go(rng.uniform(0.0, 1.0))
    g = UNLIMITED if kind > 0.85 else rng.uniform(0.0, 1.0)
    return Tariff(g, rng.uniform(0.005, 0.5), rng.uniform(0.0, 1.0))


def random_distribution(rng: np.random.Generator) -> UserDistribution:
    return UserDistribution(alpha=rng.uniform(0.5, 3.0), beta=rng.uniform(0.5, 3.0))


def random_q0(rng: np.random.Generator) -> float:
    return math.inf if rng.random() < 0.3 else rng.uniform(0.2, 3.0)


def random_monopoly(rng: np.random.Generator) -> MarketScenario:
    return MarketScenario.monopoly(random_tariff(rng), rng.uniform(0.1, 2.0), random_q0(rng),
                                   random_distribution(rng))


_RAISES = {"f": -1, "p": -1, "c": -1, "g": +1, "q0": +1}


def random_pair(rng: np.random.Generator):
    """Two monopoly scenarios differing in one raised coordinate.

    Returns ``(low, high, name, sign)``: ``sign`` is the direction in which
    equilibrium congestion must move when that coordinate goes up.
    """
    base = random_monopoly(rng)
    pc = base.providers[0]
    t = pc.tariff
    name = str(rng.choice(list(_RAISES)))
    if name == "g" and math.isinf(t.g):
        t = t.with_(g=rng.uniform(0.0, 1.0))
        base = base.with_tariff(t)
    if name == "q0" and math.isinf(base.q0):
        base = MarketScenario(base.providers, rng.uniform(0.2, 3.0), base.distribution)
    if name == "f" and t.f == 0.0:
        # keep the load continuous on both sides
        t = t.with_(f=rng.uniform(0.005, 0.3))
        base = base.with_tariff(t)
    step = rng.uniform(0.01, 0.3)
    if name == "f":
        high = base.with_tariff(t.with_(f=t.f + step))
    elif name == "p":
        high = base.with_tariff(t.with_(p=t.p + step))
    elif name == "g":
        high = base.with_tariff(t.with_(g=UNLIMITED if rng.random() < 0.2 else t.g + step))
    elif name == "c":
        high = MarketScenario((ProviderConfig(t, pc.capacity + step),), base.q0, base.distribution)
    else:
        q0 = math.inf if rng.random() < 0.2 else base.q0 + step
        high = MarketScenario(base.providers, q0, base.distribution)
    return base, high, name, _RAISES[name]


def random_scaled_case(rng: np.random.Generator):
    """A market on ``[0,U] x [0,V]`` and a measure multiplier ``k``."""
    U, V, k = rng.uniform(0.5, 3.0, size=3)
    unit = random_monopoly(rng)
    t = unit.providers[0].tariff
    dist = UserDistribution(unit.distribution.alpha, unit.distribution.beta, U, V)
    scaled = MarketScenario.monopoly(Tariff(t.g * U, t.f * U * V, t.p * V),
                                     unit.providers[0].capacity * U, unit.q0, dist)
    return scaled, float(k)


def random_equivalence_instance(rng: np.random.Generator, force_case2: bool = False):
    """``(u, tariff, q_i, q0, dist)`` for the per-demand construction."""
    dist = UserDistribution(beta=rng.uniform(0.5, 3.0))
    u = rng.uniform(0.05, 1.0)
    q_i = rng.uniform(0.0, 2.0)
    if force_case2:
        q0 = q_i + rng.uniform(0.1, 2.0) if rng.random() < 0.7 else math.inf
        rho, rho0 = u * math.exp(-q_i), (0.0 if math.isinf(q0) else u * math.exp(-q0))
        g = rng.uniform(rho0, rho)
        p = rng.uniform(0.05, 1.0)
        f = rng.uniform(0.0, 0.95) * p * (g - rho0)
        return u, Tariff(g, f, p), q_i, q0, dist
    q0 = math.inf if rng.random() < 0.3 else rng.uniform(0.0, 3.0)
    return u, random_tariff(rng), q_i, q0, dist


def random_banded_tariff(rng: np.random.Generator, bands: int, u_max: float = 1.0) -> DemandBasedTariff:
    edges = np.linspace(0.0, u_max, bands + 1)
    return DemandBasedTariff(tuple(edges), tuple(random_tariff(rng) for _ in range(bands)))


# -- checks ---------------------------------------------------------------

def _tariff_dict(t: Tariff) -> dict:
    return {"g": t.g, "f": t.f, "p": t.p}


def _scenario_dict(s: MarketScenario) -> dict:
    pc = s.providers[0]
    d = s.distribution
    return {**_tariff_dict(pc.tariff), "c": pc.capacity, "q0": s.q0, "alpha": d.alpha,
            "beta": d.beta, "u_max": d.u_max, "v_max": d.v_max}


def check_fixed_point(rng: np.random.Generator, cases: int, tol: float = 1e-10,
                      quad_tol: float = 1e-9, bound: float = 1e-9) -> CheckResult:
    """Equilibria exist, satisfy ``q = d/c`` and sit strictly below ``q0``.

    The load is recomputed at the returned congestion and the ratio taken
    directly, so a solver using a wrong congestion map is caught.
    """
    worst = 0.0
    for _ in range(cases):
        scen = random_monopoly(rng)
        pc = scen.providers[0]
        eq = solve_monopoly(pc, scen.q0, scen.distribution, tol=tol, quad_tol=quad_tol)
        q = eq.q[0]
        d = float(market_metrics(scen, [q], quad_tol).load[0])
        res = abs(q - d / pc.capacity)
        worst = max(worst, res)
        if not eq.converged or res > bound or (d > 0 and not q < scen.q0):
            why = eq.message if not eq.converged else f"|q - d/c| = {res:.3e}, q0 = {scen.q0}"
            return CheckResult("fixed-point residual", True, False, cases, why,
                               {**_scenario_dict(scen), "q": q, "d": d})
    return CheckResult("fixed-point residual", True, True, cases, f"max |q - d/c| = {worst:.3e}")


def check_monotonicity(rng: np.random.Generator, pairs: int, tol: float = 1e-10,
                       quad_tol: float = 1e-9, slack: float = 2e-9) -> CheckResult:
    for _ in range(pairs):
        low, high, name, sign = random_pair(rng)
        q_lo = solve_monopoly(low.providers[0], low.q0, low.distribution, tol, quad_tol).q[0]
        q_hi = solve_monopoly(high.providers[0], high.q0, high.distribution, tol, quad_tol).q[0]
        if sign * (q_hi - q_lo) < -slack:
            return CheckResult("congestion monotone in parameters", True, False, pairs,
                               f"raising {name} moved q from {q_lo:.12g} to {q_hi:.12g}",
                               {"low": _scenario_dict(low), "high": _scenario_dict(high)})
    return CheckResult("congestion monotone in parameters", True, True, pairs)


def check_normalization(rng: np.random.Generator, cases: int, bound: float = 1e-9,
                        quad_tol: float = 1e-12) -> CheckResult:
    worst = 0.0
    for _ in range(cases):
        scaled, k = random_scaled_case(rng)
        unit = normalize_market(scaled, k)
        a = solve_monopoly(scaled.providers[0], scaled.q0, scaled.distribution, tol=1e-12,
                           quad_tol=quad_tol)
        b = solve_monopoly(unit.providers[0], unit.q0, unit.distribution, tol=1e-12,
                           quad_tol=quad_tol)
        U = scaled.distribution.u_max
        dq = abs(a.q[0] - b.q[0])
        dd = abs(a.d[0] * k / U - b.d[0])
        worst = max(worst, dq, dd)
        if dq > bound or dd > bound:
            return CheckResult("normalization invariance", True, False, cases,
                               f"|dq| = {dq:.3e}, |d scaling| = {dd:.3e}",
                               {**_scenario_dict(scaled), "k": k})
    return CheckResult("normalization invariance", True, True, cases, f"max deviation {worst:.3e}")


def check_equivalence(rng: np.random.Generator, cases: int) -> CheckResult:
    """Per-demand pay-as-you-go equivalents, half of them forced into case 2."""
    worst = {CASE_1: 0.0, "case-2": 0.0}
    for n in range(cases):
        u, t, q_i, q0, dist = random_equivalence_instance(rng, force_case2=n % 2 == 1)
        rep = equivalence_report(u, t, q_i, q0, dist)
        gap = abs(rep.revenue_payg - rep.revenue_original)
        worst[rep.case] = max(worst[rep.case], gap)
        if rep.case == CASE_1:
            ok = gap <= 1e-12 and abs(rep.load_payg - rep.load_original) <= 1e-12
        else:
            ok = gap <= 1e-8 and rep.load_payg <= rep.load_original + 1e-12
        if not ok:
            return CheckResult("per-demand pay-as-you-go equivalence", True, False, cases,
                               f"{rep.case}: revenue gap {gap:.3e}, loads "
                               f"{rep.load_payg:.12g} vs {rep.load_original:.12g}",
                               {"u": u, **_tariff_dict(t), "q_i": q_i, "q0": q0, "beta": dist.beta})
    return CheckResult("per-demand pay-as-you-go equivalence", True, True, cases,
                       f"max revenue gap case-1 {worst[CASE_1]:.2e}, case-2 {worst['case-2']:.2e}")


def check_dominance(rng: np.random.Generator, cases: int, bands: int,
                    bound: float = 1e-6) -> CheckResult:
    for _ in range(cases):
        tariff = random_banded_tariff(rng, bands)
        c, q0 = rng.uniform(0.2, 2.0), random_q0(rng)
        rep = verify_payg_dominance(tariff, c, q0)
        if rep.revenue_payg < rep.revenue_original - bound:
            return CheckResult("demand-based pay-as-you-go dominance", True, False, cases,
                               f"revenue {rep.revenue_payg:.12g} < {rep.revenue_original:.12g}",
                               {"bands": [_tariff_dict(t) for t in tariff.tariffs], "c": c, "q0": q0})
    return CheckResult("demand-based pay-as-you-go dominance", True, True, cases)


def optimal_payg_price(capacity: float = 1.0, q0: float = 1.0,
                       search: SearchConfig = SearchConfig()) -> float:
    template = MarketScenario.monopoly(Tariff.pay_as_you_go(0.0), capacity, q0)
    return optimize_fees(0.0, template, REVENUE, search, fix_f=0.0).p_opt


def check_constant_price(bands: int = 4, eps: float = 0.02, bound: float = 1e-4,
                         search: SearchConfig = SearchConfig()) -> CheckResult:
    p_star = optimal_payg_price(search=search)
    at_opt = check_constant_price_optimality(p_star, 1.0, 1.0, n_bands=bands, eps=eps)
    at_half = check_constant_price_optimality(p_star / 2, 1.0, 1.0, n_bands=bands, eps=eps)
    ok = at_opt.max_gain <= bound and at_half.max_gain > 0.0
    detail = f"p* = {p_star:.6g}: gain {at_opt.max_gain:.3e}; at p*/2: gain {at_half.max_gain:.3e}"
    return CheckResult("constant pay-as-you-go price optimal", True, ok, 2, detail,
                       {} if ok else {"p_star": p_star, "bands": bands, "eps": eps})


def check_brackets(g_grid, search: SearchConfig, jobs: int = 1, tol: float = 1e-4):
    """Cap sweeps at the two reference calibrations; returns hard and soft results."""
    out = []
    for label, c, q0, column in (("revenue", 1.0, 1.0, "R_star"),
                                 ("welfare", 0.3, math.inf, "S_circ")):
        template = MarketScenario.monopoly(Tariff(0.0, 0.0, 0.0), c, q0)
        rows = sweep_cap(g_grid, template, search, jobs)
        failed = [r for r in rows if r.error]
        values = [getattr(r, column) for r in rows]
        gs = [r.g for r in rows]
        problems = [f"g={r.g}: {r.error}" for r in failed] or bracket_violations(values, gs, tol)
        fee0 = next(r.f_star if label == "revenue" else r.f_circ for r in rows if r.g == 0.0)
        if fee0 > 1e-3:
            problems.append(f"lump-sum fee at g=0 is {fee0:.3e}")
        out.append(CheckResult(f"{label} bracket over caps", True, not problems, len(rows),
                               "; ".join(problems), {"c": c, "q0": q0} if problems else {}))
        soft = soft_violations(rows) if label == "welfare" else []
        if label == "welfare":
            out.append(CheckResult("welfare-optimal fees below revenue-optimal", False, not soft,
                                   len(rows), "; ".join(soft)))
    return out


def run_all(settings, g_grid, search: SearchConfig, jobs: int = 1, seed: int | None = None):
    """All checks in a fixed order from one seed."""
    rng = np.random.default_rng(settings.seed if seed is None else seed)
    results = [
        check_fixed_point(rng, settings.equilibrium_cases),
        check_monotonicity(rng, settings.monotone_pairs),
        check_normalization(rng, settings.normalization_cases),
        check_equivalence(rng, settings.equivalence_cases),
        check_dominance(rng, settings.dominance_cases, settings.bands),
        check_constant_price(settings.probe_bands, settings.probe_eps, search=search),
    ]
    if settings.sweeps:
        results.extend(check_brackets(g_grid, search, jobs))
    return results

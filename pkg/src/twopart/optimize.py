"""Revenue- and welfare-optimal fees at a fixed data cap, and sweeps over the cap.

The objective ``(f, p) -> R`` (or ``S``) at fixed ``g`` goes through an
equilibrium solve and is neither known to be concave nor unimodal, so the
search is a coarse grid followed by bounded Nelder-Mead restarts from the
best cells.  Results are the best point found, never a certificate.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .equilibrium import solve_monopoly
from .market import MarketScenario, market_metrics
from .model import UNLIMITED, Tariff

log = logging.getLogger(__name__)

REVENUE = "revenue"
WELFARE = "welfare"


@dataclass(frozen=True)
class SearchConfig:
    f_max: float = 1.0
    p_max: float = 1.0
    n_f: int = 21
    n_p: int = 21
    n_starts: int = 5
    xatol: float = 1e-5
    fatol: float = 1e-12
    basin_tol: float = 1e-9
    max_refine_iter: int = 400
    eq_tol: float = 1e-10
    quad_tol: float = 1e-9

    def __post_init__(self):
        if self.f_max <= 0 or self.p_max <= 0:
            raise ValueError("fee bounds must be positive")
        if self.n_f < 2 or self.n_p < 2 or self.n_starts < 1:
            raise ValueError("grid needs >= 2 points per axis and >= 1 start")


@dataclass(frozen=True)
class FeeOptimum:
    g: float
    f_opt: float
    p_opt: float
    objective: float
    objective_kind: str
    evaluations: int
    refinement_depth: int
    heuristic: bool = True
    basins: tuple[tuple[float, float, float], ...] = ()
    probes: tuple[tuple[float, float, float], ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class CapSweepRow:
    g: float
    f_star: float
    p_star: float
    R_star: float
    S_at_Rstar: float
    f_circ: float
    p_circ: float
    S_circ: float
    error: str = ""


def evaluate(template: MarketScenario, tariff: Tariff, search: SearchConfig = SearchConfig()):
    """Equilibrium metrics of the single provider in ``template`` under ``tariff``.

    Returns ``(revenue, welfare, equilibrium)``.
    """
    scen = template.with_tariff(tariff)
    pc = scen.providers[0]
    eq = solve_monopoly(pc, scen.q0, scen.distribution, tol=search.eq_tol,
                        quad_tol=search.quad_tol, method="brent")
    m = market_metrics(scen, eq.q, search.quad_tol)
    return float(m.revenue[0]), float(m.welfare[0]), eq


def _cap_binds(g: float, template: MarketScenario) -> bool:
    return g < template.distribution.u_max


def optimize_fees(g: float, template: MarketScenario, objective_kind: str = REVENUE,
                  search: SearchConfig = SearchConfig(), fix_f: float | None = None,
                  fix_p: float | None = None) -> FeeOptimum:
    """Maximize revenue or welfare over ``(f, p) >= 0`` at data cap ``g``.

    ``fix_f``/``fix_p`` pin a fee and search the other one only.  When the
    cap can never bind (``g >= u_max``) the per-unit fee has no effect and
    is pinned to zero, which makes every flat-rate cap return the same row.
    """
    if objective_kind not in (REVENUE, WELFARE):
        raise ValueError(f"objective_kind must be {REVENUE!r} or {WELFARE!r}")
    if template.n != 1:
        raise ValueError("fee optimization is defined for a single provider")
    if not _cap_binds(g, template) and fix_p is None:
        fix_p = 0.0
    pick = 0 if objective_kind == REVENUE else 1
    cache: dict[tuple[float, float], float] = {}

    def value(f: float, p: float) -> float:
        key = (float(f), float(p))
        if key not in cache:
            rev_wel_eq = evaluate(template, Tariff(g, key[0], key[1]), search)
            cache[key] = rev_wel_eq[pick]
        return cache[key]

    free = [name for name, fixed in (("f", fix_f), ("p", fix_p)) if fixed is None]
    bounds = {"f": (0.0, search.f_max), "p": (0.0, search.p_max)}
    sizes = {"f": search.n_f, "p": search.n_p}

    def full(x) -> tuple[float, float]:
        it = iter(np.clip(x, [bounds[n][0] for n in free], [bounds[n][1] for n in free]))
        f = fix_f if fix_f is not None else float(next(it))
        p = fix_p if fix_p is not None else float(next(it))
        return f, p

    if not free:
        f, p = full([])
        v = value(f, p)
        return FeeOptimum(g, f, p, v, objective_kind, 1, 0, False, ((f, p, v),), ((f, p, v),))

    axes = [np.linspace(*bounds[n], sizes[n]) for n in free]
    grid = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    scored = sorted(((value(*full(x)), tuple(x)) for x in grid),
                    key=lambda t: (-t[0], t[1]))
    steps = np.array([a[1] - a[0] for a in axes])

    basins = []
    depth = 0
    for _, x0 in scored[:search.n_starts]:
        x0 = np.array(x0)
        simplex = [x0]
        for k in range(len(free)):
            step = np.zeros(len(free))
            step[k] = steps[k] if x0[k] + steps[k] <= bounds[free[k]][1] else -steps[k]
            simplex.append(x0 + 0.5 * step)
        res = minimize(lambda x: -value(*full(x)), x0, method="Nelder-Mead",
                       bounds=[bounds[n] for n in free],
                       options={"xatol": search.xatol, "fatol": search.fatol,
                                "maxiter": search.max_refine_iter,
                                "initial_simplex": np.array(simplex)})
        depth = max(depth, int(res.nit))
        f, p = full(res.x)
        basins.append((f, p, value(f, p)))

    best_val = max(v for v in cache.values())
    for (f, p), v in cache.items():
        if v == best_val and not any((f, p) == (b[0], b[1]) for b in basins):
            basins.append((f, p, v))
    near = [b for b in basins if b[2] >= best_val - search.basin_tol]
    f_opt, p_opt, v_opt = min(near, key=lambda b: (b[0], b[1]))
    log.debug("g=%s %s: best %.10g at f=%.6g p=%.6g after %d probes",
              g, objective_kind, v_opt, f_opt, p_opt, len(cache))
    return FeeOptimum(
        g=g, f_opt=f_opt, p_opt=p_opt, objective=v_opt, objective_kind=objective_kind,
        evaluations=len(cache), refinement_depth=depth, heuristic=True,
        basins=tuple(sorted(basins)),
        probes=tuple((f, p, v) for (f, p), v in cache.items()),
    )


def default_g_grid(n: int = 21) -> list[float]:
    return [float(x) for x in np.linspace(0.0, 1.0, n)] + [UNLIMITED]


def sweep_row(g: float, template: MarketScenario, search: SearchConfig = SearchConfig()) -> CapSweepRow:
    try:
        rev = optimize_fees(g, template, REVENUE, search)
        _, s_at_r, _ = evaluate(template, Tariff(g, rev.f_opt, rev.p_opt), search)
        wel = optimize_fees(g, template, WELFARE, search)
    except Exception as exc:  # a failed row must not abort the sweep
        log.warning("sweep row g=%s failed: %s", g, exc)
        nan = math.nan
        return CapSweepRow(g, nan, nan, nan, nan, nan, nan, nan, error=f"{type(exc).__name__}: {exc}")
    return CapSweepRow(g, rev.f_opt, rev.p_opt, rev.objective, s_at_r,
                       wel.f_opt, wel.p_opt, wel.objective)


def _sweep_row_args(args):
    return sweep_row(*args)


def sweep_cap(g_grid, template: MarketScenario, search: SearchConfig = SearchConfig(),
              jobs: int = 1) -> list[CapSweepRow]:
    """One row per cap, in grid order; rows are independent and may run in parallel."""
    tasks = [(float(g), template, search) for g in g_grid]
    if jobs <= 1 or len(tasks) <= 1:
        return [sweep_row(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_row_args, tasks))


def bracket_violations(values, gs, tol: float) -> list[str]:
    """Check ``V(0) >= V(g) >= V(unlimited)`` for a column of optima."""
    by_g = dict(zip(gs, values))
    if 0.0 not in by_g or UNLIMITED not in by_g:
        raise ValueError("bracket check needs rows for g=0 and g=unlimited")
    top, bottom = by_g[0.0], by_g[UNLIMITED]
    out = []
    for g, v in by_g.items():
        if v > top + tol:
            out.append(f"g={g}: {v:.9g} exceeds value at g=0 ({top:.9g})")
        if v < bottom - tol:
            out.append(f"g={g}: {v:.9g} below flat-rate value ({bottom:.9g})")
    return out


def soft_violations(rows: list[CapSweepRow], tol: float = 1e-4) -> list[str]:
    """Sweep-level observations that are reported, not enforced.

    Welfare-optimal fees at most revenue-optimal fees on each row; revenue
    optimal fees non-decreasing in the cap across finite caps.
    """
    out = []
    for r in rows:
        if r.error:
            continue
        if r.f_circ > r.f_star + tol:
            out.append(f"g={r.g}: welfare-optimal f {r.f_circ:.6g} > revenue-optimal {r.f_star:.6g}")
        if r.p_circ > r.p_star + tol:
            out.append(f"g={r.g}: welfare-optimal p {r.p_circ:.6g} > revenue-optimal {r.p_star:.6g}")
    finite = [r for r in rows if not r.error and math.isfinite(r.g)]
    for prev, cur in zip(finite, finite[1:]):
        if cur.f_star < prev.f_star - tol:
            out.append(f"f* decreases from g={prev.g} to g={cur.g}")
        if cur.p_star < prev.p_star - tol:
            out.append(f"p* decreases from g={prev.g} to g={cur.g}")
    return out


def with_search(search: SearchConfig, **changes) -> SearchConfig:
    return replace(search, **changes)

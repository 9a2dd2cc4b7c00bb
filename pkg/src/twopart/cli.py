"""Command-line front end.

Exit codes: 0 ok, 1 config or usage error, 2 non-convergence, 3 a hard
property check failed.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import __version__
from .config import ConfigError, ScenarioConfig, load_config
from .equilibrium import solve_equilibrium
from .market import market_metrics
from .optimize import optimize_fees, soft_violations, sweep_cap
from .oracle import build_grid, oracle_equilibrium, oracle_metrics
from .verify import run_all

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_PROPERTY = 0, 1, 2, 3

SWEEP_COLUMNS = ["g", "f_star", "p_star", "R_star", "S_at_Rstar", "f_circ", "p_circ", "S_circ"]


def fmt(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.9g}"
    return str(x)


class Table:
    """CSV rows plus comment lines, rendered in one go at the end."""

    def __init__(self, header):
        self.header = list(header)
        self.rows = []
        self.notes = []

    def add(self, *values):
        self.rows.append([fmt(v) for v in values])

    def render(self, cfg: ScenarioConfig, seed: int) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.rows)
        for note in self.notes:
            buf.write(f"# {note}\n")
        buf.write(f"# twopart {__version__} config_sha256={cfg.sha256} seed={seed}\n")
        return buf.getvalue()


def _emit(text: str, out: str | None):
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text, encoding="utf-8", newline="\n")


def _load(path: str) -> ScenarioConfig:
    try:
        return load_config(path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


class _Group(click.Group):
    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
        except click.ClickException as exc:
            exc.show()
            sys.exit(EXIT_CONFIG)
        except click.Abort:
            click.echo("Aborted!", err=True)
            sys.exit(EXIT_CONFIG)
        sys.exit(rv if isinstance(rv, int) else EXIT_OK)


def common(fn):
    fn = click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True,
                      help="Worker processes for sweep rows.")(fn)
    fn = click.option("--seed", type=click.IntRange(min=0), default=None,
                      help="Random seed (defaults to [verify].seed).")(fn)
    fn = click.option("--out", type=click.Path(dir_okay=False), default=None,
                      help="Write CSV here instead of stdout.")(fn)
    fn = click.option("--config", "config_path", required=True, type=str,
                      help="TOML scenario file.")(fn)
    return fn


@click.group(cls=_Group)
@click.version_option(__version__, prog_name="twopart")
@click.option("-v", "--verbose", count=True, help="More logging (repeatable).")
def main(verbose: int):
    """Congestion equilibria and two-part tariff optimization."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command()
@common
@click.pass_context
def equilibrium(ctx, config_path, out, seed, jobs):
    """Solve the congestion equilibrium and report per-provider metrics."""
    cfg = _load(config_path)
    seed = cfg.verify.seed if seed is None else seed
    s = cfg.solver
    scen = cfg.scenario
    eq = solve_equilibrium(scen, s.tolerance, quad_tol=s.quad_tolerance, method=s.method,
                           damping=s.damping, max_iters=s.max_iters, stall_window=s.stall_window)
    m = market_metrics(scen, eq.q, s.quad_tolerance)
    table = Table(["id", "q", "d", "revenue", "welfare", "residual", "iterations"])
    for i in range(scen.n):
        table.add(i, eq.q[i], eq.d[i], float(m.revenue[i]), float(m.welfare[i]), eq.residual,
                  eq.iterations)
    if not eq.converged:
        table.notes.append(f"not converged: {eq.message}")
    _emit(table.render(cfg, seed), out)
    if not eq.converged:
        click.echo(f"equilibrium did not converge: {eq.message}", err=True)
        ctx.exit(EXIT_NONCONVERGED)


def _monopoly_template(cfg: ScenarioConfig):
    if cfg.scenario.n != 1:
        click.echo("config error: fee optimization needs exactly one provider", err=True)
        sys.exit(EXIT_CONFIG)
    return cfg.scenario


@main.command("sweep-cap")
@common
@click.pass_context
def sweep_cap_cmd(ctx, config_path, out, seed, jobs):
    """Revenue- and welfare-optimal fees for every cap in [sweep].g_grid."""
    cfg = _load(config_path)
    seed = cfg.verify.seed if seed is None else seed
    rows = sweep_cap(cfg.g_grid, _monopoly_template(cfg), cfg.search, jobs)
    table = Table(SWEEP_COLUMNS)
    failed = False
    for r in rows:
        table.add(*(getattr(r, c) for c in SWEEP_COLUMNS))
        if r.error:
            failed = True
            table.notes.append(f"row g={fmt(r.g)} failed: {r.error}")
    table.notes.extend(f"soft: {msg}" for msg in soft_violations(rows))
    _emit(table.render(cfg, seed), out)
    if failed:
        ctx.exit(EXIT_NONCONVERGED)


@main.command("optimize-fees")
@common
@click.option("--cap", type=str, default=None, help='Data cap (number or "unlimited").')
@click.option("--objective", type=click.Choice(["revenue", "welfare"]), default=None)
def optimize_fees_cmd(config_path, out, seed, jobs, cap, objective):
    """Best (f, p) at one data cap, with every basin found."""
    cfg = _load(config_path)
    seed = cfg.verify.seed if seed is None else seed
    g = cfg.optimize_cap
    if cap is not None:
        try:
            g = math.inf if cap.strip().lower() == "unlimited" else float(cap)
        except ValueError:
            g = math.nan
        if not g >= 0:
            raise click.BadParameter(f"cap must be >= 0 or 'unlimited', got {cap!r}")
    res = optimize_fees(g, _monopoly_template(cfg), objective or cfg.optimize_objective,
                        cfg.search)
    table = Table(["g", "f_opt", "p_opt", "objective", "objective_kind", "evaluations",
                   "refinement_depth"])
    table.add(res.g, res.f_opt, res.p_opt, res.objective, res.objective_kind, res.evaluations,
              res.refinement_depth)
    table.notes.extend(f"basin f={fmt(f)} p={fmt(p)} value={fmt(v)}" for f, p, v in res.basins)
    _emit(table.render(cfg, seed), out)


@main.command()
@common
@click.pass_context
def verify(ctx, config_path, out, seed, jobs):
    """Run the randomized property checks; exit 3 if a hard check fails."""
    cfg = _load(config_path)
    seed = cfg.verify.seed if seed is None else seed
    search = replace(cfg.search, eq_tol=cfg.solver.tolerance, quad_tol=cfg.solver.quad_tolerance)
    results = run_all(cfg.verify, cfg.g_grid, search, jobs, seed)
    table = Table(["check", "hard", "passed", "cases", "detail"])
    hard_failed = False
    for r in results:
        table.add(r.name, r.hard, r.passed, r.cases, r.detail)
        tag = "PASS" if r.passed else ("FAIL" if r.hard else "WARN")
        click.echo(f"{tag} {r.name} ({r.cases} cases){': ' + r.detail if r.detail else ''}")
        if not r.passed and r.hard:
            hard_failed = True
            click.echo(f"  counterexample: {r.counterexample}")
    if out is not None:
        _emit(table.render(cfg, seed), out)
    if hard_failed:
        ctx.exit(EXIT_PROPERTY)


@main.command("oracle-compare")
@common
@click.pass_context
def oracle_compare(ctx, config_path, out, seed, jobs):
    """Quadrature against the agent-grid sums at each [oracle] resolution."""
    cfg = _load(config_path)
    seed = cfg.verify.seed if seed is None else seed
    s = cfg.solver
    scen = cfg.scenario
    eq = solve_equilibrium(scen, s.tolerance, quad_tol=s.quad_tolerance, method=s.method,
                           damping=s.damping, max_iters=s.max_iters, stall_window=s.stall_window)
    m = market_metrics(scen, eq.q, s.quad_tolerance)
    table = Table(["n_u", "n_v", "provider", "quantity", "quadrature", "oracle", "delta"])
    for n_u, n_v in cfg.oracle.all_resolutions():
        grid = build_grid(scen.distribution, n_u, n_v)
        om = oracle_metrics(grid, scen, eq.q)
        for i in range(scen.n):
            for name in ("load", "revenue", "welfare"):
                a, b = float(getattr(m, name)[i]), float(getattr(om, name)[i])
                table.add(n_u, n_v, i, name, a, b, abs(b - a))
        if scen.n == 1:
            oq = oracle_equilibrium(grid, scen.providers[0], scen.q0).q[0]
            table.add(n_u, n_v, 0, "q_eq", eq.q[0], oq, abs(oq - eq.q[0]))
    if not eq.converged:
        table.notes.append(f"not converged: {eq.message}")
    _emit(table.render(cfg, seed), out)
    if not eq.converged:
        ctx.exit(EXIT_NONCONVERGED)

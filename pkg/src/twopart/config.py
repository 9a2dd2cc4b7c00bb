"""TOML scenario files.

A minimal file names one provider::

    free_congestion = 1.5          # or "inf"

    [[providers]]
    cap = 0.4                      # or "unlimited"
    lump_sum = 0.1
    per_unit = 0.6
    capacity = 0.5

Every other table (``distribution``, ``solver``, ``sweep``, ``search``,
``oracle``, ``verify``, ``optimize``) is optional.  Unknown keys are errors.
"""

from __future__ import annotations

import hashlib
import math
import re
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .market import MarketScenario, ProviderConfig
from .model import UNLIMITED, Tariff, UserDistribution
from .optimize import REVENUE, WELFARE, SearchConfig, default_g_grid

_KEYS = {
    None: {"free_congestion", "providers", "distribution", "solver", "sweep", "search",
           "oracle", "verify", "optimize"},
    "providers": {"cap", "lump_sum", "per_unit", "capacity"},
    "distribution": {"alpha", "beta", "u_max", "v_max", "mass"},
    "solver": {"tolerance", "quad_tolerance", "max_iters", "damping", "method", "stall_window"},
    "sweep": {"g_grid", "g_points"},
    "search": {"f_max", "p_max", "n_f", "n_p", "n_starts", "xatol", "basin_tol"},
    "oracle": {"n_u", "n_v", "resolutions"},
    "verify": {"seed", "equilibrium_cases", "monotone_pairs", "normalization_cases",
               "equivalence_cases", "dominance_cases", "bands", "probe_bands", "probe_eps",
               "sweeps"},
    "optimize": {"cap", "objective"},
}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path, self.line, self.detail = path, line, message
        where = path or "<config>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class SolverSettings:
    tolerance: float = 1e-10
    quad_tolerance: float = 1e-9
    max_iters: int = 10_000
    damping: float = 0.5
    method: str = "bisect"
    stall_window: int = 50


@dataclass(frozen=True)
class OracleSettings:
    n_u: int = 2000
    n_v: int = 2000
    resolutions: tuple[tuple[int, int], ...] = ()

    def all_resolutions(self) -> tuple[tuple[int, int], ...]:
        return self.resolutions or ((self.n_u, self.n_v),)


@dataclass(frozen=True)
class VerifySettings:
    seed: int = 0
    equilibrium_cases: int = 50
    monotone_pairs: int = 30
    normalization_cases: int = 20
    equivalence_cases: int = 50
    dominance_cases: int = 5
    bands: int = 16
    probe_bands: int = 4
    probe_eps: float = 0.02
    sweeps: bool = True


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: MarketScenario
    solver: SolverSettings = SolverSettings()
    g_grid: tuple[float, ...] = field(default_factory=lambda: tuple(default_g_grid()))
    search: SearchConfig = SearchConfig()
    oracle: OracleSettings = OracleSettings()
    verify: VerifySettings = VerifySettings()
    optimize_cap: float = 0.0
    optimize_objective: str = REVENUE
    sha256: str = ""
    path: str = ""


class _Reader:
    """Typed lookups that know where each key sits in the source text."""

    def __init__(self, text: str, path: str):
        self.lines = text.splitlines()
        self.path = path

    def line_of(self, key: str, section: str | None = None, occurrence: int = 0) -> int | None:
        start = 0
        if section is not None:
            hits = [i for i, ln in enumerate(self.lines)
                    if re.match(rf"\s*\[\[?\s*{re.escape(section)}\s*\]\]?", ln)]
            if len(hits) > occurrence:
                start = hits[occurrence]
            elif not hits:
                return None
        pat = re.compile(rf"\s*{re.escape(key)}\s*=")
        for i in range(start, len(self.lines)):
            if pat.match(self.lines[i]):
                return i + 1
            if i > start and section is not None and self.lines[i].lstrip().startswith("["):
                break
        return start + 1 if section is not None else None

    def fail(self, message: str, key: str, section: str | None = None, occurrence: int = 0):
        raise ConfigError(message, self.path, self.line_of(key, section, occurrence))

    def check_keys(self, table: dict, section: str | None, occurrence: int = 0):
        for key in table:
            if key not in _KEYS[section]:
                where = f"[{section}]" if section else "top level"
                self.fail(f"unknown key {key!r} in {where}", key, section, occurrence)

    def number(self, table: dict, key: str, default, section: str | None, *, minimum=None,
               strict_min=False, finite=True, sentinel: str | None = None, occurrence: int = 0):
        if key not in table:
            return default
        raw = table[key]
        if isinstance(raw, str) and sentinel is not None and raw.strip().lower() == sentinel:
            return math.inf
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            expected = f"a number or {sentinel!r}" if sentinel else "a number"
            self.fail(f"{key} must be {expected}, got {raw!r}", key, section, occurrence)
        value = float(raw)
        if math.isnan(value) or (finite and sentinel is None and math.isinf(value)):
            self.fail(f"{key} must be finite, got {raw!r}", key, section, occurrence)
        if minimum is not None and (value <= minimum if strict_min else value < minimum):
            op = ">" if strict_min else ">="
            self.fail(f"{key} must be {op} {minimum}, got {raw!r}", key, section, occurrence)
        return value

    def integer(self, table: dict, key: str, default: int, section: str, minimum: int = 1):
        if key not in table:
            return default
        raw = table[key]
        if isinstance(raw, bool) or not isinstance(raw, int) or raw < minimum:
            self.fail(f"{key} must be an integer >= {minimum}, got {raw!r}", key, section)
        return int(raw)


def _cap_grid(reader: _Reader, raw) -> tuple[float, ...]:
    if not isinstance(raw, list) or not raw:
        reader.fail("g_grid must be a non-empty array", "g_grid", "sweep")
    out = []
    for item in raw:
        value = reader.number({"g_grid": item}, "g_grid", None, "sweep", minimum=0.0,
                              sentinel="unlimited")
        out.append(UNLIMITED if math.isinf(value) else value)
    return tuple(out)


def parse_config(text: str, path: str = "<config>") -> ScenarioConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"invalid TOML: {exc}", path, int(m.group(1)) if m else None) from None
    r = _Reader(text, path)
    r.check_keys(doc, None)
    for name in _KEYS:
        if name not in (None, "providers") and name in doc:
            if not isinstance(doc[name], dict):
                r.fail(f"{name} must be a table", name)
            r.check_keys(doc[name], name)

    q0 = r.number(doc, "free_congestion", math.inf, None, minimum=0.0, sentinel="inf")

    raw_providers = doc.get("providers")
    if not isinstance(raw_providers, list) or not raw_providers:
        raise ConfigError("at least one [[providers]] entry is required", path,
                          r.line_of("providers"))
    providers = []
    for k, entry in enumerate(raw_providers):
        if not isinstance(entry, dict):
            r.fail("providers must be an array of tables", "providers")
        r.check_keys(entry, "providers", k)
        if "capacity" not in entry:
            raise ConfigError(f"provider {k}: capacity is required", path,
                              r.line_of("capacity", "providers", k))
        g = r.number(entry, "cap", UNLIMITED, "providers", minimum=0.0, sentinel="unlimited",
                     occurrence=k)
        f = r.number(entry, "lump_sum", 0.0, "providers", minimum=0.0, occurrence=k)
        p = r.number(entry, "per_unit", 0.0, "providers", minimum=0.0, occurrence=k)
        c = r.number(entry, "capacity", None, "providers", minimum=0.0, strict_min=True,
                     occurrence=k)
        providers.append(ProviderConfig(Tariff(g, f, p), c))

    d = doc.get("distribution", {})
    dist = UserDistribution(
        alpha=r.number(d, "alpha", 1.0, "distribution", minimum=0.0, strict_min=True),
        beta=r.number(d, "beta", 1.0, "distribution", minimum=0.0, strict_min=True),
        u_max=r.number(d, "u_max", 1.0, "distribution", minimum=0.0, strict_min=True),
        v_max=r.number(d, "v_max", 1.0, "distribution", minimum=0.0, strict_min=True),
        mass=r.number(d, "mass", 1.0, "distribution", minimum=0.0, strict_min=True),
    )

    s = doc.get("solver", {})
    method = s.get("method", "bisect")
    if method not in ("bisect", "brent"):
        r.fail(f"method must be 'bisect' or 'brent', got {method!r}", "method", "solver")
    damping = r.number(s, "damping", 0.5, "solver", minimum=0.0, strict_min=True)
    if damping > 1.0:
        r.fail(f"damping must lie in (0, 1], got {damping}", "damping", "solver")
    solver = SolverSettings(
        tolerance=r.number(s, "tolerance", 1e-10, "solver", minimum=0.0, strict_min=True),
        quad_tolerance=r.number(s, "quad_tolerance", 1e-9, "solver", minimum=0.0,
                                strict_min=True),
        max_iters=r.integer(s, "max_iters", 10_000, "solver"),
        damping=damping,
        method=method,
        stall_window=r.integer(s, "stall_window", 50, "solver"),
    )

    sw = doc.get("sweep", {})
    if "g_grid" in sw:
        g_grid = _cap_grid(r, sw["g_grid"])
    else:
        g_grid = tuple(default_g_grid(r.integer(sw, "g_points", 21, "sweep", minimum=2)))

    se = doc.get("search", {})
    defaults = SearchConfig()
    search = SearchConfig(
        f_max=r.number(se, "f_max", defaults.f_max, "search", minimum=0.0, strict_min=True),
        p_max=r.number(se, "p_max", defaults.p_max, "search", minimum=0.0, strict_min=True),
        n_f=r.integer(se, "n_f", defaults.n_f, "search", minimum=2),
        n_p=r.integer(se, "n_p", defaults.n_p, "search", minimum=2),
        n_starts=r.integer(se, "n_starts", defaults.n_starts, "search"),
        xatol=r.number(se, "xatol", defaults.xatol, "search", minimum=0.0, strict_min=True),
        basin_tol=r.number(se, "basin_tol", defaults.basin_tol, "search", minimum=0.0),
        eq_tol=solver.tolerance,
        quad_tol=solver.quad_tolerance,
    )

    o = doc.get("oracle", {})
    res = o.get("resolutions", [])
    if not isinstance(res, list) or not all(
            isinstance(x, list) and len(x) == 2 and all(isinstance(n, int) and n >= 1 for n in x)
            for x in res):
        r.fail("resolutions must be an array of [n_u, n_v] integer pairs", "resolutions", "oracle")
    oracle = OracleSettings(r.integer(o, "n_u", 2000, "oracle"), r.integer(o, "n_v", 2000, "oracle"),
                            tuple((a, b) for a, b in res))

    v = doc.get("verify", {})
    sweeps = v.get("sweeps", True)
    if not isinstance(sweeps, bool):
        r.fail("sweeps must be true or false", "sweeps", "verify")
    verify = VerifySettings(
        seed=r.integer(v, "seed", 0, "verify", minimum=0),
        equilibrium_cases=r.integer(v, "equilibrium_cases", 50, "verify", minimum=0),
        monotone_pairs=r.integer(v, "monotone_pairs", 30, "verify", minimum=0),
        normalization_cases=r.integer(v, "normalization_cases", 20, "verify", minimum=0),
        equivalence_cases=r.integer(v, "equivalence_cases", 50, "verify", minimum=0),
        dominance_cases=r.integer(v, "dominance_cases", 5, "verify", minimum=0),
        bands=r.integer(v, "bands", 16, "verify"),
        probe_bands=r.integer(v, "probe_bands", 4, "verify"),
        probe_eps=r.number(v, "probe_eps", 0.02, "verify", minimum=0.0),
        sweeps=sweeps,
    )

    op = doc.get("optimize", {})
    objective = op.get("objective", REVENUE)
    if objective not in (REVENUE, WELFARE):
        r.fail(f"objective must be {REVENUE!r} or {WELFARE!r}, got {objective!r}",
               "objective", "optimize")
    cap = r.number(op, "cap", 0.0, "optimize", minimum=0.0, sentinel="unlimited")

    return ScenarioConfig(
        scenario=MarketScenario(tuple(providers), q0, dist),
        solver=solver, g_grid=g_grid, search=search, oracle=oracle, verify=verify,
        optimize_cap=cap, optimize_objective=objective,
        sha256=hashlib.sha256(text.encode()).hexdigest(), path=path,
    )


def load_config(path) -> ScenarioConfig:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(p)) from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ConfigError("config is not valid UTF-8", str(p)) from None
    # hash the bytes on disk, not the decoded text
    return replace(parse_config(text, str(p)), sha256=hashlib.sha256(raw).hexdigest())

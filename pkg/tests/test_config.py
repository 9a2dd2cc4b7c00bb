import hashlib
import math
from pathlib import Path

import pytest

from twopart.config import ConfigError, load_config, parse_config
from twopart.model import UNLIMITED, UserDistribution
from twopart.optimize import WELFARE

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """\
free_congestion = 1.5

[[providers]]
cap = 0.4
lump_sum = 0.1
per_unit = 0.6
capacity = 0.5
"""


def test_minimal_file_and_defaults():
    cfg = parse_config(MINIMAL)
    pc = cfg.scenario.providers[0]
    assert (pc.tariff.g, pc.tariff.f, pc.tariff.p, pc.capacity) == (0.4, 0.1, 0.6, 0.5)
    assert cfg.scenario.q0 == 1.5
    assert cfg.scenario.distribution == UserDistribution()
    assert cfg.solver.method == "bisect" and cfg.solver.tolerance == 1e-10
    assert len(cfg.g_grid) == 22 and cfg.g_grid[-1] == UNLIMITED
    assert cfg.search.eq_tol == cfg.solver.tolerance
    assert cfg.oracle.all_resolutions() == ((2000, 2000),)
    assert cfg.verify.probe_bands == 4
    assert cfg.sha256 == hashlib.sha256(MINIMAL.encode()).hexdigest()


def test_sentinels():
    text = 'free_congestion = "inf"\n[[providers]]\ncap = "unlimited"\ncapacity = 1.0\n' \
           '[sweep]\ng_grid = [0.0, 0.5, "unlimited"]\n'
    cfg = parse_config(text)
    assert cfg.scenario.q0 == math.inf
    assert cfg.scenario.providers[0].tariff.g == UNLIMITED
    assert cfg.g_grid == (0.0, 0.5, UNLIMITED)


def test_missing_free_congestion_means_no_free_alternative():
    cfg = parse_config("[[providers]]\ncapacity = 1.0\n")
    assert cfg.scenario.q0 == math.inf
    t = cfg.scenario.providers[0].tariff
    assert (t.g, t.f, t.p) == (UNLIMITED, 0.0, 0.0)


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL + "[solver]\ntolerance = 1e-9\nbogus = 3\n", "x.toml")
    assert exc.value.line == 10
    assert str(exc.value).startswith("x.toml:10: unknown key 'bogus'")


def test_unknown_top_level_key():
    with pytest.raises(ConfigError, match="unknown key 'colour'"):
        parse_config("colour = 1\n" + MINIMAL)


def test_second_provider_error_points_at_its_table():
    text = MINIMAL + "\n[[providers]]\ncap = 0.2\ncapacity = -1.0\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == 11
    assert "capacity must be > 0" in exc.value.detail


def test_capacity_required():
    with pytest.raises(ConfigError, match="capacity is required"):
        parse_config("[[providers]]\ncap = 0.2\n")


def test_providers_required():
    with pytest.raises(ConfigError, match="providers"):
        parse_config("free_congestion = 1.0\n")


@pytest.mark.parametrize("extra, fragment", [
    ('[solver]\nmethod = "newton"\n', "method"),
    ("[solver]\ndamping = 1.5\n", "damping"),
    ("[search]\nn_f = 1\n", "n_f"),
    ('[sweep]\ng_grid = []\n', "g_grid"),
    ('[sweep]\ng_grid = [-0.1]\n', "g_grid"),
    ("[oracle]\nresolutions = [[10]]\n", "resolutions"),
    ('[verify]\nsweeps = "yes"\n', "sweeps"),
    ('[optimize]\nobjective = "profit"\n', "objective"),
    ('[distribution]\nalpha = 0\n', "alpha"),
])
def test_bad_values(extra, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(MINIMAL + extra)


def test_bad_number_types():
    with pytest.raises(ConfigError, match="must be a number"):
        parse_config(MINIMAL.replace("lump_sum = 0.1", 'lump_sum = "cheap"'))
    with pytest.raises(ConfigError, match="must be a number or 'inf'"):
        parse_config(MINIMAL.replace("1.5", "true"))


def test_invalid_toml_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_config("free_congestion = 1.5\n[[providers]\n")
    assert exc.value.line == 2


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_bytes(b"\xff\xfe")
    with pytest.raises(ConfigError, match="UTF-8"):
        load_config(bad)


def test_load_config_hashes_bytes(tmp_path):
    path = tmp_path / "s.toml"
    path.write_bytes(MINIMAL.replace("\n", "\r\n").encode())
    cfg = load_config(path)
    assert cfg.sha256 == hashlib.sha256(path.read_bytes()).hexdigest()
    assert cfg.path == str(path)


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.toml")):
        load_config(path)
    assert load_config(CONFIGS / "welfare_sweep.toml").optimize_objective == WELFARE
    base = load_config(CONFIGS / "baseline.toml")
    assert base.oracle.all_resolutions()[-1] == (2000, 2000)

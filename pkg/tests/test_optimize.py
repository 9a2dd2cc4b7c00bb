import math

import pytest

from twopart.market import MarketScenario
from twopart.model import UNLIMITED, Tariff
from twopart.optimize import (REVENUE, WELFARE, CapSweepRow, SearchConfig, bracket_violations,
                              default_g_grid, evaluate, optimize_fees, soft_violations,
                              sweep_cap, sweep_row)

REV_TEMPLATE = MarketScenario.monopoly(Tariff.flat_rate(0.0), 1.0, 1.0)
WEL_TEMPLATE = MarketScenario.monopoly(Tariff.flat_rate(0.0), 0.3, math.inf)
COARSE = SearchConfig(n_f=9, n_p=9, n_starts=2)
# frozen from the default search (21 x 21 grid, 5 starts)
R_STAR_ZERO_CAP = 0.057328026979236064
R_STAR_FLAT = 0.04647500021753381
P_STAR_ZERO_CAP = 0.32385864


def test_search_config_checks():
    with pytest.raises(ValueError):
        SearchConfig(f_max=0.0)
    with pytest.raises(ValueError):
        SearchConfig(n_f=1)


def test_optimizer_argument_checks():
    with pytest.raises(ValueError):
        optimize_fees(0.5, REV_TEMPLATE, "profit")
    two = MarketScenario(REV_TEMPLATE.providers * 2, 1.0)
    with pytest.raises(ValueError):
        optimize_fees(0.5, two)


def test_zero_cap_revenue_optimum_is_pay_as_you_go():
    opt = optimize_fees(0.0, REV_TEMPLATE)
    assert opt.f_opt <= 1e-3
    assert opt.p_opt == pytest.approx(P_STAR_ZERO_CAP, abs=1e-4)
    assert opt.objective == pytest.approx(R_STAR_ZERO_CAP, abs=1e-9)
    assert opt.heuristic


def test_one_dimensional_price_search_matches_two_dimensional():
    two_d = optimize_fees(0.0, REV_TEMPLATE)
    one_d = optimize_fees(0.0, REV_TEMPLATE, fix_f=0.0)
    assert one_d.f_opt == 0.0
    assert one_d.objective == pytest.approx(two_d.objective, abs=1e-8)
    assert one_d.p_opt == pytest.approx(two_d.p_opt, abs=1e-4)


def test_non_binding_cap_pins_price_and_matches_unlimited():
    a = optimize_fees(1.0, REV_TEMPLATE, search=COARSE)
    b = optimize_fees(UNLIMITED, REV_TEMPLATE, search=COARSE)
    assert a.p_opt == b.p_opt == 0.0
    assert (a.f_opt, a.objective) == (b.f_opt, b.objective)
    assert b.objective == pytest.approx(R_STAR_FLAT, abs=1e-8)


def test_fully_pinned_fees_evaluate_once():
    opt = optimize_fees(0.4, REV_TEMPLATE, fix_f=0.1, fix_p=0.6)
    assert opt.evaluations == 1 and not opt.heuristic
    assert opt.objective == evaluate(REV_TEMPLATE, Tariff(0.4, 0.1, 0.6))[0]


def test_finer_grid_does_not_find_better_optimum():
    coarse = optimize_fees(0.5, REV_TEMPLATE, search=SearchConfig(n_f=11, n_p=11))
    fine = optimize_fees(0.5, REV_TEMPLATE, search=SearchConfig(n_f=21, n_p=21))
    assert fine.objective <= coarse.objective + 1e-4


def test_optimum_beats_every_probe():
    opt = optimize_fees(0.3, REV_TEMPLATE, search=COARSE)
    assert all(v <= opt.objective + COARSE.basin_tol for _, _, v in opt.probes)
    assert opt.evaluations == len(opt.probes)


def test_welfare_optimum_at_zero_cap_charges_no_lump_sum():
    opt = optimize_fees(0.0, WEL_TEMPLATE, WELFARE, search=COARSE)
    assert opt.f_opt <= 1e-3
    assert opt.objective_kind == WELFARE


def test_sweep_row_records_errors(monkeypatch):
    def broken(*args, **kwargs):
        raise ArithmeticError("no equilibrium")

    monkeypatch.setattr("twopart.optimize.evaluate", broken)
    row = sweep_row(0.5, REV_TEMPLATE, COARSE)
    assert "no equilibrium" in row.error
    assert math.isnan(row.R_star)


def test_sweep_keeps_grid_order():
    rows = sweep_cap([1.0, UNLIMITED], REV_TEMPLATE, COARSE)
    assert [r.g for r in rows] == [1.0, UNLIMITED]
    assert rows[0].R_star == rows[1].R_star
    assert rows[0].S_circ == rows[1].S_circ


def test_default_grid():
    gs = default_g_grid()
    assert len(gs) == 22 and gs[0] == 0.0 and gs[20] == 1.0 and gs[-1] == UNLIMITED


def test_bracket_violations():
    gs = [0.0, 0.5, UNLIMITED]
    assert bracket_violations([1.0, 0.9, 0.8], gs, 1e-4) == []
    assert len(bracket_violations([1.0, 1.1, 0.8], gs, 1e-4)) == 1
    assert len(bracket_violations([1.0, 0.7, 0.8], gs, 1e-4)) == 1
    assert bracket_violations([1.0, 1.00005, 0.8], gs, 1e-4) == []
    with pytest.raises(ValueError):
        bracket_violations([1.0], [0.5], 1e-4)


def test_soft_violations():
    ok = CapSweepRow(0.0, 0.1, 0.3, 1.0, 1.0, 0.0, 0.2, 1.0)
    later = CapSweepRow(0.5, 0.2, 0.4, 1.0, 1.0, 0.1, 0.1, 1.0)
    assert soft_violations([ok, later]) == []
    greedy = CapSweepRow(0.0, 0.1, 0.3, 1.0, 1.0, 0.2, 0.2, 1.0)
    assert any("welfare-optimal f" in s for s in soft_violations([greedy]))
    falling = CapSweepRow(0.5, 0.05, 0.4, 1.0, 1.0, 0.0, 0.1, 1.0)
    assert any("f* decreases" in s for s in soft_violations([ok, falling]))
    failed = CapSweepRow(0.2, math.nan, math.nan, math.nan, math.nan, math.nan, math.nan,
                         math.nan, error="boom")
    assert soft_violations([ok, failed, later]) == []


def test_revenue_objective_name():
    assert optimize_fees(0.0, REV_TEMPLATE, REVENUE, fix_f=0.0, fix_p=0.3).objective_kind == REVENUE

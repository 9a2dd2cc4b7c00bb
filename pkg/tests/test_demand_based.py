import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twopart.demand_based import (CASE_1, CASE_2, DemandBasedTariff, PaygSchedule,
                              check_constant_price_optimality, demand_based_metrics,
                              equivalence_report, payg_equivalent_price,
                              solve_demand_based_equilibrium, verify_payg_dominance)
from twopart.equilibrium import solve_monopoly
from twopart.market import MarketScenario, ProviderConfig, market_metrics
from twopart.model import (DomainError, Tariff, UserDistribution, UserType, achievable_demand,
                           charge, free_utility, optimal_usage, optimal_utility)
from twopart.optimize import evaluate
from twopart.verify import optimal_payg_price, random_equivalence_instance, random_tariff

BASE = Tariff(0.4, 0.1, 0.6)
Q_STAR = 0.33874502772029497
UNIT = UserDistribution()


def fine_grid_density(u, tariff, q_i, q0, dist, n=400_000):
    """Revenue and load density at ``u`` from a midpoint v-grid and pointwise choices."""
    edges = np.linspace(0.0, dist.v_max, n + 1)
    v = 0.5 * (edges[1:] + edges[:-1])
    w = np.diff((edges / dist.v_max) ** dist.beta)
    rho, rho0 = achievable_demand(u, q_i), achievable_demand(u, q0)
    use = np.where((rho > tariff.g) & (v < tariff.p), tariff.g, rho)
    bill = tariff.f + tariff.p * np.maximum(use - tariff.g, 0.0)
    joins = v * use - bill >= v * rho0
    dens = dist.density_u(u)
    return float((joins * bill * w).sum() * dens), float((joins * use * w).sum() * dens)


# -- banded tariffs ------------------------------------------------------------------

def test_band_validation():
    with pytest.raises(DomainError):
        DemandBasedTariff((0.0, 0.5), (BASE, BASE))
    with pytest.raises(DomainError):
        DemandBasedTariff((0.1, 1.0), (BASE,))
    with pytest.raises(DomainError):
        DemandBasedTariff((0.0, 0.5, 0.5, 1.0), (BASE,) * 3)


def test_band_lookup():
    dbt = DemandBasedTariff((0.0, 0.3, 1.0), (BASE, Tariff.flat_rate(0.2)))
    g, f, p = dbt.components(np.array([0.0, 0.29, 0.3, 1.0]))
    np.testing.assert_array_equal(f, [0.1, 0.1, 0.2, 0.2])
    assert dbt.n_bands == 2


def test_single_band_matches_fixed_tariff():
    eq = solve_demand_based_equilibrium(DemandBasedTariff.uniform(BASE), 0.5, 1.5)
    ref = solve_monopoly(ProviderConfig(BASE, 0.5), 1.5)
    assert eq.q[0] == ref.q[0]


def test_baseline_in_four_bands():
    eq = solve_demand_based_equilibrium(DemandBasedTariff.uniform(BASE, 4), 0.5, 1.5)
    assert eq.q[0] == pytest.approx(0.3387, abs=1e-3)
    assert eq.q[0] == pytest.approx(Q_STAR, abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_band_merge_invariance(seed, split):
    rng = np.random.default_rng(seed)
    a, b = random_tariff(rng), random_tariff(rng)
    coarse = DemandBasedTariff((0.0, 0.5, 1.0), (a, b))
    cuts = np.linspace(0.0, 0.5, split + 1)
    fine = DemandBasedTariff(tuple(cuts) + (1.0,), (a,) * split + (b,))
    q, q0 = rng.uniform(0.0, 1.0), rng.uniform(1.0, 3.0)
    np.testing.assert_allclose(demand_based_metrics(fine, q, q0, UNIT, 1e-12),
                               demand_based_metrics(coarse, q, q0, UNIT, 1e-12), atol=1e-10)


# -- per-demand equivalence ---------------------------------------------------------

def test_below_cap_price_is_lump_sum_over_demand():
    u, q = 0.3, 0.5
    p_t, case = payg_equivalent_price(u, BASE, q, 1.5)
    assert case == CASE_1
    assert p_t == pytest.approx(0.1 / achievable_demand(u, q), rel=1e-15)


def test_zero_cap_price_adds_per_unit_fee():
    t = Tariff(0.0, 0.15, 0.2)
    u, q = 0.7, 0.4
    p_t, case = payg_equivalent_price(u, t, q, math.inf)
    assert case == CASE_1
    assert p_t == pytest.approx(0.15 / achievable_demand(u, q) + 0.2, rel=1e-15)


def test_case2_instance_against_fine_grid():
    u, q_i, q0 = 0.9, 0.2, 1.5
    t = Tariff(0.5, 0.05, 0.6)
    rho0 = achievable_demand(u, q0)
    assert achievable_demand(u, q_i) > t.g and t.g * t.p - t.f > rho0 * t.p
    rep = equivalence_report(u, t, q_i, q0, UNIT)
    assert rep.case == CASE_2
    assert rep.revenue_payg == pytest.approx(rep.revenue_original, abs=1e-8)
    assert rep.load_payg <= rep.load_original
    rev_o, load_o = fine_grid_density(u, t, q_i, q0, UNIT)
    rev_p, load_p = fine_grid_density(u, Tariff.pay_as_you_go(rep.p_tilde), q_i, q0, UNIT)
    assert rep.revenue_original == pytest.approx(rev_o, abs=1e-5)
    assert rep.revenue_payg == pytest.approx(rev_p, abs=1e-5)
    assert rep.load_original == pytest.approx(load_o, abs=1e-5)
    assert rep.load_payg == pytest.approx(load_p, abs=1e-5)


def test_case2_needs_positive_demand():
    with pytest.raises(DomainError):
        payg_equivalent_price(0.0, BASE, 0.2, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_case1_matches_every_user_exactly(seed):
    rng = np.random.default_rng(seed)
    u, t, q_i, q0, dist = random_equivalence_instance(rng)
    p_t, case = payg_equivalent_price(u, t, q_i, q0, dist)
    if case != CASE_1:
        return
    payg = Tariff.pay_as_you_go(p_t)
    for v in rng.uniform(0.0, 1.0, size=20):
        user = UserType(u, v)
        if optimal_utility(user, t, q_i) < free_utility(user, q0):
            continue
        y = optimal_usage(user, t, q_i)
        assert y == pytest.approx(achievable_demand(u, q_i), rel=1e-14) or y == t.g
        if y == achievable_demand(u, q_i):
            # users at their achievable demand pay exactly the same
            assert charge(y, payg) == pytest.approx(charge(y, t), rel=1e-12, abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_case2_equal_revenue_lower_load(seed):
    rng = np.random.default_rng(seed)
    rep = equivalence_report(*random_equivalence_instance(rng, force_case2=True))
    assert rep.case == CASE_2
    assert rep.revenue_payg == pytest.approx(rep.revenue_original, abs=1e-8)
    assert rep.load_payg <= rep.load_original + 1e-12


# -- full market -------------------------------------------------------------------

def test_baseline_dominance():
    rep = verify_payg_dominance(DemandBasedTariff.uniform(BASE, 4), 0.5, 1.5)
    assert rep.holds
    assert rep.revenue_payg >= rep.revenue_original
    assert rep.q_payg <= rep.q_original


def test_flat_rate_schedule_is_lump_sum_over_demand():
    src = DemandBasedTariff.uniform(Tariff.flat_rate(0.1), 4)
    eq = solve_demand_based_equilibrium(src, 0.5, 1.5)
    schedule = PaygSchedule(src, eq.q[0], 1.5, UNIT)
    u = np.array([0.2, 0.5, 0.9])
    g, f, p = schedule.components(u)
    np.testing.assert_allclose(p, 0.1 / (u * math.exp(-eq.q[0])), rtol=1e-14)
    assert not g.any() and not f.any()
    assert verify_payg_dominance(src, 0.5, 1.5).holds


def test_pay_as_you_go_is_a_fixed_point():
    rep = verify_payg_dominance(DemandBasedTariff.uniform(Tariff.pay_as_you_go(0.3), 2), 0.5, 1.5)
    assert rep.q_payg == rep.q_original
    assert rep.revenue_payg == rep.revenue_original
    assert rep.load_payg == rep.load_original


def test_random_banded_dominance():
    rng = np.random.default_rng(3)
    for _ in range(4):
        tariff = DemandBasedTariff(tuple(np.linspace(0, 1, 5)),
                                   tuple(random_tariff(rng) for _ in range(4)))
        rep = verify_payg_dominance(tariff, rng.uniform(0.2, 2.0), rng.uniform(0.5, 3.0))
        assert rep.revenue_payg >= rep.revenue_original - 1e-6


def test_optimal_payg_beats_random_two_part_tariffs():
    template = MarketScenario.monopoly(BASE, 1.0, 1.0)
    best = evaluate(template, Tariff.pay_as_you_go(optimal_payg_price()))[0]
    rng = np.random.default_rng(8)
    for _ in range(20):
        assert evaluate(template, random_tariff(rng))[0] <= best + 1e-9


# -- constant-price probe -------------------------------------------------------------

def test_null_perturbation_has_no_gain():
    rep = check_constant_price_optimality(0.3, 1.0, 1.0, eps=0.0)
    assert rep.max_gain == 0.0
    assert all(g == 0.0 for g in rep.gains)


def test_probe_finds_gain_off_optimum():
    p_star = optimal_payg_price()
    at_opt = check_constant_price_optimality(p_star, 1.0, 1.0)
    at_half = check_constant_price_optimality(p_star / 2, 1.0, 1.0)
    assert at_opt.max_gain <= 1e-4
    assert at_half.max_gain > 0.0
    assert len(at_half.gains) == 8

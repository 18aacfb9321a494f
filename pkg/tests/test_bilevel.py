import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from activebilevel.bilevel import (BigM, DualMaxima, build_baseline, c_s_max, compute_big_m,
                                   dispatch_from_vector, layout_for, physical_slack_bound,
                                   solve_baseline, vector_from_dispatch)
from activebilevel.dcopf import solve_dcopf
from activebilevel.lp_core import Status, milp_point_feasible
from conftest import feasible_loads, one_bus
from oracles import grid_profit, violated_constraints
from test_network import random_case

BIG = BigM(m_primal=1e4, m_dual=1e4)


def test_compute_big_m_formula():
    m = compute_big_m(DualMaxima({"alpha": 42.0, "phi_max": 3.0, "gen_slack": 7.0}))
    assert m.m_dual == pytest.approx(420.0)
    assert m.m_primal == pytest.approx(70.0)


def test_compute_big_m_empty():
    with pytest.raises(ValueError):
        compute_big_m(DualMaxima())


def test_big_m_physical_floor(case3):
    m = compute_big_m(DualMaxima({"alpha": 1.0, "gen_slack": 1.0}), case3)
    assert m.m_primal == physical_slack_bound(case3) == 240.0


def test_big_m_validation():
    with pytest.raises(ValueError):
        BigM(0.0, 1.0)
    with pytest.raises(ValueError):
        BigM(1.0, np.inf)


def test_dual_maxima_round_trip_and_merge():
    a = DualMaxima({"alpha": 2.0, "rho_max": 1.0})
    b = DualMaxima({"alpha": 3.0, "gamma": 0.5})
    merged = a.merge(b)
    assert merged.values == {"alpha": 3.0, "rho_max": 1.0, "gamma": 0.5}
    assert DualMaxima.from_dict(merged.to_dict()).values == merged.values


def test_nine_bus_binaries(case9):
    assert build_baseline(case9, BIG).binary_vars.size == 24


def test_thirty_nine_bus_binaries(case39):
    assert build_baseline(case39, BIG).binary_vars.size == 112


def test_monopolist():
    case = one_bus(costs=(10.0,), p_max=(100.0,), load=50.0)
    milp = build_baseline(case, BIG)
    assert milp.binary_vars.size == 2
    sol = solve_baseline(case, BIG)
    assert sol.status == Status.OPTIMAL
    assert sol.c_s_star == pytest.approx(c_s_max(case)) == pytest.approx(100.0)
    assert sol.profit == pytest.approx((100.0 - 10.0) * 50.0)


def test_perfect_competition():
    case = one_bus(costs=(10.0, 10.0), p_max=(100.0, 200.0), load=50.0)
    sol = solve_baseline(case, BIG)
    assert sol.profit == pytest.approx(0.0, abs=1e-7)


def test_case3_matches_bid_grid(case3, big_m3):
    sol = solve_baseline(case3, big_m3)
    grid = np.linspace(case3.strategic.cost, c_s_max(case3), 10_000)
    best, _ = grid_profit(case3, grid)
    step = grid[1] - grid[0]
    # profit rises at most p_max per unit bid, so the grid can trail by one step of that
    assert best <= sol.profit + 1e-6 * abs(sol.profit)
    assert sol.profit - best <= step * case3.strategic.p_max + 1e-9


def test_solution_satisfies_original_constraints(case9, big_m9):
    sol = solve_baseline(case9, big_m9)
    d = sol.dispatch
    bad = violated_constraints(case9, sol.c_s_star, d.p_g, d.theta, d.alpha, d.gamma,
                               d.phi_min, d.phi_max, d.rho_min, d.rho_max)
    assert bad == []
    assert sol.info["big_m_flags"] == []


def test_vector_round_trip(case9):
    lay = layout_for(case9, binaries=True)
    disp = solve_dcopf(case9, 40.0)
    z = vector_from_dispatch(case9, lay, disp)
    assert milp_point_feasible(build_baseline(case9, BIG), z)
    back = dispatch_from_vector(case9, lay, z)
    assert back.p_g == pytest.approx(disp.p_g)
    assert back.alpha == pytest.approx(disp.alpha)


def test_time_limit(case39, big_m9):
    sol = solve_baseline(case39, BigM(1e4, 1e4), time_limit=0.0)
    assert sol.status == Status.TIME_LIMIT


def test_tight_big_m_is_flagged():
    # both generator slacks of the monopolist equal 50, within 1% of M_p
    case = one_bus(costs=(10.0,), p_max=(100.0,), load=50.0)
    sol = solve_baseline(case, BigM(m_primal=50.2, m_dual=1e4))
    assert sol.feasible
    assert sol.info["big_m_flags"] == ["slack[0]", "slack[1]"]


# ---------------------------------------------------------------------------
# invariants


@pytest.mark.invariant
@settings(max_examples=100)
@given(case=random_case())
def test_binary_count_law(case):
    milp = build_baseline(case, BIG)
    assert milp.binary_vars.size == 2 * case.n_gen + 2 * case.n_line


def _scenario(case, seed):
    return next(feasible_loads(case, np.random.default_rng(seed)))


@pytest.mark.invariant
@settings(max_examples=100)
@given(seed=st.integers(0, 2**32 - 1), name=st.sampled_from(["case3", "case9"]))
def test_big_m_audit(seed, name, case3, case9, big_m3, big_m9):
    case, big_m = {"case3": (case3, big_m3), "case9": (case9, big_m9)}[name]
    scen = _scenario(case, seed)
    sol = solve_baseline(scen, big_m)
    assert sol.status == Status.OPTIMAL
    assert sol.info["big_m_flags"] == []


@pytest.mark.invariant
@settings(max_examples=100)
@given(seed=st.integers(0, 2**32 - 1), name=st.sampled_from(["case3", "case9"]))
def test_baseline_beats_honest_bidding(seed, name, case3, case9, big_m3, big_m9):
    case, big_m = {"case3": (case3, big_m3), "case9": (case9, big_m9)}[name]
    scen = _scenario(case, seed)
    sol = solve_baseline(scen, big_m)
    honest = solve_dcopf(scen, case.strategic.cost).strategic_profit(scen)
    assert sol.profit >= honest - 1e-6 * max(1.0, abs(honest))
    # strong-duality cross-check: the market cleared at the optimal bid pays the same
    replay = solve_dcopf(scen, sol.c_s_star).strategic_profit(scen)
    assert replay == pytest.approx(sol.profit, rel=1e-6, abs=1e-6)

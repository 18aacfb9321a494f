import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from activebilevel.network import Generator, Line, NetworkCase, load_case  # noqa: E402

settings.register_profile(
    "default", max_examples=100, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("default")

_RESULTS = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _RESULTS.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def case3():
    return load_case("case3")


@pytest.fixture(scope="session")
def case9():
    return load_case("case9")


@pytest.fixture(scope="session")
def case39():
    return load_case("case39")


def one_bus(costs=(10.0, 20.0), p_max=(100.0, 100.0), load=50.0, strategic=0):
    gens = tuple(Generator(0, c, 0.0, m) for c, m in zip(costs, p_max))
    return NetworkCase(buses=(0,), lines=(), generators=gens, loads=np.array([load]),
                       ref_bus=0, strategic_gen=strategic, name="one-bus")


def two_bus(limit=30.0, load=80.0):
    """Cheap strategic unit at bus 0 behind a line; expensive rival at the load bus."""
    gens = (Generator(0, 10.0, 0.0, 100.0), Generator(1, 30.0, 0.0, 100.0))
    return NetworkCase(buses=(0, 1), lines=(Line(0, 1, 10.0, limit),), generators=gens,
                       loads=np.array([0.0, load]), ref_bus=0, strategic_gen=0, name="two-bus")


def observed_big_m(case, n_draws=50, seed=0):
    """Big-M from dual maxima over ``n_draws`` random loads cleared at every grid bid."""
    from activebilevel.bilevel import DualMaxima, compute_big_m
    from activebilevel.dataset import c_s_grid, sample_load
    from activebilevel.dcopf import InfeasibleDispatch, solve_dcopf
    from activebilevel.network import scale_loads

    rng = np.random.default_rng(seed)
    maxima = DualMaxima()
    for _ in range(n_draws):
        scen = scale_loads(case, sample_load(case, 0.5, 0.5, rng))
        for c in c_s_grid(case):
            try:
                maxima.update(scen, solve_dcopf(scen, float(c)))
            except InfeasibleDispatch:
                break
    return compute_big_m(maxima, case)


@pytest.fixture(scope="session")
def big_m3(case3):
    return observed_big_m(case3)


@pytest.fixture(scope="session")
def big_m9(case9):
    return observed_big_m(case9)


def feasible_loads(case, rng, x=0.5):
    """Endless stream of scenarios that clear at honest bidding."""
    from activebilevel.dataset import sample_load
    from activebilevel.dcopf import InfeasibleDispatch, solve_dcopf
    from activebilevel.network import scale_loads

    while True:
        scen = scale_loads(case, sample_load(case, x, x, rng))
        try:
            solve_dcopf(scen, case.strategic.cost)
        except InfeasibleDispatch:
            continue
        yield scen

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from activebilevel.network import (CaseError, Generator, Line, NetworkCase, case_from_dict,
                                   load_case, save_case, scale_loads)


def test_case3_dimensions(case3):
    assert (case3.n_bus, case3.n_gen, case3.n_line) == (3, 2, 3)


def test_case9_dimensions(case9):
    assert (case9.n_gen, case9.n_line) == (3, 9)
    assert case9.n_constraints == 24


def test_case39_is_connected(case39):
    adj = {b: set() for b in case39.buses}
    for ln in case39.lines:
        adj[ln.from_bus].add(ln.to_bus)
        adj[ln.to_bus].add(ln.from_bus)
    seen, stack = {case39.ref_bus}, [case39.ref_bus]
    while stack:
        for nb in adj[stack.pop()] - seen:
            seen.add(nb)
            stack.append(nb)
    assert len(seen) == case39.n_bus == 39


def test_pmin_above_pmax_names_generator(case3, tmp_path):
    doc = case3.to_dict()
    doc["generators"][1]["p_min"] = 500.0
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(CaseError) as exc:
        load_case(path)
    assert exc.value.path == "generators[1]"


@pytest.mark.parametrize("mutate,field", [
    (lambda d: d.pop("loads"), "loads"),
    (lambda d: d["lines"][0].update({"to": 99}), "lines[0].to"),
    (lambda d: d["lines"][1].update({"susceptance": -1.0}), "lines[1].susceptance"),
    (lambda d: d.update({"loads": [1.0, 2.0]}), "loads"),
    (lambda d: d.update({"ref_bus": 7}), "ref_bus"),
    (lambda d: d.update({"strategic_gen": 5}), "strategic_gen"),
])
def test_validation_paths(case3, mutate, field):
    doc = case3.to_dict()
    mutate(doc)
    with pytest.raises(CaseError) as exc:
        case_from_dict(doc)
    assert exc.value.path == field


def test_unknown_bundled_case():
    with pytest.raises(FileNotFoundError):
        load_case("case_nope")


def test_scale_loads(case9):
    same = scale_loads(case9, case9.loads)
    assert same == case9
    zero = scale_loads(case9, np.zeros(case9.n_bus))
    assert np.all(zero.loads == 0.0)
    assert case9.loads.sum() > 0
    with pytest.raises(ValueError):
        scale_loads(case9, [1.0])


def test_scaled_case_is_immutable(case3):
    scen = scale_loads(case3, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        scen.loads[0] = 5.0


@st.composite
def random_case(draw):
    n_bus = draw(st.integers(1, 6))
    buses = tuple(range(n_bus))
    finite = st.floats(0.01, 1e4, allow_nan=False)
    lines = []
    for b in range(1, n_bus):
        lines.append(Line(draw(st.integers(0, b - 1)), b, draw(finite), draw(finite)))
    n_gen = draw(st.integers(1, 4))
    gens = []
    for _ in range(n_gen):
        lo = draw(st.floats(0, 100))
        gens.append(Generator(draw(st.integers(0, n_bus - 1)), draw(st.floats(0, 1e3)), lo,
                              lo + draw(st.floats(0, 1e3))))
    loads = draw(st.lists(st.floats(0, 1e3), min_size=n_bus, max_size=n_bus))
    return NetworkCase(buses, tuple(lines), tuple(gens), np.array(loads),
                       draw(st.integers(0, n_bus - 1)), draw(st.integers(0, n_gen - 1)),
                       base_mva=draw(st.sampled_from([1.0, 100.0, 37.5])), name=draw(st.text(max_size=5)))


@pytest.mark.invariant
@settings(max_examples=100)
@given(case=random_case())
def test_save_load_round_trip(case, tmp_path_factory):
    path = tmp_path_factory.mktemp("cases") / "c.json"
    save_case(case, path)
    back = load_case(path)
    assert back == case
    assert back.loads.tobytes() == case.loads.tobytes()

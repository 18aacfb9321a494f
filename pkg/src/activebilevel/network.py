"""Network case data: loading, validation and load replacement.

Cases are single JSON documents::

    {"buses": [0, 1, 2],
     "lines": [{"from": 0, "to": 1, "susceptance": 10.0, "flow_limit": 100.0}, ...],
     "generators": [{"bus": 0, "cost": 10.0, "p_min": 0.0, "p_max": 150.0}, ...],
     "loads": [0.0, 30.0, 120.0],
     "ref_bus": 0,
     "strategic_gen": 0}

Optional keys: ``name`` and ``base_mva`` (default 100).  Susceptances are in
p.u. (1/x), limits and loads in MW, costs in $/MWh, bus ids are 0-based.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np


class CaseError(ValueError):
    """Invalid case data; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    susceptance: float
    flow_limit: float


@dataclass(frozen=True)
class Generator:
    bus: int
    cost: float
    p_min: float
    p_max: float


@dataclass(frozen=True, eq=False)
class NetworkCase:
    buses: tuple
    lines: tuple
    generators: tuple
    loads: np.ndarray
    ref_bus: int
    strategic_gen: int
    base_mva: float = 100.0
    name: str = ""
    _index: dict = field(default=None, repr=False, compare=False)
    # load-independent derived matrices, shared by load variants of a case
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        loads = np.array(self.loads, dtype=float)
        loads.setflags(write=False)
        object.__setattr__(self, "loads", loads)
        object.__setattr__(self, "buses", tuple(int(b) for b in self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "_index", {b: i for i, b in enumerate(self.buses)})
        _validate(self)

    def __eq__(self, other):
        if not isinstance(other, NetworkCase):
            return NotImplemented
        return (self.buses == other.buses and self.lines == other.lines
                and self.generators == other.generators
                and np.array_equal(self.loads, other.loads)
                and self.ref_bus == other.ref_bus and self.strategic_gen == other.strategic_gen
                and self.base_mva == other.base_mva and self.name == other.name)

    __hash__ = None

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def n_line(self) -> int:
        return len(self.lines)

    @property
    def n_constraints(self) -> int:
        """Lower-level inequality count: gen-min, gen-max, flow-min, flow-max."""
        return 2 * self.n_gen + 2 * self.n_line

    def bus_pos(self, bus: int) -> int:
        return self._index[bus]

    @property
    def strategic(self) -> Generator:
        return self.generators[self.strategic_gen]

    @property
    def costs(self) -> np.ndarray:
        return np.array([g.cost for g in self.generators])

    @property
    def p_min(self) -> np.ndarray:
        return np.array([g.p_min for g in self.generators])

    @property
    def p_max(self) -> np.ndarray:
        return np.array([g.p_max for g in self.generators])

    @property
    def flow_limits(self) -> np.ndarray:
        return np.array([ln.flow_limit for ln in self.lines])

    @property
    def susceptances(self) -> np.ndarray:
        return np.array([ln.susceptance for ln in self.lines])

    def to_dict(self) -> dict:
        out = {
            "buses": list(self.buses),
            "lines": [{"from": ln.from_bus, "to": ln.to_bus, "susceptance": ln.susceptance,
                       "flow_limit": ln.flow_limit} for ln in self.lines],
            "generators": [{"bus": g.bus, "cost": g.cost, "p_min": g.p_min, "p_max": g.p_max}
                           for g in self.generators],
            "loads": [float(v) for v in self.loads],
            "ref_bus": self.ref_bus,
            "strategic_gen": self.strategic_gen,
            "base_mva": self.base_mva,
        }
        if self.name:
            out["name"] = self.name
        return out


def _validate(case: NetworkCase) -> None:
    if len(case.buses) == 0:
        raise CaseError("buses", "no buses")
    if len(set(case.buses)) != len(case.buses):
        raise CaseError("buses", "duplicate bus id")
    known = case._index
    for i, ln in enumerate(case.lines):
        for key, bus in (("from", ln.from_bus), ("to", ln.to_bus)):
            if bus not in known:
                raise CaseError(f"lines[{i}].{key}", f"unknown bus {bus}")
        if ln.from_bus == ln.to_bus:
            raise CaseError(f"lines[{i}]", "line connects a bus to itself")
        if not np.isfinite(ln.susceptance) or ln.susceptance <= 0:
            raise CaseError(f"lines[{i}].susceptance", "must be positive and finite")
        if not np.isfinite(ln.flow_limit) or ln.flow_limit < 0:
            raise CaseError(f"lines[{i}].flow_limit", "must be finite and >= 0")
    if len(case.generators) == 0:
        raise CaseError("generators", "no generators")
    for i, g in enumerate(case.generators):
        if g.bus not in known:
            raise CaseError(f"generators[{i}].bus", f"unknown bus {g.bus}")
        if not np.isfinite(g.cost) or g.cost < 0:
            raise CaseError(f"generators[{i}].cost", "must be finite and >= 0")
        if not (np.isfinite(g.p_min) and np.isfinite(g.p_max)):
            raise CaseError(f"generators[{i}]", "limits must be finite")
        if g.p_min > g.p_max:
            raise CaseError(f"generators[{i}]", f"p_min {g.p_min} > p_max {g.p_max}")
    if case.loads.shape != (len(case.buses),):
        raise CaseError("loads", f"expected {len(case.buses)} entries")
    if not np.all(np.isfinite(case.loads)) or np.any(case.loads < 0):
        raise CaseError("loads", "must be finite and >= 0")
    if case.ref_bus not in known:
        raise CaseError("ref_bus", f"unknown bus {case.ref_bus}")
    if not 0 <= case.strategic_gen < len(case.generators):
        raise CaseError("strategic_gen", "index out of range")
    if not np.isfinite(case.base_mva) or case.base_mva <= 0:
        raise CaseError("base_mva", "must be positive")


_REQUIRED = ("buses", "lines", "generators", "loads", "ref_bus", "strategic_gen")


def case_from_dict(doc: dict) -> NetworkCase:
    if not isinstance(doc, dict):
        raise CaseError("$", "case document must be an object")
    for key in _REQUIRED:
        if key not in doc:
            raise CaseError(key, "missing")
    try:
        lines = [Line(int(ln["from"]), int(ln["to"]), float(ln["susceptance"]),
                      float(ln["flow_limit"])) for ln in doc["lines"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CaseError("lines", f"malformed entry ({exc})") from exc
    try:
        gens = [Generator(int(g["bus"]), float(g["cost"]), float(g["p_min"]), float(g["p_max"]))
                for g in doc["generators"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CaseError("generators", f"malformed entry ({exc})") from exc
    return NetworkCase(
        buses=tuple(doc["buses"]), lines=tuple(lines), generators=tuple(gens),
        loads=np.asarray(doc["loads"], dtype=float), ref_bus=int(doc["ref_bus"]),
        strategic_gen=int(doc["strategic_gen"]), base_mva=float(doc.get("base_mva", 100.0)),
        name=str(doc.get("name", "")))


def load_case(path) -> NetworkCase:
    """Read a case JSON file.  ``path`` may also name a bundled case (``case9``)."""
    p = Path(path)
    if not p.exists() and not p.suffix:
        p = bundled_case_path(str(path))
    with open(p) as fh:
        doc = json.load(fh)
    return case_from_dict(doc)


def save_case(case: NetworkCase, path) -> None:
    with open(path, "w") as fh:
        json.dump(case.to_dict(), fh, indent=1)


def bundled_case_path(name: str) -> Path:
    ref = resources.files("activebilevel") / "data" / f"{name}.json"
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled case named {name!r}")
    return Path(str(ref))


def scale_loads(case: NetworkCase, load: Sequence[float]) -> NetworkCase:
    """Return a copy of ``case`` with the per-bus demand replaced by ``load``."""
    load = np.asarray(load, dtype=float)
    if load.shape != (case.n_bus,):
        raise ValueError(f"load has {load.size} entries, case has {case.n_bus} buses")
    return replace(case, loads=load, _index=None)

"""Labelled databases of lower-level active sets.

One draw samples a load, clears the market at every bid of the grid and turns
the resulting active sets into labels:

* ``varlower``: one sample per (load, bid) with that bid's set;
* ``allsets``: one sample per load labelled with the sorted distinct sets;
* ``bestset``: one sample per load labelled with the set of the most
  profitable grid bid (lowest bid on ties).

Draws stop once the Good-Turing estimate of unseen label mass (labels seen
exactly once over samples seen) stays below ``delta`` for two consecutive
batches, or after ``max_batches`` batches, in which case the database is
flagged incomplete.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .bilevel import DualMaxima, c_s_max
from .dcopf import ActiveSet, InfeasibleDispatch, count_degenerate, extract_active_set, solve_dcopf
from .network import NetworkCase, scale_loads

METHODS = ("varlower", "allsets", "bestset")

__all__ = ["METHODS", "DatasetParams", "Sample", "SampleDatabase", "c_s_max", "c_s_grid",
           "sample_load", "label_draw", "generate_database", "generate_databases",
           "save_database", "load_database"]


def sample_load(case: NetworkCase, x_m: float, x_p: float, rng: np.random.Generator) -> np.ndarray:
    """Independent uniform draw per bus in ``[(1 - x_m) P_d, (1 + x_p) P_d]``."""
    if not 0.0 <= x_m < 1.0:
        raise ValueError("x_m must lie in [0, 1)")
    if x_p < 0.0:
        raise ValueError("x_p must be >= 0")
    base = case.loads
    return rng.uniform((1.0 - x_m) * base, (1.0 + x_p) * base)


def c_s_grid(case: NetworkCase, n: int = 10) -> np.ndarray:
    if n < 2:
        raise ValueError("grid needs at least two bids")
    return np.linspace(case.strategic.cost, c_s_max(case), n)


@dataclass(frozen=True)
class DatasetParams:
    x_m: float = 0.5
    x_p: float = 0.5
    grid: int = 10
    delta: float = 0.05
    batch: int = 200
    max_batches: int = 500
    tol_dual: float = 1e-6


@dataclass(frozen=True)
class Sample:
    load: np.ndarray
    label: tuple            # hex-encoded active sets, sorted; length 1 except for allsets
    c_s: Optional[float] = None

    @property
    def key(self) -> str:
        return "|".join(self.label)

    def sets(self, n_gen: int, n_line: int) -> list:
        return [ActiveSet.from_hex(n_gen, n_line, h) for h in self.label]


@dataclass
class SampleDatabase:
    method: str
    case_name: str
    n_gen: int
    n_line: int
    samples: list = field(default_factory=list)
    dual_maxima: DualMaxima = field(default_factory=DualMaxima)
    seed: Optional[int] = None
    params: DatasetParams = field(default_factory=DatasetParams)
    complete: bool = False
    batches: int = 0
    draws: int = 0
    infeasible_draws: int = 0
    degenerate: int = 0
    unseen_mass: float = 1.0

    @property
    def census(self) -> Counter:
        return Counter(s.key for s in self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    def subset(self, idx) -> "SampleDatabase":
        out = SampleDatabase(**{**self.__dict__, "samples": [self.samples[i] for i in idx]})
        return out


@dataclass
class DrawResult:
    """Market outcomes of one load over the bid grid."""

    grid: np.ndarray
    sets: list
    profits: np.ndarray


def label_draw(case: NetworkCase, grid: np.ndarray, tol_dual: float = 1e-6,
               maxima: Optional[DualMaxima] = None) -> tuple:
    """Clear the market at every bid; returns (DrawResult, degenerate count)."""
    sets, profits = [], []
    degenerate = 0
    for c in grid:
        sol = solve_dcopf(case, float(c))
        if maxima is not None:
            maxima.update(case, sol)
        degenerate += count_degenerate(case, sol, tol_dual)
        sets.append(extract_active_set(case, sol, tol_dual))
        profits.append(sol.strategic_profit(case))
    return DrawResult(np.asarray(grid, dtype=float), sets, np.array(profits)), degenerate


def best_index(profits: np.ndarray) -> int:
    """Argmax with ties (relative 1e-9) resolved toward the earliest, i.e. lowest, bid."""
    best = 0
    for i in range(1, len(profits)):
        if profits[i] > profits[best] + 1e-9 * max(1.0, abs(profits[best])):
            best = i
    return best


def samples_from_draw(method: str, load: np.ndarray, res: DrawResult) -> list:
    if method == "varlower":
        return [Sample(load, (s.to_hex(),), float(c)) for c, s in zip(res.grid, res.sets)]
    if method == "allsets":
        return [Sample(load, tuple(sorted({s.to_hex() for s in res.sets})))]
    if method == "bestset":
        return [Sample(load, (res.sets[best_index(res.profits)].to_hex(),))]
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def unseen_mass(census: Counter) -> float:
    n = sum(census.values())
    if n == 0:
        return 1.0
    return sum(1 for v in census.values() if v == 1) / n


def generate_database(method: str, case: NetworkCase, params: DatasetParams = DatasetParams(),
                      rng: Optional[np.random.Generator] = None, seed: Optional[int] = None,
                      progress=None) -> SampleDatabase:
    return generate_databases((method,), case, params, rng, seed, progress)[method]


def generate_databases(methods, case: NetworkCase, params: DatasetParams = DatasetParams(),
                       rng: Optional[np.random.Generator] = None, seed: Optional[int] = None,
                       progress=None) -> dict:
    """Databases for several methods from one shared sequence of load draws.

    Each database stops on its own rule and is then frozen, so it equals the
    database a single-method run with the same generator would produce.
    """
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
    if rng is None:
        rng = np.random.default_rng(seed)
    grid = c_s_grid(case, params.grid)
    dbs = {m: SampleDatabase(method=m, case_name=case.name, n_gen=case.n_gen, n_line=case.n_line,
                             seed=seed, params=params) for m in methods}
    censuses = {m: Counter() for m in methods}
    below = dict.fromkeys(methods, 0)
    batches = 0
    while batches < params.max_batches and not all(db.complete for db in dbs.values()):
        open_dbs = [db for db in dbs.values() if not db.complete]
        for _ in range(params.batch):
            load = sample_load(case, params.x_m, params.x_p, rng)
            for db in open_dbs:
                db.draws += 1
            try:
                res, deg = label_draw(scale_loads(case, load), grid, params.tol_dual,
                                      open_dbs[0].dual_maxima)
            except InfeasibleDispatch:
                for db in open_dbs:
                    db.infeasible_draws += 1
                continue
            for db in open_dbs:
                db.degenerate += deg
                for s in samples_from_draw(db.method, load, res):
                    db.samples.append(s)
                    censuses[db.method][s.key] += 1
        batches += 1
        for db in open_dbs[1:]:
            db.dual_maxima = db.dual_maxima.merge(open_dbs[0].dual_maxima)
        for db in open_dbs:
            db.batches = batches
            if not db.samples:
                raise InfeasibleDispatch("every sampled load was infeasible for the market clearing")
            db.unseen_mass = unseen_mass(censuses[db.method])
            below[db.method] = below[db.method] + 1 if db.unseen_mass < params.delta else 0
            if below[db.method] >= 2:
                db.complete = True
            if progress is not None:
                progress(db)
    return dbs


# ---------------------------------------------------------------------------
# persistence


def save_database(db: SampleDatabase, path) -> None:
    header = {"kind": "header", "method": db.method, "case": db.case_name, "n_gen": db.n_gen,
              "n_line": db.n_line, "seed": db.seed, "params": asdict(db.params),
              "dual_maxima": db.dual_maxima.to_dict(), "complete": db.complete,
              "batches": db.batches, "draws": db.draws, "infeasible_draws": db.infeasible_draws,
              "degenerate": db.degenerate, "unseen_mass": db.unseen_mass,
              "census": dict(sorted(db.census.items()))}
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for s in db.samples:
            rec = {"load": [float(v) for v in s.load], "label": list(s.label)}
            if s.c_s is not None:
                rec["c_s"] = s.c_s
            fh.write(json.dumps(rec) + "\n")


def load_database(path) -> SampleDatabase:
    path = Path(path)
    with open(path) as fh:
        lines = [ln for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty database file")
    head = json.loads(lines[0])
    if head.get("kind") != "header":
        raise ValueError(f"{path}: first record is not a header")
    db = SampleDatabase(method=head["method"], case_name=head.get("case", ""), n_gen=head["n_gen"],
                        n_line=head["n_line"], seed=head.get("seed"),
                        params=DatasetParams(**head["params"]),
                        dual_maxima=DualMaxima.from_dict(head["dual_maxima"]),
                        complete=head["complete"], batches=head["batches"], draws=head["draws"],
                        infeasible_draws=head["infeasible_draws"], degenerate=head["degenerate"],
                        unseen_mass=head["unseen_mass"])
    for ln in lines[1:]:
        rec = json.loads(ln)
        db.samples.append(Sample(np.array(rec["load"], dtype=float), tuple(rec["label"]),
                                 rec.get("c_s")))
    return db

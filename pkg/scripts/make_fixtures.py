"""Regenerate the bundled case files under src/activebilevel/data/.

case9 and case39 are converted from the MATPOWER data shipped with PYPOWER
(``pip install pypower``; only needed to rerun this script).  Bus numbers
become 0-based, susceptance is 1/x, flow limits are rateA.  Generator costs
are replaced by the fixed linear costs below.  case9 minimum outputs are set
to zero, as they already are in case39, so the strategic unit can be priced
out entirely.  case3 is a hand-made triangle.

    python scripts/make_fixtures.py
"""
import json
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "activebilevel" / "data"

# $/MWh, in MATPOWER generator order; index 0 is the strategic generator
CASE9_COSTS = [12.0, 25.0, 28.0]
CASE39_COSTS = [10.0, 28.0, 16.0, 24.0, 35.0, 19.0, 31.0, 22.0, 13.0, 40.0]


def convert(ppc, costs, name, zero_pmin=False):
    bus_ids = [int(b) for b in ppc["bus"][:, 0]]
    pos = {b: i for i, b in enumerate(bus_ids)}
    loads = [float(v) for v in ppc["bus"][:, 2]]
    ref = [pos[int(b[0])] for b in ppc["bus"] if int(b[1]) == 3][0]
    lines = []
    for br in ppc["branch"]:
        lines.append({"from": pos[int(br[0])], "to": pos[int(br[1])],
                      "susceptance": round(1.0 / float(br[3]), 6), "flow_limit": float(br[5])})
    gens = []
    for g, c in zip(ppc["gen"], costs):
        p_min = 0.0 if zero_pmin else float(g[9])
        gens.append({"bus": pos[int(g[0])], "cost": c, "p_min": p_min, "p_max": float(g[8])})
    return {"name": name, "base_mva": float(ppc["baseMVA"]), "buses": list(range(len(bus_ids))),
            "lines": lines, "generators": gens, "loads": loads, "ref_bus": ref, "strategic_gen": 0}


def case3():
    return {
        "name": "case3",
        "base_mva": 100.0,
        "buses": [0, 1, 2],
        "lines": [
            {"from": 0, "to": 1, "susceptance": 10.0, "flow_limit": 120.0},
            {"from": 0, "to": 2, "susceptance": 10.0, "flow_limit": 70.0},
            {"from": 1, "to": 2, "susceptance": 10.0, "flow_limit": 100.0},
        ],
        "generators": [
            {"bus": 0, "cost": 10.0, "p_min": 0.0, "p_max": 160.0},
            {"bus": 1, "cost": 25.0, "p_min": 0.0, "p_max": 200.0},
        ],
        "loads": [0.0, 40.0, 110.0],
        "ref_bus": 0,
        "strategic_gen": 0,
    }


def main():
    from pypower.case9 import case9
    from pypower.case39 import case39

    OUT.mkdir(parents=True, exist_ok=True)
    docs = {"case3": case3(),
            "case9": convert(case9(), CASE9_COSTS, "case9", zero_pmin=True),
            "case39": convert(case39(), CASE39_COSTS, "case39")}
    for name, doc in docs.items():
        with open(OUT / f"{name}.json", "w") as fh:
            json.dump(doc, fh, indent=1)
        print(f"wrote {name}: {len(doc['buses'])} buses, {len(doc['generators'])} gens, "
              f"{len(doc['lines'])} lines")


if __name__ == "__main__":
    main()

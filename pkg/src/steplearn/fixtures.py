"""Desk-scale test systems and scenario trees, written to ``steplearn/data``.

IEEE 33-bus: the standard Baran-Wu radial feeder (32 branches, loads in kW
converted to MW) with the three normally-open tie lines 8-21, 12-22 and
25-29 as candidates. The original case has no line ratings and a single
supply point, so this module adds feeder ratings, two local diesel units, a
wind farm at bus 25 and two solar plants. Ratings are chosen so that the
29-33 pocket is supply-limited under high demand growth: the tie 25-29 then
relieves shedding while the two lateral ties carry no benefit.

IEEE RTS-24: the 24-bus reliability test system with parallel circuits
merged (34 corridors), aggregated generating units per bus, six 200 MW wind
farms, and three candidate corridors.

Run ``python -m steplearn.fixtures`` to rewrite the YAML files and print the
shed-row calibration for the IEEE 33-bus sampler setting.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .grid.io import save_network, save_tree
from .grid.types import (SOLAR, THERMAL, WIND, Generator, Line, Load, Network, ScenarioTree,
                         TreeNode)

DATA_DIR = Path(__file__).parent / "data"

# per-unit daily shapes shared by both systems
DEMAND_SHAPE = (0.62, 0.58, 0.56, 0.55, 0.56, 0.60, 0.68, 0.78, 0.85, 0.88, 0.90, 0.91,
                0.90, 0.89, 0.88, 0.89, 0.93, 0.98, 1.00, 0.99, 0.95, 0.87, 0.77, 0.68)
WIND_SHAPE = (0.72, 0.75, 0.78, 0.80, 0.79, 0.76, 0.70, 0.62, 0.55, 0.48, 0.42, 0.38,
              0.35, 0.34, 0.36, 0.40, 0.46, 0.53, 0.60, 0.65, 0.68, 0.70, 0.71, 0.72)
SOLAR_SHAPE = (0.0, 0.0, 0.0, 0.0, 0.0, 0.02, 0.10, 0.25, 0.42, 0.58, 0.70, 0.78,
               0.80, 0.77, 0.68, 0.55, 0.38, 0.20, 0.06, 0.0, 0.0, 0.0, 0.0, 0.0)

# Baran-Wu branches (from, to) and bus loads in kW (buses 2..33)
IEEE33_BRANCHES = (
    (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 8), (8, 9), (9, 10), (10, 11),
    (11, 12), (12, 13), (13, 14), (14, 15), (15, 16), (16, 17), (17, 18), (2, 19), (19, 20),
    (20, 21), (21, 22), (3, 23), (23, 24), (24, 25), (6, 26), (26, 27), (27, 28), (28, 29),
    (29, 30), (30, 31), (31, 32), (32, 33),
)
IEEE33_LOAD_KW = (100, 90, 120, 60, 60, 200, 200, 60, 60, 45, 60, 60, 120, 60, 60, 60, 90,
                  90, 90, 90, 90, 90, 420, 420, 60, 60, 60, 120, 200, 150, 210, 60)
IEEE33_CANDIDATES = ((33, 8, 21, 1.0, 100_000.0), (34, 12, 22, 1.0, 100_000.0),
                     (35, 25, 29, 3.8, 100_000.0))

# added feeder ratings in MW, by branch (default applies elsewhere)
IEEE33_RATINGS = {(1, 2): 5.0, (2, 3): 4.5, (3, 4): 3.0, (4, 5): 3.0, (5, 6): 3.0,
                  (2, 19): 1.0, (3, 23): 2.5, (23, 24): 2.5, (24, 25): 2.5,
                  (6, 26): 1.5, (26, 27): 1.5, (27, 28): 1.5, (28, 29): 0.62}
IEEE33_DEFAULT_RATING = 1.2

IEEE33_GENERATORS = (
    ("G1", 1, THERMAL, 5.0, 50.0),   # substation import
    ("G2", 18, THERMAL, 0.3, 180.0),  # feeder-end diesel
    ("G3", 33, THERMAL, 0.25, 250.0),  # pocket diesel
    ("WT1", 25, WIND, 1.2, 0.0),
    ("PV1", 14, SOLAR, 0.4, 0.0),
    ("PV2", 31, SOLAR, 0.3, 0.0),
)


def ieee33_network() -> Network:
    lines = []
    for i, (a, b) in enumerate(IEEE33_BRANCHES, start=1):
        lines.append(Line(i, a, b, IEEE33_RATINGS.get((a, b), IEEE33_DEFAULT_RATING)))
    for lid, a, b, cap, cost in IEEE33_CANDIDATES:
        lines.append(Line(lid, a, b, cap, is_candidate=True, cost_per_mw=cost))
    gens = tuple(Generator(*g) for g in IEEE33_GENERATORS)
    loads = tuple(Load(f"L{bus}", bus, tuple(round(kw / 1000.0 * v, 6) for v in DEMAND_SHAPE))
                  for bus, kw in zip(range(2, 34), IEEE33_LOAD_KW))
    return Network("ieee33", tuple(range(1, 34)), tuple(lines), gens, loads, WIND_SHAPE,
                   SOLAR_SHAPE)


# three development paths, loosely "step change", "progressive", "green exports":
# (tag, probability, demand growth per stage, renewable capacity multipliers per stage)
PATHS7 = (("A", 0.43, (1.08, 1.36), {}),
          ("B", 0.42, (1.04, 1.12), {}),
          ("C", 0.15, (1.06, 1.33), {"WT1": (1.3, 1.8)}))
PATHS13 = (("A", 0.43, (1.06, 1.18, 1.32, 1.45), {}),
           ("B", 0.42, (1.03, 1.06, 1.09, 1.12), {}),
           ("C", 0.15, (1.05, 1.15, 1.28, 1.40), {"WT1": (1.3, 1.5, 1.7, 1.9)}))


def path_tree(paths, years, name: str, annuity_factor: float = 0.005) -> ScenarioTree:
    """Root plus one chain of nodes per development path."""
    stages = len(years)
    nodes = [TreeNode("R", None, 0, 0, 1.0, 1.0, label="base year")]
    for tag, prob, growth, gmul in paths:
        parent = "R"
        for k in range(stages):
            nid = f"{tag}{k + 1}"
            mult = {g: v[k] for g, v in gmul.items()}
            nodes.append(TreeNode(nid, parent, k + 1, years[k], prob, growth[k], mult,
                                  label=f"path {tag}"))
            parent = nid
    return ScenarioTree(tuple(nodes), discount_rate=0.06, voll=15_000.0, reliability=2e-5,
                        annuity_factor=annuity_factor, name=name)


def desk_tree7() -> ScenarioTree:
    return path_tree(PATHS7, (5, 10), "desk7")


def tree13() -> ScenarioTree:
    return path_tree(PATHS13, (3, 6, 9, 12), "paths13")


def two_bus_network(line_capacity: float = 10.0, demand: float = 8.0, hours: int = 1,
                    candidate: bool = False) -> Network:
    """Generator at bus 1, load at bus 2, one line (optionally a second candidate)."""
    lines = [Line("l1", 1, 2, line_capacity)]
    if candidate:
        lines.append(Line("c1", 1, 2, line_capacity, is_candidate=True, cost_per_mw=10.0))
    return Network("two-bus", (1, 2), tuple(lines), (Generator("g1", 1, THERMAL, 10.0, 5.0),),
                   (Load("d2", 2, (demand,) * hours),), (0.0,) * hours, (0.0,) * hours)


# RTS-24: merged corridors (from, to, MW rating)
RTS24_BRANCHES = (
    (1, 2, 175), (1, 3, 175), (1, 5, 175), (2, 4, 175), (2, 6, 175), (3, 9, 175), (3, 24, 400),
    (4, 9, 175), (5, 10, 175), (6, 10, 175), (7, 8, 175), (8, 9, 175), (8, 10, 175),
    (9, 11, 400), (9, 12, 400), (10, 11, 400), (10, 12, 400), (11, 13, 500), (11, 14, 500),
    (12, 13, 500), (12, 23, 500), (13, 23, 500), (14, 16, 500), (15, 16, 500), (15, 21, 1000),
    (15, 24, 500), (16, 17, 500), (16, 19, 500), (17, 18, 500), (17, 22, 500), (18, 21, 1000),
    (19, 20, 1000), (20, 23, 1000), (21, 22, 500),
)
RTS24_LOADS = {1: 108, 2: 97, 3: 180, 4: 74, 5: 71, 6: 136, 7: 125, 8: 171, 9: 175, 10: 195,
               13: 265, 14: 194, 15: 317, 16: 100, 18: 333, 19: 181, 20: 128}
RTS24_THERMAL = ((1, 192, 24.0), (2, 192, 24.0), (7, 300, 68.0), (13, 591, 52.0),
                 (15, 215, 26.0), (16, 155, 22.0), (18, 400, 6.0), (21, 400, 6.0),
                 (22, 300, 1.0), (23, 660, 20.0))
RTS24_WIND_BUSES = (3, 5, 7, 16, 21, 23)
RTS24_CANDIDATES = ((35, 18, 21, 100.0, 500_000.0), (36, 15, 22, 100.0, 500_000.0),
                    (37, 13, 23, 100.0, 500_000.0))


def rts24_network() -> Network:
    lines = [Line(i, a, b, float(cap)) for i, (a, b, cap) in enumerate(RTS24_BRANCHES, start=1)]
    lines += [Line(lid, a, b, cap, True, cost) for lid, a, b, cap, cost in RTS24_CANDIDATES]
    gens = [Generator(f"G{bus}", bus, THERMAL, float(cap), cost)
            for bus, cap, cost in RTS24_THERMAL]
    gens += [Generator(f"WT{i}", bus, WIND, 200.0, 0.0)
             for i, bus in enumerate(RTS24_WIND_BUSES, start=1)]
    loads = [Load(f"L{bus}", bus, tuple(float(mw) * v for v in DEMAND_SHAPE))
             for bus, mw in RTS24_LOADS.items()]
    return Network("rts24", tuple(range(1, 25)), tuple(lines), tuple(gens), tuple(loads),
                   WIND_SHAPE, SOLAR_SHAPE)


def write_all(directory: Path = DATA_DIR) -> list[Path]:
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, net in (("ieee33.network.yaml", ieee33_network()),
                      ("rts24.network.yaml", rts24_network()),
                      ("two_bus.network.yaml", two_bus_network())):
        save_network(net, directory / name)
        out.append(directory / name)
    for name, tree in (("desk7.tree.yaml", desk_tree7()), ("paths13.tree.yaml", tree13())):
        save_tree(tree, directory / name)
        out.append(directory / name)
    return out


def calibration_report(draws: int = 20, half_range: float = 0.25, seed: int = 0) -> dict:
    """Shed-row fraction of the IEEE 33-bus sampler setting (target 5-20 %)."""
    from .sampler import SamplerConfig, generate_rows

    rows = generate_rows(ieee33_network(), desk_tree7(),
                         SamplerConfig(n_runs=draws, half_range=half_range, seed=seed))
    shed = np.array([r.target_shed for r in rows])
    flag = np.array([r.infeasible for r in rows])
    return {"rows": len(rows), "shed_fraction": float(np.mean(shed > 1e-9)),
            "flagged_fraction": float(np.mean(flag))}


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=DATA_DIR)
    ap.add_argument("--calibrate", type=int, default=0, metavar="DRAWS",
                    help="also report the shed fraction over this many draws per node/config")
    args = ap.parse_args(argv)
    for p in write_all(args.out):
        print(p)
    if args.calibrate:
        print(calibration_report(args.calibrate))


if __name__ == "__main__":
    main()

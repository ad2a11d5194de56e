"""YAML file formats for networks and scenario trees.

Network file (``schema: steplearn-network/1``)::

    name: ieee33
    buses: [1, 2, 3]
    profiles:
      wind: [0.4, 0.5, ...]        # per-unit availability, one value per hour
      solar: [0.0, 0.1, ...]
      shapes:                      # optional named load shapes
        residential: [0.6, 0.7, ...]
    lines:
      - {id: 1, from: 1, to: 2, capacity: 5.0}
      - {id: 35, from: 25, to: 29, capacity: 3.8, candidate: true, cost_per_mw: 100000}
    generators:
      - {id: G1, bus: 1, kind: thermal, capacity: 4.0, marginal_cost: 50}
    loads:
      - {id: L2, bus: 2, profile: [0.1, 0.09, ...]}   # explicit MW profile
      - {id: L3, bus: 3, peak: 0.09, shape: residential}

Tree file (``schema: steplearn-tree/1``)::

    name: desk7
    discount_rate: 0.06
    voll: 15000
    reliability: 0.00002
    annuity_factor: 1.0
    nodes:
      - {id: root, parent: null, year: 0, probability: 1.0}
      - {id: a1, parent: root, year: 5, probability: 0.5, demand_growth: 1.1,
         generator_multipliers: {WT1: 1.5}, load_multipliers: {L30: 1.2}}

``stage`` may be given per node; it is otherwise derived from the parent chain.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Mapping

import yaml

from .types import (GENERATOR_KINDS, Generator, Line, Load, Network, ScenarioTree,
                    TreeNode)

NETWORK_SCHEMA = "steplearn-network/1"
TREE_SCHEMA = "steplearn-tree/1"
PROB_TOL = 1e-9


class GridFileError(ValueError):
    """Base class for network / tree file problems."""


class ParseError(GridFileError):
    """The file is not well-formed YAML of the expected overall shape."""


class ValidationError(GridFileError):
    """The file parses but violates a schema or consistency rule."""

    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def _read_yaml(path) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: malformed YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be a mapping")
    return doc


def _num(value, path: str, *, nonneg: bool = True) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(path, f"expected a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ValidationError(path, "must be finite")
    if nonneg and v < 0:
        raise ValidationError(path, f"must be nonnegative, got {v}")
    return v


def _series(value, path: str, *, unit: bool = False) -> tuple[float, ...]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ValidationError(path, "expected a non-empty list of numbers")
    out = tuple(_num(v, f"{path}[{i}]") for i, v in enumerate(value))
    if unit and any(v > 1.0 for v in out):
        i = next(i for i, v in enumerate(out) if v > 1.0)
        raise ValidationError(f"{path}[{i}]", "availability factors must lie in [0, 1]")
    return out


def _require(d: Mapping, key: str, path: str):
    if key not in d:
        raise ValidationError(f"{path}.{key}" if path else key, "missing required field")
    return d[key]


def _list(d: Mapping, key: str, path: str = "") -> list:
    v = d.get(key, [])
    if v is None:
        return []
    if not isinstance(v, list):
        raise ValidationError(key, "expected a list")
    return v


def _entries(items: list, key: str) -> list[tuple[str, dict]]:
    out = []
    for i, item in enumerate(items):
        p = f"{key}[{i}]"
        if not isinstance(item, dict):
            raise ValidationError(p, "expected a mapping")
        out.append((p, item))
    return out


def _unique(ids, what: str) -> None:
    seen = set()
    for i, x in enumerate(ids):
        if x in seen:
            raise ValidationError(f"{what}[{i}].id", f"duplicate id {x!r}")
        seen.add(x)


def network_from_dict(doc: Mapping, horizon: int | None = None) -> Network:
    """Build and validate a :class:`Network` from a parsed document."""
    schema = doc.get("schema", NETWORK_SCHEMA)
    if schema != NETWORK_SCHEMA:
        raise ValidationError("schema", f"unsupported schema {schema!r}")
    buses = _require(doc, "buses", "")
    if not isinstance(buses, list) or not buses:
        raise ValidationError("buses", "expected a non-empty list")
    if len(set(buses)) != len(buses):
        raise ValidationError("buses", "duplicate bus id")
    bus_set = set(buses)

    def bus_ref(value, path):
        if value not in bus_set:
            raise ValidationError(path, f"unknown bus {value!r}")
        return value

    profiles = doc.get("profiles") or {}
    if not isinstance(profiles, dict):
        raise ValidationError("profiles", "expected a mapping")
    wind = _series(_require(profiles, "wind", "profiles"), "profiles.wind", unit=True)
    solar = _series(_require(profiles, "solar", "profiles"), "profiles.solar", unit=True)
    shapes_doc = profiles.get("shapes") or {}
    shapes = {k: _series(v, f"profiles.shapes.{k}") for k, v in shapes_doc.items()}
    T = len(wind)
    if len(solar) != T:
        raise ValidationError("profiles.solar", f"length {len(solar)} differs from wind length {T}")
    for k, v in shapes.items():
        if len(v) != T:
            raise ValidationError(f"profiles.shapes.{k}", f"length {len(v)} differs from horizon {T}")

    lines = []
    for p, e in _entries(_list(doc, "lines"), "lines"):
        cand = bool(e.get("candidate", False))
        cost = _num(e.get("cost_per_mw", 0.0), f"{p}.cost_per_mw")
        if cost and not cand:
            raise ValidationError(f"{p}.cost_per_mw", "only candidate lines carry a cost")
        lines.append(Line(id=_require(e, "id", p),
                          from_bus=bus_ref(_require(e, "from", p), f"{p}.from"),
                          to_bus=bus_ref(_require(e, "to", p), f"{p}.to"),
                          capacity=_num(_require(e, "capacity", p), f"{p}.capacity"),
                          is_candidate=cand, cost_per_mw=cost))
    _unique([ln.id for ln in lines], "lines")
    for i, ln in enumerate(lines):
        if ln.from_bus == ln.to_bus:
            raise ValidationError(f"lines[{i}]", "line endpoints must differ")

    gens = []
    for p, e in _entries(_list(doc, "generators"), "generators"):
        kind = _require(e, "kind", p)
        if kind not in GENERATOR_KINDS:
            raise ValidationError(f"{p}.kind", f"expected one of {GENERATOR_KINDS}, got {kind!r}")
        gens.append(Generator(id=_require(e, "id", p),
                              bus=bus_ref(_require(e, "bus", p), f"{p}.bus"), kind=kind,
                              capacity=_num(_require(e, "capacity", p), f"{p}.capacity"),
                              marginal_cost=_num(e.get("marginal_cost", 0.0), f"{p}.marginal_cost")))
    _unique([g.id for g in gens], "generators")

    loads = []
    for p, e in _entries(_list(doc, "loads"), "loads"):
        if "profile" in e:
            prof = _series(e["profile"], f"{p}.profile")
        else:
            peak = _num(_require(e, "peak", p), f"{p}.peak")
            shape = _require(e, "shape", p)
            if shape not in shapes:
                raise ValidationError(f"{p}.shape", f"unknown shape {shape!r}")
            prof = tuple(peak * v for v in shapes[shape])
        if len(prof) != T:
            raise ValidationError(f"{p}.profile", f"length {len(prof)} differs from horizon {T}")
        loads.append(Load(id=_require(e, "id", p),
                          bus=bus_ref(_require(e, "bus", p), f"{p}.bus"), profile=prof))
    _unique([ld.id for ld in loads], "loads")

    if horizon is not None:
        if not 1 <= horizon <= T:
            raise ValidationError("profiles", f"requested horizon {horizon} not in [1, {T}]")
        wind, solar = wind[:horizon], solar[:horizon]
        loads = [Load(ld.id, ld.bus, ld.profile[:horizon]) for ld in loads]

    return Network(name=str(doc.get("name", "network")), buses=tuple(buses), lines=tuple(lines),
                   generators=tuple(gens), loads=tuple(loads), wind_profile=wind,
                   solar_profile=solar)


def load_network(path, horizon: int | None = None) -> Network:
    """Parse and validate a network file; `horizon` truncates all profiles to the first T hours."""
    return network_from_dict(_read_yaml(path), horizon)


def network_to_dict(net: Network) -> dict:
    lines = []
    for ln in net.lines:
        e = {"id": ln.id, "from": ln.from_bus, "to": ln.to_bus, "capacity": ln.capacity}
        if ln.is_candidate:
            e["candidate"] = True
            e["cost_per_mw"] = ln.cost_per_mw
        lines.append(e)
    return {
        "schema": NETWORK_SCHEMA,
        "name": net.name,
        "buses": list(net.buses),
        "profiles": {"wind": list(net.wind_profile), "solar": list(net.solar_profile)},
        "lines": lines,
        "generators": [{"id": g.id, "bus": g.bus, "kind": g.kind, "capacity": g.capacity,
                        "marginal_cost": g.marginal_cost} for g in net.generators],
        "loads": [{"id": ld.id, "bus": ld.bus, "profile": list(ld.profile)} for ld in net.loads],
    }


def save_network(net: Network, path) -> None:
    Path(path).write_text(yaml.safe_dump(network_to_dict(net), sort_keys=False,
                                         default_flow_style=None))


def tree_from_dict(doc: Mapping) -> ScenarioTree:
    """Build and validate a :class:`ScenarioTree` from a parsed document."""
    schema = doc.get("schema", TREE_SCHEMA)
    if schema != TREE_SCHEMA:
        raise ValidationError("schema", f"unsupported schema {schema!r}")
    rate = _num(doc.get("discount_rate", 0.06), "discount_rate", nonneg=False)
    if rate <= -1.0:
        raise ValidationError("discount_rate", "must exceed -1")
    voll = _num(doc.get("voll", 15_000.0), "voll")
    gamma = _num(doc.get("reliability", 2e-5), "reliability")
    if gamma >= 1.0:
        raise ValidationError("reliability", "must satisfy 0 <= gamma < 1")
    annuity = _num(doc.get("annuity_factor", 1.0), "annuity_factor")

    raw = _entries(_list(doc, "nodes"), "nodes")
    if not raw:
        raise ValidationError("nodes", "tree needs at least one node")
    ids = [_require(e, "id", p) for p, e in raw]
    _unique(ids, "nodes")
    parents = {}
    for (p, e), nid in zip(raw, ids):
        par = e.get("parent")
        if par is not None and par not in ids:
            raise ValidationError(f"{p}.parent", f"unknown parent {par!r}")
        if par == nid:
            raise ValidationError(f"{p}.parent", "node is its own parent")
        parents[nid] = par
    roots = [nid for nid in ids if parents[nid] is None]
    if len(roots) != 1:
        raise ValidationError("nodes", f"expected exactly one root, found {len(roots)}")

    stages: dict = {}
    for nid in ids:
        chain, cur = [], nid
        while cur not in stages:
            if cur in chain:
                raise ValidationError("nodes", f"parent cycle through {cur!r}")
            chain.append(cur)
            if parents[cur] is None:
                stages[cur] = 0
                chain.pop()
                break
            cur = parents[cur]
        for k in reversed(chain):
            stages[k] = stages[parents[k]] + 1

    nodes = []
    for (p, e), nid in zip(raw, ids):
        year = _num(_require(e, "year", p), f"{p}.year")
        if year != int(year):
            raise ValidationError(f"{p}.year", "years are whole numbers counted from the root")
        if "stage" in e and e["stage"] != stages[nid]:
            raise ValidationError(f"{p}.stage", f"declared {e['stage']} but parent chain gives {stages[nid]}")
        gm = e.get("generator_multipliers") or {}
        lm = e.get("load_multipliers") or {}
        for key, mp in (("generator_multipliers", gm), ("load_multipliers", lm)):
            if not isinstance(mp, dict):
                raise ValidationError(f"{p}.{key}", "expected a mapping")
            for k, v in mp.items():
                _num(v, f"{p}.{key}.{k}")
        nodes.append(TreeNode(id=nid, parent=parents[nid], stage=stages[nid], year=int(year),
                              probability=_num(_require(e, "probability", p), f"{p}.probability"),
                              demand_growth=_num(e.get("demand_growth", 1.0), f"{p}.demand_growth"),
                              generator_multipliers={k: float(v) for k, v in gm.items()},
                              load_multipliers={k: float(v) for k, v in lm.items()},
                              label=str(e.get("label", ""))))
    tree = ScenarioTree(nodes=tuple(nodes), discount_rate=rate, voll=voll, reliability=gamma,
                        annuity_factor=annuity, name=str(doc.get("name", "tree")))
    _check_tree(tree)
    return tree


def _check_tree(tree: ScenarioTree) -> None:
    root = tree.root
    ri = tree.index[root.id]
    if root.year != 0:
        raise ValidationError(f"nodes[{ri}].year", "root year must be 0")
    if abs(root.probability - 1.0) > PROB_TOL:
        raise ValidationError(f"nodes[{ri}].probability", "root probability must be 1")
    for nd in tree.nodes:
        i = tree.index[nd.id]
        kids = tree.children_of[nd.id]
        if nd.parent is not None and nd.year <= tree.node(nd.parent).year:
            raise ValidationError(f"nodes[{i}].year", "year must increase from parent to child")
        if kids:
            total = sum(tree.node(k).probability for k in kids)
            if abs(total - nd.probability) > PROB_TOL:
                raise ValidationError(f"nodes[{i}].probability",
                                      f"children of {nd.id!r} sum to {total:.12g}, "
                                      f"parent has {nd.probability:.12g}")
    leaf_sum = sum(nd.probability for nd in tree.leaves)
    if abs(leaf_sum - 1.0) > PROB_TOL:
        raise ValidationError("nodes", f"leaf probabilities sum to {leaf_sum:.12g}")


def load_tree(path) -> ScenarioTree:
    return tree_from_dict(_read_yaml(path))


def tree_to_dict(tree: ScenarioTree) -> dict:
    nodes = []
    for nd in tree.nodes:
        e = {"id": nd.id, "parent": nd.parent, "stage": nd.stage, "year": nd.year,
             "probability": nd.probability, "demand_growth": nd.demand_growth}
        if nd.generator_multipliers:
            e["generator_multipliers"] = dict(nd.generator_multipliers)
        if nd.load_multipliers:
            e["load_multipliers"] = dict(nd.load_multipliers)
        if nd.label:
            e["label"] = nd.label
        nodes.append(e)
    return {"schema": TREE_SCHEMA, "name": tree.name, "discount_rate": tree.discount_rate,
            "voll": tree.voll, "reliability": tree.reliability,
            "annuity_factor": tree.annuity_factor, "nodes": nodes}


def save_tree(tree: ScenarioTree, path) -> None:
    Path(path).write_text(yaml.safe_dump(tree_to_dict(tree), sort_keys=False,
                                         default_flow_style=None))


def check_compatible(net: Network, tree: ScenarioTree) -> None:
    """Tree multipliers must name generators / loads that exist in the network."""
    gids = {g.id for g in net.generators}
    lids = {ld.id for ld in net.loads}
    for nd in tree.nodes:
        i = tree.index[nd.id]
        for k in nd.generator_multipliers:
            if k not in gids:
                raise ValidationError(f"nodes[{i}].generator_multipliers.{k}", "unknown generator")
        for k in nd.load_multipliers:
            if k not in lids:
                raise ValidationError(f"nodes[{i}].load_multipliers.{k}", "unknown load")

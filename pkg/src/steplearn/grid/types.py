"""Immutable domain types: networks, scenario trees, investment plans, dispatch results."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterator, Mapping, Sequence

import numpy as np

BusId = Hashable

THERMAL, WIND, SOLAR = "thermal", "wind", "solar"
GENERATOR_KINDS = (THERMAL, WIND, SOLAR)


@dataclass(frozen=True)
class Line:
    id: Hashable
    from_bus: BusId
    to_bus: BusId
    capacity: float  # MW
    is_candidate: bool = False
    cost_per_mw: float = 0.0  # $ per MW, candidates only


@dataclass(frozen=True)
class Generator:
    id: Hashable
    bus: BusId
    kind: str
    capacity: float  # MW
    marginal_cost: float  # $/MWh

    @property
    def is_renewable(self) -> bool:
        return self.kind in (WIND, SOLAR)


@dataclass(frozen=True)
class Load:
    id: Hashable
    bus: BusId
    profile: tuple[float, ...]  # MW per hour


@dataclass(frozen=True)
class Network:
    name: str
    buses: tuple[BusId, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]
    wind_profile: tuple[float, ...]
    solar_profile: tuple[float, ...]

    @property
    def horizon(self) -> int:
        return len(self.wind_profile)

    @cached_property
    def candidates(self) -> tuple[Line, ...]:
        return tuple(ln for ln in self.lines if ln.is_candidate)

    @cached_property
    def renewables(self) -> tuple[Generator, ...]:
        return tuple(g for g in self.generators if g.is_renewable)

    @cached_property
    def bus_index(self) -> dict[BusId, int]:
        return {b: i for i, b in enumerate(self.buses)}

    def availability(self, gen: Generator) -> np.ndarray:
        """Per-unit hourly availability before perturbation."""
        if gen.kind == WIND:
            return np.asarray(self.wind_profile, dtype=float)
        if gen.kind == SOLAR:
            return np.asarray(self.solar_profile, dtype=float)
        return np.ones(self.horizon)

    def total_baseline_demand(self) -> float:
        return float(sum(sum(ld.profile) for ld in self.loads))


class FrozenMap(Mapping):
    """Read-only dict view that survives pickling (worker processes)."""

    __slots__ = ("_data",)

    def __init__(self, data: Mapping | None = None) -> None:
        self._data = dict(data or {})

    def __getitem__(self, key):
        return self._data[key]

    def __iter__(self) -> Iterator:
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def __repr__(self) -> str:
        return f"FrozenMap({self._data!r})"

    def __getstate__(self):
        return self._data

    def __setstate__(self, state) -> None:
        self._data = state


def _frozen_map(m: Mapping | None) -> Mapping:
    return FrozenMap(m)


@dataclass(frozen=True)
class TreeNode:
    id: Hashable
    parent: Hashable | None
    stage: int
    year: float
    probability: float
    demand_growth: float = 1.0
    generator_multipliers: Mapping = field(default_factory=dict)
    load_multipliers: Mapping = field(default_factory=dict)
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "generator_multipliers", _frozen_map(self.generator_multipliers))
        object.__setattr__(self, "load_multipliers", _frozen_map(self.load_multipliers))

    def gen_multiplier(self, gen_id) -> float:
        return float(self.generator_multipliers.get(gen_id, 1.0))

    def load_multiplier(self, load_id) -> float:
        return float(self.load_multipliers.get(load_id, 1.0))


@dataclass(frozen=True)
class ScenarioTree:
    nodes: tuple[TreeNode, ...]
    discount_rate: float = 0.06
    voll: float = 15_000.0
    reliability: float = 2e-5  # gamma: allowed shed fraction of node demand
    annuity_factor: float = 1.0
    name: str = "tree"

    @cached_property
    def index(self) -> dict[Hashable, int]:
        return {nd.id: i for i, nd in enumerate(self.nodes)}

    def node(self, node_id) -> TreeNode:
        return self.nodes[self.index[node_id]]

    @cached_property
    def root(self) -> TreeNode:
        return next(nd for nd in self.nodes if nd.parent is None)

    @cached_property
    def children_of(self) -> dict[Hashable, tuple[Hashable, ...]]:
        out: dict[Hashable, list] = {nd.id: [] for nd in self.nodes}
        for nd in self.nodes:
            if nd.parent is not None:
                out[nd.parent].append(nd.id)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def transitions(self) -> tuple[tuple[Hashable, Hashable], ...]:
        """(parent, child) pairs."""
        return tuple((nd.parent, nd.id) for nd in self.nodes if nd.parent is not None)

    def is_leaf(self, node_id) -> bool:
        return not self.children_of[node_id]

    @property
    def leaves(self) -> tuple[TreeNode, ...]:
        return tuple(nd for nd in self.nodes if self.is_leaf(nd.id))

    def descendants(self, node_id) -> list[Hashable]:
        out, stack = [], list(self.children_of[node_id])
        while stack:
            k = stack.pop()
            out.append(k)
            stack.extend(self.children_of[k])
        return out

    def __len__(self) -> int:
        return len(self.nodes)


def discount_factor(node: TreeNode, rate: float) -> float:
    """Probability-weighted present-value factor pi_s * (1 + r)^(-year_s)."""
    if rate <= -1.0:
        raise ValueError(f"discount rate must exceed -1, got {rate}")
    return node.probability * (1.0 + rate) ** (-node.year)


def investment_cost(line: Line, node: TreeNode, tree: ScenarioTree) -> float:
    """Annuitised cost of building `line` at `node`, in $ (before probability weighting)."""
    return (line.capacity * line.cost_per_mw * tree.annuity_factor
            * (1.0 + tree.discount_rate) ** (-node.year))


@dataclass(frozen=True)
class InvestmentPlan:
    """Binary triples per (node, candidate); arrays have shape (len(node_ids), len(line_ids))."""

    node_ids: tuple
    line_ids: tuple
    invest: np.ndarray
    built: np.ndarray
    new: np.ndarray

    def __post_init__(self) -> None:
        shape = (len(self.node_ids), len(self.line_ids))
        for name in ("invest", "built", "new"):
            arr = np.asarray(getattr(self, name), dtype=np.int8).reshape(shape)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_new(cls, tree: ScenarioTree, line_ids: Sequence, new: np.ndarray) -> "InvestmentPlan":
        """Complete a plan from its newly-paid indicators by walking the tree."""
        new = np.asarray(new, dtype=np.int8)
        node_ids = tuple(nd.id for nd in tree.nodes)
        built = np.zeros_like(new)
        invest = np.zeros_like(new)
        order = _topological(tree)
        for nid in order:
            i = tree.index[nid]
            par = tree.nodes[i].parent
            if par is not None:
                built[i] = invest[tree.index[par]]
            invest[i] = built[i] + new[i]
        return cls(node_ids, tuple(line_ids), invest, built, new)

    def built_vector(self, node_id) -> np.ndarray:
        return np.asarray(self.built[self.node_ids.index(node_id)], dtype=float)

    def as_binary_vector(self) -> np.ndarray:
        return np.concatenate([self.invest.ravel(), self.built.ravel(), self.new.ravel()])

    def total_investments(self) -> np.ndarray:
        return self.new.sum(axis=0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, InvestmentPlan):
            return NotImplemented
        return (self.node_ids == other.node_ids and self.line_ids == other.line_ids
                and np.array_equal(self.invest, other.invest)
                and np.array_equal(self.built, other.built)
                and np.array_equal(self.new, other.new))

    __hash__ = None  # type: ignore[assignment]


def _topological(tree: ScenarioTree) -> list:
    order, stack = [], [tree.root.id]
    while stack:
        k = stack.pop()
        order.append(k)
        stack.extend(reversed(tree.children_of[k]))
    return order


@dataclass
class OperationalSolution:
    """Hourly dispatch of one scenario node."""

    node_id: Hashable
    dispatch: np.ndarray  # (generators, T) MW
    flows: np.ndarray  # (lines, T) MW
    shedding: np.ndarray  # (buses, T) MW
    generation_cost: float  # $
    total_shed: float  # MWh
    feasible: bool = True  # False when only the relaxed (no reliability cap) problem solved
    status: str = "optimal"

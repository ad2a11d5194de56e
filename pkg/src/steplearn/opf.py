"""Operational transport-model OPF and the exact multistage planning MILP.

The operational model is a transport (network-flow) model: nodal balance with
capacity-bounded line flows and no voltage angles. Renewable output is bounded
hourly by capacity times availability.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Hashable, Mapping, NamedTuple

import numpy as np

from .grid.plan import validate_plan
from .grid.types import (InvestmentPlan, Network, OperationalSolution, ScenarioTree,
                         discount_factor, investment_cost)
from .lpmilp import (EQ, GE, LE, MilpProblem, MilpSolution, ProblemBuilder, SolverOptions,
                     fix_binaries_and_solve, solve_milp)
from .lpmilp.simplex import OPTIMAL, INFEASIBLE, Basis, RevisedSimplex, SimplexOptions


class OpfError(RuntimeError):
    """The operational LP failed numerically."""


@dataclass(frozen=True)
class Perturbation:
    """Multiplicative noise factors for one scenario node; missing ids mean 1."""

    gen_factors: Mapping = field(default_factory=dict)
    load_factors: Mapping = field(default_factory=dict)

    def gen(self, gid) -> float:
        return float(self.gen_factors.get(gid, 1.0))

    def load(self, lid) -> float:
        return float(self.load_factors.get(lid, 1.0))


NO_PERTURBATION = Perturbation()


@dataclass(frozen=True)
class NodeOperatingContext:
    node_id: Hashable
    demand: np.ndarray  # (buses, T) MW
    availability: np.ndarray  # (generators, T) per unit in [0, 1]
    gen_capacity: np.ndarray  # (generators,) MW after node multipliers
    y_built: np.ndarray  # (candidates,)
    voll: float
    reliability: float

    @property
    def gen_upper(self) -> np.ndarray:
        return self.gen_capacity[:, None] * self.availability

    @property
    def total_demand(self) -> float:
        return float(self.demand.sum())


def operating_context(network: Network, tree: ScenarioTree, node_id, y_built=None,
                      perturbation: Perturbation | None = None, *, voll: float | None = None,
                      reliability: float | None = None) -> NodeOperatingContext:
    """Realised demand and availability of one tree node under optional noise."""
    nd = tree.node(node_id)
    pert = perturbation or NO_PERTURBATION
    T = network.horizon
    demand = np.zeros((len(network.buses), T))
    for ld in network.loads:
        scale = nd.demand_growth * nd.load_multiplier(ld.id) * pert.load(ld.id)
        demand[network.bus_index[ld.bus]] += np.asarray(ld.profile) * scale
    avail = np.empty((len(network.generators), T))
    cap = np.empty(len(network.generators))
    for i, g in enumerate(network.generators):
        a = network.availability(g)
        if g.is_renewable:
            a = np.clip(a * pert.gen(g.id), 0.0, 1.0)
        avail[i] = a
        cap[i] = g.capacity * nd.gen_multiplier(g.id)
    k = len(network.candidates)
    y = np.ones(k) if y_built is None else np.asarray(y_built, dtype=float).reshape(k)
    return NodeOperatingContext(node_id, demand, avail, cap, y,
                                tree.voll if voll is None else voll,
                                tree.reliability if reliability is None else reliability)


def _line_bounds(network: Network, y_built: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    cap = np.array([ln.capacity for ln in network.lines])
    scale = np.ones(len(network.lines))
    ci = [i for i, ln in enumerate(network.lines) if ln.is_candidate]
    scale[ci] = y_built
    hi = cap * scale
    return -hi, hi


def _add_operational_block(b: ProblemBuilder, network: Network, tag: str, weight: float,
                           voll: float, ctx: NodeOperatingContext | None = None):
    """Variables and balance/reliability rows for one node; returns index arrays.

    Without `ctx` the block carries placeholder data (zero demand, unbounded
    generation, candidate flows at full capacity) to be overwritten via bounds.
    """
    T = network.horizon
    G, L, B = len(network.generators), len(network.lines), len(network.buses)
    hours = range(T)
    p = b.add_vars([f"p[{tag}{g.id},{t}]" for g in network.generators for t in hours],
                   lb=0.0, ub=np.inf if ctx is None else ctx.gen_upper.ravel(),
                   cost=np.repeat([weight * g.marginal_cost for g in network.generators], T))
    cap = np.array([ln.capacity for ln in network.lines])
    flo, fhi = -cap, cap
    f = b.add_vars([f"f[{tag}{ln.id},{t}]" for ln in network.lines for t in hours],
                   lb=np.repeat(flo, T), ub=np.repeat(fhi, T))
    ls = b.add_vars([f"ls[{tag}{bus},{t}]" for bus in network.buses for t in hours],
                    lb=0.0, ub=np.inf, cost=weight * voll)
    p, f, ls = p.reshape(G, T), f.reshape(L, T), ls.reshape(B, T)
    gens_at = [[] for _ in range(B)]
    for i, g in enumerate(network.generators):
        gens_at[network.bus_index[g.bus]].append(i)
    out_of = [[] for _ in range(B)]
    into = [[] for _ in range(B)]
    for i, ln in enumerate(network.lines):
        out_of[network.bus_index[ln.from_bus]].append(i)
        into[network.bus_index[ln.to_bus]].append(i)
    bal = np.empty((B, T), dtype=np.int64)
    for bi, bus in enumerate(network.buses):
        for t in hours:
            cols = [p[i, t] for i in gens_at[bi]] + [ls[bi, t]]
            vals = [1.0] * len(cols)
            cols += [f[i, t] for i in out_of[bi]] + [f[i, t] for i in into[bi]]
            vals += [-1.0] * len(out_of[bi]) + [1.0] * len(into[bi])
            rhs = 0.0 if ctx is None else ctx.demand[bi, t]
            bal[bi, t] = b.add_row(cols, vals, EQ, rhs, name=f"balance[{tag}{bus},{t}]")
    cap_ls = 0.0 if ctx is None else ctx.reliability * ctx.total_demand
    rel = b.add_row(ls.ravel(), np.ones(B * T), LE, cap_ls,
                    name=f"reliability[{tag.rstrip(',')}]")
    return p, f, ls, bal, rel


class OpfTemplate:
    """One operational LP structure per network; contexts only change bounds.

    Reusing the factorised structure and a reference basis makes repeated
    solves (dataset generation) cheap: costs never change, so any optimal
    basis stays dual feasible and the dual simplex restarts from it.
    """

    def __init__(self, network: Network, voll: float, options: SimplexOptions | None = None):
        self.network = network
        self.voll = float(voll)
        b = ProblemBuilder(name=f"opf-{network.name}")
        self.p, self.f, self.ls, self.bal, self.rel = _add_operational_block(
            b, network, "", 1.0, self.voll)
        self.base = b.build()
        lo, hi = self.base.row_bounds()
        self.lp = RevisedSimplex(self.base.c, self.base.A, lo, hi, self.base.lb, self.base.ub,
                                 options=options)
        self.cost_g = np.array([g.marginal_cost for g in network.generators])

    def bounds(self, ctx: NodeOperatingContext, relax_reliability: bool = False):
        lb = self.base.lb.copy()
        ub = self.base.ub.copy()
        ub[self.p.ravel()] = ctx.gen_upper.ravel()
        flo, fhi = _line_bounds(self.network, ctx.y_built)
        T = self.network.horizon
        lb[self.f.ravel()] = np.repeat(flo, T)
        ub[self.f.ravel()] = np.repeat(fhi, T)
        rlo = np.zeros(self.base.num_rows)
        rhi = np.zeros(self.base.num_rows)
        rlo[self.bal.ravel()] = ctx.demand.ravel()
        rhi[self.bal.ravel()] = ctx.demand.ravel()
        rlo[self.rel] = -np.inf
        rhi[self.rel] = np.inf if relax_reliability else ctx.reliability * ctx.total_demand
        return lb, ub, rlo, rhi

    def problem(self, ctx: NodeOperatingContext) -> MilpProblem:
        if ctx.voll != self.voll:
            raise ValueError("context VoLL differs from the template's")
        lb, ub, rlo, rhi = self.bounds(ctx)
        sense = self.base.sense.copy()
        rhs = np.where(np.isfinite(rhi), rhi, rlo)
        return MilpProblem(self.base.c * 1.0, self.base.A, sense, rhs, lb, ub, self.base.binary,
                           self.base.var_names, self.base.row_names, name=self.base.name)

    def _solve(self, ctx, relax: bool, basis):
        lb, ub, rlo, rhi = self.bounds(ctx, relax)
        return self.lp.solve(lb, ub, basis, rlo, rhi)

    def solve(self, ctx: NodeOperatingContext, basis: Basis | None = None) -> "OpfResult":
        if ctx.voll != self.voll:
            raise ValueError("context VoLL differs from the template's")
        res = self._solve(ctx, False, basis)
        feasible = True
        if res.status == INFEASIBLE:
            feasible = False
            res = self._solve(ctx, True, basis)
        if res.status != OPTIMAL:
            raise OpfError(f"operational LP for node {ctx.node_id!r} returned {res.status}")
        x = res.x
        disp, flows, shed = x[self.p], x[self.f], x[self.ls]
        gen_cost = float(self.cost_g @ disp.sum(axis=1))
        total_shed = float(shed.sum())
        sol = OperationalSolution(ctx.node_id, disp, flows, shed, gen_cost, total_shed,
                                  feasible=feasible,
                                  status="optimal" if feasible else "infeasible_under_standard")
        return OpfResult(gen_cost, total_shed, sol, res.basis)


class OpfResult(NamedTuple):
    cost: float  # $ generation cost
    shed: float  # MWh
    solution: OperationalSolution
    basis: Basis | None = None


def build_opf(network: Network, ctx: NodeOperatingContext) -> MilpProblem:
    """Single-node operational LP for a fixed built-status vector."""
    return OpfTemplate(network, ctx.voll).problem(ctx)


def solve_opf(network: Network, ctx: NodeOperatingContext,
              template: OpfTemplate | None = None, basis: Basis | None = None) -> OpfResult:
    """Generation cost, shed energy and dispatch of one node.

    If the reliability cap makes the LP infeasible, the LP is re-solved without
    it and the solution is flagged (``solution.feasible is False``).
    """
    template = template or OpfTemplate(network, ctx.voll)
    return template.solve(ctx, basis)


# -- exact multistage model ---------------------------------------------------

@dataclass
class ExactModel:
    problem: MilpProblem
    network: Network
    tree: ScenarioTree
    y_inv: np.ndarray  # (nodes, candidates) variable indices
    y_built: np.ndarray
    y_new: np.ndarray
    p: list[np.ndarray]  # per node (G, T)
    f: list[np.ndarray]
    ls: list[np.ndarray]
    build_time: float = 0.0

    @property
    def num_variables(self) -> int:
        return self.problem.num_vars

    @property
    def num_constraints(self) -> int:
        return self.problem.num_rows

    def binary_vector(self, plan: InvestmentPlan) -> np.ndarray:
        """Full-length binary assignment for `plan` (ordered like the problem's binaries)."""
        x = np.zeros(self.problem.num_vars)
        x[self.y_inv.ravel()] = np.asarray(plan.invest, dtype=float).ravel()
        x[self.y_built.ravel()] = np.asarray(plan.built, dtype=float).ravel()
        x[self.y_new.ravel()] = np.asarray(plan.new, dtype=float).ravel()
        return x[self.problem.binary]

    def plan_from(self, x: np.ndarray) -> InvestmentPlan:
        r = lambda idx: np.rint(x[idx]).astype(np.int8)
        return InvestmentPlan(tuple(nd.id for nd in self.tree.nodes),
                              tuple(ln.id for ln in self.network.candidates),
                              r(self.y_inv), r(self.y_built), r(self.y_new))


def exact_variable_count(network: Network, tree: ScenarioTree) -> int:
    """Closed form (|G| + |L| + |B|) T |S| + 3 |L^C| |S|."""
    G, L, B = len(network.generators), len(network.lines), len(network.buses)
    S, K = len(tree), len(network.candidates)
    return (G + L + B) * network.horizon * S + 3 * K * S


def add_investment_block(b: ProblemBuilder, network: Network, tree: ScenarioTree):
    """Investment binaries with lead-time, persistence and single-payment rows."""
    S, K = len(tree), len(network.candidates)
    cands = network.candidates
    y_inv = np.empty((S, K), dtype=np.int64)
    y_blt = np.empty((S, K), dtype=np.int64)
    y_new = np.empty((S, K), dtype=np.int64)
    for s, nd in enumerate(tree.nodes):
        leaf = tree.is_leaf(nd.id)
        root = nd.parent is None
        for k, ln in enumerate(cands):
            y_inv[s, k] = b.add_var(f"y_inv[{nd.id},{ln.id}]", 0.0, 1.0, binary=True)
            y_blt[s, k] = b.add_var(f"y_built[{nd.id},{ln.id}]", 0.0, 0.0 if root else 1.0,
                                    binary=True)
            y_new[s, k] = b.add_var(f"y_new[{nd.id},{ln.id}]", 0.0, 0.0 if leaf else 1.0,
                                    cost=nd.probability * investment_cost(ln, nd, tree),
                                    binary=True)
    for par, child in tree.transitions:
        i, j = tree.index[par], tree.index[child]
        for k, ln in enumerate(cands):
            b.add_row([y_blt[j, k], y_inv[i, k]], [1.0, -1.0], EQ, 0.0,
                      name=f"lead[{child},{ln.id}]")
            b.add_row([y_blt[j, k], y_blt[i, k]], [1.0, -1.0], GE, 0.0,
                      name=f"persist[{child},{ln.id}]")
    for s, nd in enumerate(tree.nodes):
        for k, ln in enumerate(cands):
            b.add_row([y_inv[s, k], y_blt[s, k], y_new[s, k]], [1.0, -1.0, -1.0], EQ, 0.0,
                      name=f"once[{nd.id},{ln.id}]")
    return y_inv, y_blt, y_new


def build_exact_step(network: Network, tree: ScenarioTree,
                     perturbations: Mapping | None = None) -> ExactModel:
    """Full multistage MILP over every tree node (optionally perturbed per node)."""
    t0 = time.perf_counter()
    perturbations = perturbations or {}
    b = ProblemBuilder(name=f"exact-{network.name}-{tree.name}")
    T = network.horizon
    y_inv, y_blt, y_new = add_investment_block(b, network, tree)
    cand_idx = [i for i, ln in enumerate(network.lines) if ln.is_candidate]
    cap = np.array([ln.capacity for ln in network.lines])
    ps, fs, lss = [], [], []
    for s, nd in enumerate(tree.nodes):
        ctx = operating_context(network, tree, nd.id, np.ones(len(cand_idx)),
                                perturbations.get(nd.id))
        w = discount_factor(nd, tree.discount_rate)
        p, f, ls, _, _ = _add_operational_block(b, network, f"{nd.id},", w, tree.voll, ctx)
        ps.append(p)
        fs.append(f)
        lss.append(ls)
        for k, li in enumerate(cand_idx):
            for t in range(T):
                b.add_row([f[li, t], y_blt[s, k]], [1.0, -cap[li]], LE, 0.0,
                          name=f"cap_up[{nd.id},{network.lines[li].id},{t}]")
                b.add_row([f[li, t], y_blt[s, k]], [1.0, cap[li]], GE, 0.0,
                          name=f"cap_dn[{nd.id},{network.lines[li].id},{t}]")
    problem = b.build()
    return ExactModel(problem, network, tree, y_inv, y_blt, y_new, ps, fs, lss,
                      time.perf_counter() - t0)


@dataclass
class StepSolution:
    plan: InvestmentPlan | None
    operations: dict
    total_cost: float
    investment_cost: float
    operational_cost: float
    status: str
    milp: MilpSolution
    num_variables: int
    num_constraints: int
    solve_time: float
    build_time: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.plan is not None


def recompute_objective(model: ExactModel, x: np.ndarray) -> tuple[float, float, float, dict]:
    """Investment, operational and total cost rebuilt from raw variable values."""
    net, tree = model.network, model.tree
    cg = np.array([g.marginal_cost for g in net.generators])
    inv = 0.0
    op = 0.0
    ops = {}
    for s, nd in enumerate(tree.nodes):
        for k, ln in enumerate(net.candidates):
            inv += nd.probability * investment_cost(ln, nd, tree) * x[model.y_new[s, k]]
        disp, flows, shed = x[model.p[s]], x[model.f[s]], x[model.ls[s]]
        gen_cost = float(cg @ disp.sum(axis=1))
        total_shed = float(shed.sum())
        op += discount_factor(nd, tree.discount_rate) * (gen_cost + tree.voll * total_shed)
        ops[nd.id] = OperationalSolution(nd.id, disp, flows, shed, gen_cost, total_shed)
    return inv, op, inv + op, ops


def _step_solution(model: ExactModel, sol: MilpSolution) -> StepSolution:
    if not sol.has_solution:
        return StepSolution(None, {}, np.inf, np.inf, np.inf, sol.status, sol,
                            model.num_variables, model.num_constraints, sol.wall_time,
                            model.build_time)
    inv, op, total, ops = recompute_objective(model, sol.x)
    plan = model.plan_from(sol.x)
    return StepSolution(plan, ops, total, inv, op, sol.status, sol, model.num_variables,
                        model.num_constraints, sol.wall_time, model.build_time)


def solve_exact_step(network: Network, tree: ScenarioTree, options: SolverOptions | None = None,
                     perturbations: Mapping | None = None,
                     warm_start: InvestmentPlan | None = None,
                     model: ExactModel | None = None) -> StepSolution:
    """Solve the exact planning MILP; `warm_start` seeds the incumbent with a plan."""
    model = model or build_exact_step(network, tree, perturbations)
    ws = None if warm_start is None else model.binary_vector(warm_start)
    sol = solve_milp(model.problem, options, warm_start=ws)
    out = _step_solution(model, sol)
    if out.plan is not None:
        bad = validate_plan(out.plan, tree)
        if bad:
            raise RuntimeError(f"solver returned an inconsistent plan: {bad[0].message}")
    return out


def evaluate_plan(model: ExactModel, plan: InvestmentPlan,
                  options: SolverOptions | None = None) -> StepSolution:
    """True expected cost of a fixed plan under the exact model."""
    sol = fix_binaries_and_solve(model.problem, model.binary_vector(plan), options)
    return _step_solution(model, sol)

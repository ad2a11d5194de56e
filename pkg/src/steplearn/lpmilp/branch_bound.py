"""Best-bound branch and bound over the revised simplex."""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .problem import MilpProblem
from .propagate import DomainPropagator
from .simplex import (INFEASIBLE, OPTIMAL, UNBOUNDED, Basis, LpResult, RevisedSimplex,
                      SimplexOptions)

log = logging.getLogger(__name__)

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_TIME_LIMIT = "time_limit"
STATUS_NODE_LIMIT = "node_limit"
STATUS_NUMERICAL = "numerical"


class WarmStartError(ValueError):
    """The supplied warm start is not integer feasible for the problem."""


@dataclass
class SolverOptions:
    mip_gap: float = 1e-3
    time_limit: float = 1000.0
    node_limit: int | None = None
    int_tol: float = 1e-6
    propagate: bool = True  # bound propagation at every node
    simplex: SimplexOptions = field(default_factory=SimplexOptions)


@dataclass
class MilpSolution:
    status: str
    x: np.ndarray | None
    objective: float
    best_bound: float
    gap: float
    node_count: int
    wall_time: float
    lp_iterations: int = 0
    max_duality_gap: float = 0.0
    history: list[tuple[float, float]] = field(default_factory=list)
    message: str = ""

    @property
    def has_solution(self) -> bool:
        return self.x is not None

    def value(self, problem: MilpProblem, name: str) -> float:
        return float(self.x[problem.var_index(name)])


def relative_gap(incumbent: float, bound: float) -> float:
    if not np.isfinite(incumbent):
        return np.inf
    diff = incumbent - bound
    if diff <= 1e-9 * (1.0 + abs(incumbent)):
        return 0.0
    return diff / max(abs(incumbent), 1e-9)


def _make_lp(problem: MilpProblem, options: SolverOptions) -> RevisedSimplex:
    lo, hi = problem.row_bounds()
    return RevisedSimplex(problem.c, problem.A, lo, hi, problem.lb, problem.ub,
                          offset=problem.obj_offset, options=options.simplex)


def _lp_solution(res: LpResult, t0: float, iters: int) -> MilpSolution:
    status = {OPTIMAL: STATUS_OPTIMAL, INFEASIBLE: STATUS_INFEASIBLE,
              UNBOUNDED: STATUS_UNBOUNDED}.get(res.status, STATUS_NUMERICAL)
    gap = 0.0 if status == STATUS_OPTIMAL else np.inf
    bound = res.dual_objective if status == STATUS_OPTIMAL else res.objective
    return MilpSolution(status, res.x, res.objective, bound, gap, 0, time.perf_counter() - t0,
                        lp_iterations=iters,
                        max_duality_gap=res.duality_gap if status == STATUS_OPTIMAL else 0.0,
                        message=f"lp {res.status}")


def solve_lp(problem: MilpProblem, options: SolverOptions | None = None,
             basis: Basis | None = None) -> MilpSolution:
    """Solve the continuous relaxation (binary flags ignored)."""
    options = options or SolverOptions()
    t0 = time.perf_counter()
    lp = _make_lp(problem, options)
    res = lp.solve(basis=basis)
    return _lp_solution(res, t0, res.iterations)


def _binary_assignment(problem: MilpProblem, assignment) -> np.ndarray:
    ints = np.flatnonzero(problem.binary)
    if isinstance(assignment, Mapping):
        vals = np.empty(len(ints))
        pos = {j: k for k, j in enumerate(ints)}
        seen = set()
        for name, v in assignment.items():
            j = problem.var_index(name)
            if j not in pos:
                raise WarmStartError(f"{name!r} is not a binary variable")
            vals[pos[j]] = v
            seen.add(j)
        if len(seen) != len(ints):
            raise WarmStartError(f"assignment covers {len(seen)} of {len(ints)} binaries")
    else:
        a = np.asarray(assignment, dtype=float)
        if a.shape == (problem.num_vars,):
            vals = a[ints]
        elif a.shape == (len(ints),):
            vals = a
        else:
            raise WarmStartError(f"assignment has shape {a.shape}; expected ({len(ints)},) "
                                 f"or ({problem.num_vars},)")
    rounded = np.round(vals)
    if np.any(np.abs(vals - rounded) > 1e-6):
        raise WarmStartError("assignment is not integral")
    return rounded


def fix_binaries_and_solve(problem: MilpProblem, assignment,
                           options: SolverOptions | None = None) -> MilpSolution:
    """LP with every binary fixed to `assignment` (vector over binaries, full vector, or name map)."""
    options = options or SolverOptions()
    t0 = time.perf_counter()
    vals = _binary_assignment(problem, assignment)
    ints = np.flatnonzero(problem.binary)
    lb, ub = problem.lb.copy(), problem.ub.copy()
    if np.any(vals < lb[ints]) or np.any(vals > ub[ints]):
        return MilpSolution(STATUS_INFEASIBLE, None, np.inf, np.inf, np.inf, 0,
                            time.perf_counter() - t0, message="assignment outside variable bounds")
    lb[ints] = vals
    ub[ints] = vals
    lp = _make_lp(problem, options)
    res = lp.solve(lb, ub)
    return _lp_solution(res, t0, res.iterations)


@dataclass(order=True)
class _Node:
    bound: float
    seq: int
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    basis: Basis | None = field(compare=False)
    depth: int = field(compare=False, default=0)


class BranchAndBound:
    """Deterministic best-bound B&B with most-fractional branching within the top priority class."""

    def __init__(self, problem: MilpProblem, options: SolverOptions | None = None) -> None:
        self.problem = problem
        self.opt = options or SolverOptions()
        self.lp = _make_lp(problem, self.opt)
        self.ints = np.flatnonzero(problem.binary)
        self.incumbent: np.ndarray | None = None
        self.inc_obj = np.inf
        self.max_duality_gap = 0.0
        self.propagator = DomainPropagator(problem, int_tol=self.opt.int_tol) \
            if self.opt.propagate and len(self.ints) else None

    def _solve_node(self, lb, ub, basis) -> LpResult:
        res = self.lp.solve(lb, ub, basis)
        if res.status == OPTIMAL:
            self.max_duality_gap = max(self.max_duality_gap, res.duality_gap)
        return res

    def _try_incumbent(self, x: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                       basis: Basis | None) -> None:
        # polish: re-solve with the integers pinned so rows hold exactly at the rounded point
        vals = np.round(x[self.ints])
        plb, pub = lb.copy(), ub.copy()
        plb[self.ints] = vals
        pub[self.ints] = vals
        res = self._solve_node(plb, pub, basis)
        if res.status == OPTIMAL and res.objective < self.inc_obj:
            self.incumbent = res.x.copy()
            self.incumbent[self.ints] = vals
            self.inc_obj = res.objective

    def set_warm_start(self, assignment) -> float:
        vals = _binary_assignment(self.problem, assignment)
        lb, ub = self.problem.lb.copy(), self.problem.ub.copy()
        if np.any(vals < lb[self.ints]) or np.any(vals > ub[self.ints]):
            raise WarmStartError("warm start violates binary variable bounds")
        lb[self.ints] = vals
        ub[self.ints] = vals
        res = self._solve_node(lb, ub, None)
        if res.status != OPTIMAL:
            raise WarmStartError(f"warm start rejected: completion LP is {res.status}")
        self.incumbent = res.x.copy()
        self.incumbent[self.ints] = vals
        self.inc_obj = res.objective
        return self.inc_obj

    def run(self) -> MilpSolution:
        opt = self.opt
        t0 = time.perf_counter()
        lb0, ub0 = self.problem.lb, self.problem.ub
        heap: list[_Node] = [_Node(-np.inf, 0, lb0.copy(), ub0.copy(), None)]
        seq = 1
        nodes = 0
        history: list[tuple[float, float]] = []
        gap_floor = np.inf  # smallest bound among nodes pruned by the gap tolerance
        status = None
        unbounded = False
        while heap:
            best_bound = min(heap[0].bound, gap_floor)
            if self.incumbent is not None and relative_gap(self.inc_obj, best_bound) <= opt.mip_gap:
                status = STATUS_OPTIMAL
                break
            if time.perf_counter() - t0 > opt.time_limit:
                status = STATUS_TIME_LIMIT
                break
            if opt.node_limit is not None and nodes >= opt.node_limit:
                status = STATUS_NODE_LIMIT
                break
            node = heapq.heappop(heap)
            nodes += 1
            if self.propagator is not None:
                tight = self.propagator.propagate(node.lb, node.ub)
                if tight is None:
                    history.append((min(node.bound, gap_floor), self.inc_obj))
                    continue
                node.lb, node.ub = tight
            res = self._solve_node(node.lb, node.ub, node.basis)
            history.append((min(node.bound, gap_floor), self.inc_obj))
            if res.status == INFEASIBLE:
                continue
            if res.status == UNBOUNDED:
                unbounded = True
                break
            if res.status != OPTIMAL:
                log.warning("node %d: LP returned %s; node dropped", nodes, res.status)
                continue
            obj = res.objective
            if obj >= self.inc_obj - 1e-9 * (1.0 + abs(self.inc_obj)):
                continue
            if np.isfinite(self.inc_obj) and obj >= self.inc_obj - opt.mip_gap * abs(self.inc_obj):
                gap_floor = min(gap_floor, obj)
                continue
            xi = res.x[self.ints]
            frac = np.abs(xi - np.round(xi))
            if frac.max(initial=0.0) <= opt.int_tol:
                self._try_incumbent(res.x, node.lb, node.ub, res.basis)
                continue
            score = np.minimum(xi - np.floor(xi), np.ceil(xi) - xi)
            score[frac <= opt.int_tol] = -1.0
            prio = self.problem.priority[self.ints]
            top = prio[score >= 0].max()
            score[prio < top] = -1.0
            k = int(np.argmax(score))
            j = self.ints[k]
            down_ub = node.ub.copy()
            down_ub[j] = np.floor(res.x[j])
            up_lb = node.lb.copy()
            up_lb[j] = np.ceil(res.x[j])
            heapq.heappush(heap, _Node(obj, seq, node.lb, down_ub, res.basis, node.depth + 1))
            heapq.heappush(heap, _Node(obj, seq + 1, up_lb, node.ub, res.basis, node.depth + 1))
            seq += 2
        wall = time.perf_counter() - t0
        if unbounded:
            return MilpSolution(STATUS_UNBOUNDED, None, -np.inf, -np.inf, np.inf, nodes, wall,
                                self.lp.total_iterations, self.max_duality_gap, history)
        open_bound = min([heap[0].bound] if heap else [np.inf])
        if status is None:
            status = STATUS_OPTIMAL if self.incumbent is not None else STATUS_INFEASIBLE
        best_bound = min(open_bound, gap_floor, self.inc_obj)
        if self.incumbent is None:
            best_bound = open_bound if status != STATUS_INFEASIBLE else np.inf
        gap = relative_gap(self.inc_obj, best_bound)
        return MilpSolution(status, self.incumbent, self.inc_obj, best_bound, gap, nodes, wall,
                            self.lp.total_iterations, self.max_duality_gap, history)


def solve_milp(problem: MilpProblem, options: SolverOptions | None = None,
               warm_start=None) -> MilpSolution:
    """Branch and bound to the requested relative gap.

    `warm_start` gives values for the binaries (vector or name map); the
    continuous part is completed by an LP. An infeasible warm start raises
    :class:`WarmStartError`.
    """
    bb = BranchAndBound(problem, options)
    if warm_start is not None:
        bb.set_warm_start(warm_start)
    return bb.run()

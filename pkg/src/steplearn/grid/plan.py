"""Temporal consistency checks for investment plans."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable

import numpy as np

from .types import InvestmentPlan, ScenarioTree

LEAD_TIME = "lead_time"
PERSISTENCE = "persistence"
SINGLE_PAYMENT = "single_payment"
ROOT_BUILT = "root_built"
LEAF_INVEST = "leaf_invest"
NOT_BINARY = "not_binary"


class PlanShapeError(ValueError):
    """Plan dimensions do not match the tree or candidate set."""


@dataclass(frozen=True)
class PlanViolation:
    kind: str
    node: Hashable
    line: Hashable
    message: str


def validate_plan(plan: InvestmentPlan, tree: ScenarioTree,
                  line_ids=None) -> list[PlanViolation]:
    """Every violated linking constraint of `plan`; empty iff the plan is consistent.

    Rules checked per candidate line:
      * built at a child equals invested at its parent (one-stage lead time);
      * built never drops from parent to child;
      * new = invest - built and lies in {0, 1};
      * nothing is built at the root (no earlier stage to invest in);
      * no new investment at a leaf (it could never operate).
    """
    node_ids = tuple(nd.id for nd in tree.nodes)
    if tuple(plan.node_ids) != node_ids:
        raise PlanShapeError(f"plan nodes {plan.node_ids} differ from tree nodes {node_ids}")
    if line_ids is not None and tuple(plan.line_ids) != tuple(line_ids):
        raise PlanShapeError(f"plan lines {plan.line_ids} differ from candidates {tuple(line_ids)}")

    out: list[PlanViolation] = []
    inv, blt, new = (np.asarray(a, dtype=int) for a in (plan.invest, plan.built, plan.new))
    for name, arr in (("invest", inv), ("built", blt), ("new", new)):
        for i, k in zip(*np.nonzero((arr != 0) & (arr != 1))):
            out.append(PlanViolation(NOT_BINARY, node_ids[i], plan.line_ids[k],
                                     f"{name} = {arr[i, k]} is not binary"))
    for k, lid in enumerate(plan.line_ids):
        for i, nd in enumerate(tree.nodes):
            if new[i, k] != inv[i, k] - blt[i, k]:
                out.append(PlanViolation(
                    SINGLE_PAYMENT, nd.id, lid,
                    f"new {new[i, k]} != invest {inv[i, k]} - built {blt[i, k]}"))
            if nd.parent is None:
                if blt[i, k] != 0:
                    out.append(PlanViolation(ROOT_BUILT, nd.id, lid,
                                             "line built at the root without prior investment"))
                continue
            j = tree.index[nd.parent]
            if blt[i, k] != inv[j, k]:
                out.append(PlanViolation(
                    LEAD_TIME, nd.id, lid,
                    f"built {blt[i, k]} at {nd.id!r} != invest {inv[j, k]} at parent {nd.parent!r}"))
            if blt[i, k] < blt[j, k]:
                out.append(PlanViolation(
                    PERSISTENCE, nd.id, lid,
                    f"built drops from 1 at {nd.parent!r} to 0 at {nd.id!r}"))
        for i, nd in enumerate(tree.nodes):
            if tree.is_leaf(nd.id) and new[i, k] != 0:
                out.append(PlanViolation(LEAF_INVEST, nd.id, lid,
                                         "investment at a leaf can never become operational"))
    return out


def enumerate_plans(tree: ScenarioTree, line_ids) -> list[InvestmentPlan]:
    """All consistent plans: per line, at most one investment on each root-to-leaf path at a non-leaf node."""
    per_line = _line_patterns(tree)
    plans = []
    k = len(line_ids)
    idx = np.zeros(k, dtype=int)
    total = len(per_line) ** k
    for code in range(total):
        c = code
        for j in range(k):
            idx[k - 1 - j] = c % len(per_line)
            c //= len(per_line)
        new = np.stack([per_line[i] for i in idx], axis=1) if k else np.zeros((len(tree), 0))
        plans.append(InvestmentPlan.from_new(tree, line_ids, new))
    return plans


def _line_patterns(tree: ScenarioTree) -> list[np.ndarray]:
    """Single-line `new` vectors: antichains of non-leaf nodes (no two on one path)."""
    internal = [nd.id for nd in tree.nodes if not tree.is_leaf(nd.id)]
    patterns: list[np.ndarray] = []

    def rec(pos: int, chosen: list, blocked: set) -> None:
        if pos == len(internal):
            v = np.zeros(len(tree), dtype=np.int8)
            for nid in chosen:
                v[tree.index[nid]] = 1
            patterns.append(v)
            return
        nid = internal[pos]
        rec(pos + 1, chosen, blocked)
        if nid not in blocked:
            anc = _ancestors(tree, nid)
            if not any(a in chosen for a in anc):
                rec(pos + 1, chosen + [nid], blocked | set(tree.descendants(nid)))

    rec(0, [], set())
    return patterns


def _ancestors(tree: ScenarioTree, node_id) -> list:
    out, cur = [], tree.node(node_id).parent
    while cur is not None:
        out.append(cur)
        cur = tree.node(cur).parent
    return out


def count_plans(tree: ScenarioTree, num_lines: int) -> int:
    return len(_line_patterns(tree)) ** num_lines

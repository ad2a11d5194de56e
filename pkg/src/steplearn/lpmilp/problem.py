"""Sparse MILP container shared by the exact and surrogate planning models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<", "=", ">"
_SENSES = (LE, EQ, GE)

CONTINUOUS, BINARY = "continuous", "binary"


class ProblemError(ValueError):
    """Raised when a problem is malformed (bounds, NaN coefficients, ...)."""


@dataclass(frozen=True)
class MilpProblem:
    """min c.x + offset  s.t.  A x (sense) rhs,  lb <= x <= ub,  x_j binary for j in `binary`."""

    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary: np.ndarray
    var_names: tuple[str, ...]
    row_names: tuple[str, ...]
    obj_offset: float = 0.0
    name: str = "problem"
    priority: np.ndarray | None = None  # branching priority per variable (higher first)

    def __post_init__(self) -> None:
        n, m = len(self.c), len(self.rhs)
        if self.priority is None:
            object.__setattr__(self, "priority", np.zeros(n, dtype=np.int64))
        elif len(self.priority) != n:
            raise ProblemError("priority vector does not match the variable count")
        if self.A.shape != (m, n):
            raise ProblemError(f"A has shape {self.A.shape}, expected {(m, n)}")
        if len(self.lb) != n or len(self.ub) != n or len(self.binary) != n:
            raise ProblemError("bound / kind vectors do not match the variable count")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise ProblemError("NaN variable bound")
        if np.any(self.lb > self.ub):
            j = int(np.argmax(self.lb > self.ub))
            raise ProblemError(f"variable {self.var_names[j]!r} has lb > ub")
        if not np.all(np.isfinite(self.c)) or not np.all(np.isfinite(self.A.data)):
            raise ProblemError("objective and matrix coefficients must be finite")
        if not np.all(np.isfinite(self.rhs)):
            raise ProblemError("right-hand sides must be finite")
        if np.any(self.lb[self.binary] < 0) or np.any(self.ub[self.binary] > 1):
            raise ProblemError("binary variables need bounds inside [0, 1]")
        bad = set(np.unique(self.sense)) - set(_SENSES)
        if bad:
            raise ProblemError(f"unknown constraint senses {sorted(bad)}")

    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return len(self.rhs)

    @property
    def num_binary(self) -> int:
        return int(self.binary.sum())

    @property
    def num_continuous(self) -> int:
        return self.num_vars - self.num_binary

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.where(self.sense == LE, -np.inf, self.rhs)
        hi = np.where(self.sense == GE, np.inf, self.rhs)
        return lo.astype(float), hi.astype(float)

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.obj_offset)

    def max_violation(self, x: np.ndarray) -> float:
        """Largest absolute bound or row violation of `x`."""
        act = self.A @ x
        lo, hi = self.row_bounds()
        viol = [
            np.max(np.maximum(lo - act, 0.0), initial=0.0),
            np.max(np.maximum(act - hi, 0.0), initial=0.0),
            np.max(np.maximum(self.lb - x, 0.0), initial=0.0),
            np.max(np.maximum(x - self.ub, 0.0), initial=0.0),
        ]
        return float(max(viol))

    def relaxed(self) -> "MilpProblem":
        return self.with_bounds(binary=np.zeros(self.num_vars, dtype=bool))

    def with_bounds(
        self,
        lb: np.ndarray | None = None,
        ub: np.ndarray | None = None,
        binary: np.ndarray | None = None,
    ) -> "MilpProblem":
        return MilpProblem(
            c=self.c,
            A=self.A,
            sense=self.sense,
            rhs=self.rhs,
            lb=self.lb if lb is None else np.asarray(lb, dtype=float),
            ub=self.ub if ub is None else np.asarray(ub, dtype=float),
            binary=self.binary if binary is None else np.asarray(binary, dtype=bool),
            var_names=self.var_names,
            row_names=self.row_names,
            obj_offset=self.obj_offset,
            name=self.name,
            priority=self.priority,
        )

    def var_index(self, name: str) -> int:
        return self.var_names.index(name)


@dataclass
class ProblemBuilder:
    """Incremental assembly of a :class:`MilpProblem`.

    Variables are added in blocks and get consecutive indices; rows are stored
    as COO triplets until :meth:`build`.
    """

    name: str = "problem"
    _names: list[str] = field(default_factory=list)
    _lb: list[np.ndarray] = field(default_factory=list)
    _ub: list[np.ndarray] = field(default_factory=list)
    _cost: list[np.ndarray] = field(default_factory=list)
    _bin: list[np.ndarray] = field(default_factory=list)
    _prio: list[np.ndarray] = field(default_factory=list)
    _nvar: int = 0
    _rows: list[np.ndarray] = field(default_factory=list)
    _cols: list[np.ndarray] = field(default_factory=list)
    _vals: list[np.ndarray] = field(default_factory=list)
    _sense: list[str] = field(default_factory=list)
    _rhs: list[float] = field(default_factory=list)
    _row_names: list[str] = field(default_factory=list)
    obj_offset: float = 0.0

    @property
    def num_vars(self) -> int:
        return self._nvar

    @property
    def num_rows(self) -> int:
        return len(self._rhs)

    def add_vars(
        self,
        names: Sequence[str],
        lb: float | Iterable[float] = 0.0,
        ub: float | Iterable[float] = np.inf,
        cost: float | Iterable[float] = 0.0,
        binary: bool = False,
        priority: int = 0,
    ) -> np.ndarray:
        k = len(names)
        idx = np.arange(self._nvar, self._nvar + k)
        self._names.extend(names)
        self._lb.append(np.broadcast_to(np.asarray(lb, dtype=float), (k,)).copy())
        self._ub.append(np.broadcast_to(np.asarray(ub, dtype=float), (k,)).copy())
        self._cost.append(np.broadcast_to(np.asarray(cost, dtype=float), (k,)).copy())
        self._bin.append(np.full(k, binary))
        self._prio.append(np.full(k, priority, dtype=np.int64))
        self._nvar += k
        return idx

    def add_var(self, name: str, lb: float = 0.0, ub: float = np.inf, cost: float = 0.0,
                binary: bool = False, priority: int = 0) -> int:
        return int(self.add_vars([name], lb, ub, cost, binary, priority)[0])

    def add_row(self, cols: Sequence[int], vals: Sequence[float], sense: str, rhs: float,
                name: str | None = None) -> int:
        if sense not in _SENSES:
            raise ProblemError(f"unknown sense {sense!r}")
        r = len(self._rhs)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
        if cols.shape != vals.shape:
            raise ProblemError("row columns and values differ in length")
        self._rows.append(np.full(len(cols), r, dtype=np.int64))
        self._cols.append(cols)
        self._vals.append(vals)
        self._sense.append(sense)
        self._rhs.append(float(rhs))
        self._row_names.append(name if name is not None else f"r{r}")
        return r

    def add_objective_constant(self, value: float) -> None:
        self.obj_offset += float(value)

    def build(self) -> MilpProblem:
        n, m = self._nvar, len(self._rhs)
        cat = (lambda parts, dt: np.concatenate(parts).astype(dt) if parts
               else np.zeros(0, dtype=dt))
        rows, cols, vals = cat(self._rows, np.int64), cat(self._cols, np.int64), cat(self._vals, float)
        A = sp.coo_matrix((vals, (rows, cols)), shape=(m, n)).tocsr()
        A.sum_duplicates()
        A.eliminate_zeros()
        return MilpProblem(
            c=cat(self._cost, float),
            A=A,
            sense=np.array(self._sense, dtype="<U1"),
            rhs=np.array(self._rhs, dtype=float),
            lb=cat(self._lb, float),
            ub=cat(self._ub, float),
            binary=cat(self._bin, bool),
            var_names=tuple(self._names),
            row_names=tuple(self._row_names),
            obj_offset=self.obj_offset,
            name=self.name,
            priority=cat(self._prio, np.int64),
        )


def _fmt(v: float) -> str:
    return repr(float(v)) if np.isfinite(v) else ("inf" if v > 0 else "-inf")


def _lp_name(s: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "_.[]" else "_" for ch in s)


def write_lp(problem: MilpProblem, path) -> None:
    """Export in CPLEX LP text format (debug aid for cross-checking elsewhere)."""
    names = [_lp_name(v) for v in problem.var_names]
    lines = [f"\\ {problem.name}", "Minimize"]
    terms = [f"{_fmt(cj)} {names[j]}" for j, cj in enumerate(problem.c) if cj != 0.0]
    if problem.obj_offset:
        terms.append(f"{_fmt(problem.obj_offset)} __const")
    lines.append(" obj: " + (" + ".join(terms) if terms else "0 " + names[0]))
    lines.append("Subject To")
    A = problem.A
    op = {LE: "<=", EQ: "=", GE: ">="}
    for i in range(problem.num_rows):
        lo, hi = A.indptr[i], A.indptr[i + 1]
        body = " + ".join(f"{_fmt(v)} {names[j]}" for j, v in zip(A.indices[lo:hi], A.data[lo:hi]))
        lines.append(f" {_lp_name(problem.row_names[i])}: {body or '0 ' + names[0]} "
                     f"{op[problem.sense[i]]} {_fmt(problem.rhs[i])}")
    if problem.obj_offset:
        lines.append(" __const_fix: __const = 1")
    lines.append("Bounds")
    for j in range(problem.num_vars):
        lines.append(f" {_fmt(problem.lb[j])} <= {names[j]} <= {_fmt(problem.ub[j])}")
    if problem.num_binary:
        lines.append("Binaries")
        lines.extend(f" {names[j]}" for j in np.flatnonzero(problem.binary))
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

"""Bounded-variable revised simplex (primal and dual) on sparse matrices.

The LP is held in the computational form

    min c.x   s.t.   A x - s = 0,   l <= x <= u,   row_lo <= s <= row_hi

so every row owns a logical column ``-e_i`` and the all-logical basis is
always available as a cold start. Bases are factorised with SuperLU and
updated in product form (one eta column per pivot) until the next
refactorisation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

BASIC, AT_LOWER, AT_UPPER, AT_ZERO = 0, 1, 2, 3

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL = "numerical"
ITERATION_LIMIT = "iteration_limit"


@dataclass
class SimplexOptions:
    primal_tol: float = 1e-9
    dual_tol: float = 1e-9
    pivot_tol: float = 1e-9
    refactor_every: int = 48
    max_iterations: int | None = None
    # degenerate pivots in a row before switching to Bland's rule
    bland_after: int = 60
    # geometric row/column scaling: True, False, or "auto" (only when large entries appear)
    scale: bool | str = "auto"


@dataclass
class Basis:
    head: np.ndarray
    status: np.ndarray

    def copy(self) -> "Basis":
        return Basis(self.head.copy(), self.status.copy())


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None
    objective: float
    dual_objective: float
    row_duals: np.ndarray | None
    reduced_costs: np.ndarray | None
    iterations: int
    basis: Basis | None

    @property
    def duality_gap(self) -> float:
        """|primal - dual| / (1 + |primal|); nan unless optimal."""
        if self.status != OPTIMAL:
            return float("nan")
        return abs(self.objective - self.dual_objective) / (1.0 + abs(self.objective))


class _SingularBasis(Exception):
    pass


def _pow2(v: np.ndarray) -> np.ndarray:
    return np.exp2(np.round(np.log2(v)))


def _reduce_rows(M: sp.csr_matrix, how) -> np.ndarray:
    out = np.ones(M.shape[0])
    nz = np.diff(M.indptr) > 0
    if M.nnz:
        starts = M.indptr[:-1][nz]
        out[nz] = how.reduceat(M.data, starts)
    return out


def geometric_scaling(A: sp.spmatrix, passes: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Row/column factors R, C (powers of two) so that R A C has entries near 1."""
    m, n = A.shape
    R, C = np.ones(m), np.ones(n)
    absA = abs(sp.csr_matrix(A, dtype=float))
    # negligible entries would drag the geometric means; leave them out of the factors
    absA.data[absA.data < 1e-7 * absA.data.max(initial=0.0)] = 0.0
    absA.eliminate_zeros()
    if absA.nnz == 0:
        return R, C
    for _ in range(passes):
        B = sp.csr_matrix(sp.diags(R) @ absA @ sp.diags(C))
        R = R / np.sqrt(_reduce_rows(B, np.maximum) * _reduce_rows(B, np.minimum))
        Bt = sp.csr_matrix((sp.diags(R) @ absA @ sp.diags(C)).T)
        C = C / np.sqrt(_reduce_rows(Bt, np.maximum) * _reduce_rows(Bt, np.minimum))
    lim = 2.0 ** 40
    return _pow2(np.clip(R, 1 / lim, lim)), _pow2(np.clip(C, 1 / lim, lim))


# "auto" scales only matrices holding an entry at least this large (loose big-M rows)
SCALE_TRIGGER = 1e4


def wants_scaling(A: sp.spmatrix, mode) -> bool:
    if mode == "auto":
        return bool(A.nnz) and float(abs(A).max()) >= SCALE_TRIGGER
    if isinstance(mode, bool):
        return mode
    raise ValueError(f"scale must be True, False or 'auto', not {mode!r}")


class RevisedSimplex:
    """Reusable LP solver for one constraint matrix; bounds may change per call."""

    def __init__(self, c, A, row_lo, row_hi, lb, ub, offset: float = 0.0,
                 options: SimplexOptions | None = None) -> None:
        self.opt = options or SimplexOptions()
        A = sp.csr_matrix(A, dtype=float)
        self.m, self.n = A.shape
        self.c0 = np.asarray(c, dtype=float)
        self.offset = float(offset)
        self.lb0 = np.asarray(lb, dtype=float)
        self.ub0 = np.asarray(ub, dtype=float)
        self.rlo0 = np.asarray(row_lo, dtype=float)
        self.rhi0 = np.asarray(row_hi, dtype=float)
        self.A0 = A
        if wants_scaling(A, self.opt.scale):
            self.R, self.C = geometric_scaling(A)
        else:
            self.R, self.C = np.ones(self.m), np.ones(self.n)
        As = sp.csr_matrix(sp.diags(self.R) @ A @ sp.diags(self.C))
        cs = self.c0 * self.C
        big = np.max(np.abs(cs), initial=0.0)
        self.osc = float(_pow2(np.array([1.0 / big]))[0]) if big > 0 else 1.0
        self.cost = np.concatenate([cs * self.osc, np.zeros(self.m)])
        self.As = As.tocsc()
        self.AsT = sp.csr_matrix(As.T)
        self.Afull = sp.hstack([self.As, -sp.identity(self.m, format="csc")], format="csc")
        self.total_iterations = 0

    # -- linear algebra -------------------------------------------------
    def _factor(self) -> None:
        B = self.Afull[:, self.head]
        try:
            self.lu = splu(sp.csc_matrix(B), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise _SingularBasis(str(exc)) from exc
        self.eta_r: list[int] = []
        self.eta_w: list[np.ndarray] = []

    def _ftran(self, v: np.ndarray) -> np.ndarray:
        v = self.lu.solve(v)
        for r, w in zip(self.eta_r, self.eta_w):
            t = v[r] / w[r]
            v -= t * w
            v[r] = t
        return v

    def _btran(self, v: np.ndarray) -> np.ndarray:
        v = v.copy()
        for r, w in zip(reversed(self.eta_r), reversed(self.eta_w)):
            v[r] = (v[r] * (1.0 + w[r]) - w @ v) / w[r]
        return self.lu.solve(v, trans="T")

    def _column(self, j: int) -> np.ndarray:
        col = np.zeros(self.m)
        if j < self.n:
            lo, hi = self.As.indptr[j], self.As.indptr[j + 1]
            col[self.As.indices[lo:hi]] = self.As.data[lo:hi]
        else:
            col[j - self.n] = -1.0
        return col

    def _row_times_A(self, rho: np.ndarray) -> np.ndarray:
        return np.concatenate([self.AsT @ rho, -rho])

    def _reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        y = self._btran(cost[self.head])
        d = cost - self._row_times_A(y)
        d[self.head] = 0.0
        return d

    # -- state ----------------------------------------------------------
    def _nonbasic_values(self) -> None:
        st, x = self.status, self.x
        lo_mask, up_mask = st == AT_LOWER, st == AT_UPPER
        x[lo_mask] = self.l[lo_mask]
        x[up_mask] = self.u[up_mask]
        x[st == AT_ZERO] = 0.0

    def _recompute_basics(self) -> None:
        xn = self.x.copy()
        xn[self.head] = 0.0
        rhs = -(self.As @ xn[: self.n] - xn[self.n:])
        self.x[self.head] = self._ftran(rhs)

    def _default_status(self, j: np.ndarray) -> np.ndarray:
        lf, uf = np.isfinite(self.l[j]), np.isfinite(self.u[j])
        cst = self.cost[j]
        st = np.full(len(j), AT_ZERO, dtype=np.int8)
        st[uf] = AT_UPPER
        st[lf & (~uf | (cst >= 0))] = AT_LOWER
        return st

    def _slack_basis(self) -> None:
        n, m = self.n, self.m
        self.head = np.arange(n, n + m)
        self.status = np.empty(n + m, dtype=np.int8)
        self.status[:n] = self._default_status(np.arange(n))
        self.status[n:] = BASIC

    def _load_basis(self, basis: Basis | None) -> None:
        ok = (basis is not None and len(basis.head) == self.m
              and len(basis.status) == self.n + self.m
              and np.count_nonzero(basis.status == BASIC) == self.m
              and np.all(basis.status[basis.head] == BASIC))
        if not ok:
            self._slack_basis()
            return
        self.head = basis.head.copy()
        self.status = basis.status.copy()
        # nonbasic statuses must point at finite bounds
        st, l, u = self.status, self.l, self.u
        bad = ((st == AT_LOWER) & ~np.isfinite(l)) | ((st == AT_UPPER) & ~np.isfinite(u)) | \
              ((st == AT_ZERO) & (np.isfinite(l) | np.isfinite(u)))
        if bad.any():
            idx = np.flatnonzero(bad)
            st[idx] = self._default_status(idx)

    # -- public ---------------------------------------------------------
    def solve(self, lb: np.ndarray | None = None, ub: np.ndarray | None = None,
              basis: Basis | None = None, row_lo: np.ndarray | None = None,
              row_hi: np.ndarray | None = None) -> LpResult:
        """Solve with optional replacement variable / row bounds and a starting basis."""
        lb = self.lb0 if lb is None else np.asarray(lb, dtype=float)
        ub = self.ub0 if ub is None else np.asarray(ub, dtype=float)
        self.rlo = self.rlo0 if row_lo is None else np.asarray(row_lo, dtype=float)
        self.rhi = self.rhi0 if row_hi is None else np.asarray(row_hi, dtype=float)
        self.l = np.concatenate([lb / self.C, self.rlo * self.R])
        self.u = np.concatenate([ub / self.C, self.rhi * self.R])
        if np.any(self.l > self.u):
            return LpResult(INFEASIBLE, None, np.inf, np.inf, None, None, 0, None)
        self.x = np.zeros(self.n + self.m)
        self.iterations = 0
        limit = self.opt.max_iterations or 50 * (self.n + self.m) + 10_000
        self.limit = limit
        self._load_basis(basis)
        if self.m == 0:
            return self._solve_without_rows()
        status = NUMERICAL
        for _attempt in range(3):
            try:
                status = self._run()
                break
            except _SingularBasis:
                self._slack_basis()
        self.total_iterations += self.iterations
        return self._result(status)

    def _run(self) -> str:
        self._factor()
        self._nonbasic_values()
        self._recompute_basics()
        d = self._reduced_costs(self.cost)
        if self._make_dual_feasible(d):
            self._recompute_basics()
            status = self._dual(d)
            if status != OPTIMAL:
                return status
            d = self._reduced_costs(self.cost)
            if self._dual_infeasibility(d) <= self.opt.dual_tol:
                return OPTIMAL
        return self._primal()

    def _dual_infeasibility(self, d: np.ndarray) -> float:
        st = self.status
        free = self.u > self.l
        viol = np.zeros_like(d)
        lo = (st == AT_LOWER) & free
        up = (st == AT_UPPER) & free
        zr = st == AT_ZERO
        viol[lo] = np.maximum(-d[lo], 0.0)
        viol[up] = np.maximum(d[up], 0.0)
        viol[zr] = np.abs(d[zr])
        return float(viol.max(initial=0.0))

    def _make_dual_feasible(self, d: np.ndarray) -> bool:
        tol = self.opt.dual_tol
        st = self.status
        boxed = np.isfinite(self.l) & np.isfinite(self.u)
        to_up = (st == AT_LOWER) & (d < -tol) & boxed
        to_lo = (st == AT_UPPER) & (d > tol) & boxed
        st[to_up] = AT_UPPER
        st[to_lo] = AT_LOWER
        if to_up.any() or to_lo.any():
            self._nonbasic_values()
            self._recompute_basics()
        return self._dual_infeasibility(d) <= tol

    def _maybe_refactor(self) -> bool:
        if len(self.eta_r) >= self.opt.refactor_every:
            self._factor()
            self._recompute_basics()
            return True
        return False

    def _pivot(self, r: int, q: int, w: np.ndarray, leave_status: int, leave_value: float) -> None:
        leaving = self.head[r]
        self.status[leaving] = leave_status
        self.x[leaving] = leave_value
        self.head[r] = q
        self.status[q] = BASIC
        self.eta_r.append(r)
        self.eta_w.append(w)

    # -- dual simplex ---------------------------------------------------
    def _dual(self, d: np.ndarray) -> str:
        ptol, dtol, piv = self.opt.primal_tol, self.opt.dual_tol, self.opt.pivot_tol
        l, u, st = self.l, self.u, self.status
        cost = self.cost
        degenerate = 0
        while True:
            if self.iterations >= self.limit:
                return ITERATION_LIMIT
            if self._maybe_refactor():
                d = self._reduced_costs(cost)
            if degenerate > self.opt.bland_after and cost is self.cost:
                cost, d = self._perturb_costs(d)
            xb = self.x[self.head]
            lb_, ub_ = l[self.head], u[self.head]
            infeas = np.maximum(lb_ - xb, xb - ub_)
            r = int(np.argmax(infeas))
            if infeas[r] <= ptol:
                return OPTIMAL
            to_lower = xb[r] < lb_[r]
            e = np.zeros(self.m)
            e[r] = 1.0
            rho = self._btran(e)
            alpha = self._row_times_A(rho)
            movable = u > l
            lo = (st == AT_LOWER) & movable
            up = (st == AT_UPPER) & movable
            zr = st == AT_ZERO
            sgn = 1.0 if to_lower else -1.0
            # after the step d_j <- d_j + sgn*theta*alpha_j must keep its sign
            a = sgn * alpha
            cand = (lo & (a < -piv)) | (up & (a > piv)) | (zr & (np.abs(a) > piv))
            if not cand.any():
                return INFEASIBLE
            idx = np.flatnonzero(cand)
            dist = np.where(lo[idx], np.maximum(d[idx], 0.0),
                            np.where(up[idx], np.maximum(-d[idx], 0.0), np.abs(d[idx])))
            aa = np.abs(a[idx])
            theta_max = np.min((dist + dtol) / aa)
            ratios = dist / aa
            ok = ratios <= theta_max
            k = idx[ok][int(np.argmax(aa[ok]))]
            theta = dist[np.searchsorted(idx, k)] / abs(a[k])
            q = int(k)
            w = self._ftran(self._column(q))
            fresh = not self.eta_r
            if abs(w[r]) < 1e-11 or (not fresh and abs(w[r] - alpha[q]) > 1e-7 * (1.0 + abs(w[r]))):
                self._factor()
                self._recompute_basics()
                d = self._reduced_costs(cost)
                if abs(w[r]) < 1e-11:
                    raise _SingularBasis("tiny dual pivot")
                continue
            target = lb_[r] if to_lower else ub_[r]
            delta = (xb[r] - target) / w[r]
            self.x[q] += delta
            self.x[self.head] -= delta * w
            d += sgn * theta * alpha
            self._pivot(r, q, w, AT_LOWER if to_lower else AT_UPPER, target)
            d[self.head] = 0.0
            self.iterations += 1
            degenerate = degenerate + 1 if theta <= 1e-12 else 0

    def _perturb_costs(self, d: np.ndarray):
        """Shift nonbasic costs into the dual-feasible direction to break dual degeneracy.

        The caller finishes with the true costs (primal clean-up if needed).
        """
        rng = np.random.default_rng(0x5EED)
        st = self.status
        boxed_free = self.u > self.l
        xi = self.opt.dual_tol * 1e3 * (1.0 + np.abs(self.cost)) * rng.uniform(0.5, 1.0,
                                                                                 len(self.cost))
        shift = np.zeros(len(self.cost))
        lo = (st == AT_LOWER) & boxed_free
        up = (st == AT_UPPER) & boxed_free
        shift[lo] = xi[lo]
        shift[up] = -xi[up]
        return self.cost + shift, d + shift

    # -- primal simplex -------------------------------------------------
    def _primal(self) -> str:
        ptol, dtol, piv = self.opt.primal_tol, self.opt.dual_tol, self.opt.pivot_tol
        l, u, st = self.l, self.u, self.status
        degenerate, bland = 0, False
        nm = self.n + self.m
        while True:
            if self.iterations >= self.limit:
                return ITERATION_LIMIT
            self._maybe_refactor()
            xb = self.x[self.head]
            lb_, ub_ = l[self.head], u[self.head]
            below = xb < lb_ - ptol
            above = xb > ub_ + ptol
            phase1 = bool(below.any() or above.any())
            if phase1:
                cost = np.zeros(nm)
                cost[self.head[below]] = -1.0
                cost[self.head[above]] = 1.0
            else:
                cost = self.cost
            d = self._reduced_costs(cost)
            movable = u > l
            inc = ((st == AT_LOWER) | (st == AT_ZERO)) & movable & (d < -dtol)
            dec = ((st == AT_UPPER) | (st == AT_ZERO)) & movable & (d > dtol)
            elig = inc | dec
            if not elig.any():
                return INFEASIBLE if phase1 else OPTIMAL
            if bland:
                q = int(np.argmax(elig))
            else:
                q = int(np.argmax(np.where(elig, np.abs(d), 0.0)))
            direction = -1.0 if d[q] > 0 else 1.0
            w = self._ftran(self._column(q))
            rate = -direction * w
            feas = ~(below | above)
            up_hit = (rate > piv) & ((feas & np.isfinite(ub_)) | below)
            lo_hit = (rate < -piv) & ((feas & np.isfinite(lb_)) | above)
            # infeasible basics stop at the bound where they become feasible
            tgt = np.where(up_hit, np.where(below, lb_, ub_), np.where(above, ub_, lb_))
            cand = np.flatnonzero(up_hit | lo_hit)
            span = u[q] - l[q]
            if cand.size:
                dist = np.abs(tgt[cand] - xb[cand])
                ar = np.abs(rate[cand])
                ratios = dist / ar
                if bland:
                    tmin = ratios.min()
                    ties = cand[ratios <= tmin + 1e-12]
                    r = int(ties[np.argmin(self.head[ties])])
                    theta = max(float(tmin), 0.0)
                else:
                    theta_max = np.min((dist + ptol) / ar)
                    ok = ratios <= theta_max
                    pick = int(np.argmax(np.where(ok, ar, -1.0)))
                    r = int(cand[pick])
                    theta = max(float(ratios[pick]), 0.0)
            else:
                r, theta = -1, np.inf
            if np.isfinite(span) and span <= theta:
                # bound flip of the entering variable, basis unchanged
                self.x[q] = u[q] if direction > 0 else l[q]
                st[q] = AT_UPPER if direction > 0 else AT_LOWER
                self.x[self.head] += rate * span
                self.iterations += 1
                degenerate, bland = 0, False
                continue
            if r < 0:
                if phase1:
                    self._factor()
                    self._recompute_basics()
                    self.iterations += 1
                    continue
                return UNBOUNDED
            if abs(w[r]) < 1e-11:
                self._factor()
                self._recompute_basics()
                self.iterations += 1
                continue
            self.x[q] += direction * theta
            self.x[self.head] += rate * theta
            leave_status = AT_UPPER if up_hit[r] and not below[r] else AT_LOWER
            if above[r]:
                leave_status = AT_UPPER
            leave_value = tgt[r]
            self._pivot(r, q, w, leave_status, leave_value)
            self.iterations += 1
            if theta <= 1e-12:
                degenerate += 1
                if degenerate > self.opt.bland_after:
                    bland = True
            else:
                degenerate, bland = 0, False

    def _solve_without_rows(self) -> LpResult:
        l, u, cst = self.l, self.u, self.cost
        if np.any((cst < 0) & ~np.isfinite(u)) or np.any((cst > 0) & ~np.isfinite(l)):
            return LpResult(UNBOUNDED, None, -np.inf, np.nan, None, None, 0, None)
        self.status[:] = np.where(cst < 0, AT_UPPER, self.status)
        self._nonbasic_values()
        self.head = np.zeros(0, dtype=np.int64)
        x = self.x * self.C
        obj = float(self.c0 @ x + self.offset)
        return LpResult(OPTIMAL, x, obj, obj, np.zeros(0), self.c0.copy(), 0,
                        Basis(self.head, self.status.copy()))

    # -- result ---------------------------------------------------------
    def _result(self, status: str) -> LpResult:
        if status != OPTIMAL:
            unb = status == UNBOUNDED
            return LpResult(status, None, -np.inf if unb else np.inf, np.nan, None, None,
                            self.iterations, None)
        n = self.n
        x = self.x[:n] * self.C
        # clip tiny bound violations introduced by the scaling round trip
        x = np.minimum(np.maximum(x, self.lb_cur()), self.ub_cur())
        d = self._reduced_costs(self.cost)
        ys = self._btran(self.cost[self.head])
        y = self.R * ys / self.osc
        dstruct = d[:n] / (self.C * self.osc)
        objective = float(self.c0 @ x + self.offset)
        dual = self.offset
        tiny = self.opt.dual_tol
        for dv_s, dv, lo, hi in ((d[:n], dstruct, self.l[:n] * self.C, self.u[:n] * self.C),
                                 (ys, y, self.rlo, self.rhi)):
            pos = dv_s > tiny
            neg = dv_s < -tiny
            with np.errstate(invalid="ignore"):
                dual += float(np.sum(dv[pos] * lo[pos]) + np.sum(dv[neg] * hi[neg]))
        if not np.isfinite(dual):
            dual = objective if np.isnan(dual) else dual
        return LpResult(OPTIMAL, x, objective, dual, y, dstruct, self.iterations,
                        Basis(self.head.copy(), self.status.copy()))

    def lb_cur(self) -> np.ndarray:
        return self.l[: self.n] * self.C

    def ub_cur(self) -> np.ndarray:
        return self.u[: self.n] * self.C

"""Activity-based domain propagation for branch-and-bound nodes."""

from __future__ import annotations

import numpy as np

from .problem import MilpProblem


class DomainPropagator:
    """Tightens variable bounds implied by the rows, one node at a time.

    Continuous bounds are tightened only inside the propagation loop; the
    caller receives the original continuous bounds and the tightened binary
    bounds, so LP relaxations see exactly the node's branching decisions
    plus the binaries the rows force.
    """

    def __init__(self, problem: MilpProblem, max_passes: int = 50, int_tol: float = 1e-6,
                 feas_tol: float = 1e-6) -> None:
        coo = problem.A.tocoo()
        keep = coo.data != 0.0
        self.rows = coo.row[keep].astype(np.int64)
        self.cols = coo.col[keep].astype(np.int64)
        self.vals = coo.data[keep].astype(float)
        self.pos = self.vals > 0
        self.rlo, self.rhi = problem.row_bounds()
        self.m = problem.num_rows
        self.n = problem.num_vars
        self.binary = problem.binary.copy()
        self.max_passes = max_passes
        self.int_tol = int_tol
        self.feas_tol = feas_tol

    def _activity(self, lo_c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-row sum of finite contributions and count of infinite ones."""
        fin = np.isfinite(lo_c)
        total = np.bincount(self.rows, weights=np.where(fin, lo_c, 0.0), minlength=self.m)
        ninf = np.bincount(self.rows, weights=(~fin).astype(float), minlength=self.m)
        return total, ninf

    def _residual(self, contrib: np.ndarray, total: np.ndarray, ninf: np.ndarray,
                  sign: float) -> np.ndarray:
        # activity of the row without entry e; +-inf when another entry is unbounded
        fin = np.isfinite(contrib)
        others_inf = ninf[self.rows] - (~fin) > 0.5
        res = total[self.rows] - np.where(fin, contrib, 0.0)
        return np.where(others_inf, sign * np.inf, res)

    def propagate(self, lb: np.ndarray, ub: np.ndarray):
        """Return (lb, ub) with binary bounds tightened, or None if infeasible."""
        lo, hi = lb.astype(float).copy(), ub.astype(float).copy()
        out_lb, out_ub = lb.copy(), ub.copy()
        a, c, r = self.vals, self.cols, self.rows
        with np.errstate(invalid="ignore", over="ignore"):
            for _ in range(self.max_passes):
                lo_c = np.where(self.pos, a * lo[c], a * hi[c])
                hi_c = np.where(self.pos, a * hi[c], a * lo[c])
                tmin, nmin = self._activity(lo_c)
                tmax, nmax = self._activity(hi_c)
                if np.any((nmin < 0.5) & (tmin > self.rhi + self.feas_tol * (1 + np.abs(self.rhi)))):
                    return None
                if np.any((nmax < 0.5) & (tmax < self.rlo - self.feas_tol * (1 + np.abs(self.rlo)))):
                    return None
                rmin = self._residual(lo_c, tmin, nmin, -1.0)
                rmax = self._residual(hi_c, tmax, nmax, 1.0)
                # a x_c <= rhi - rmin and a x_c >= rlo - rmax
                up = (self.rhi[r] - rmin) / a
                dn = (self.rlo[r] - rmax) / a
                cand_ub = np.where(self.pos, up, dn)
                cand_lb = np.where(self.pos, dn, up)
                cand_ub[~np.isfinite(cand_ub) | np.isnan(cand_ub)] = np.inf
                cand_lb[~np.isfinite(cand_lb) | np.isnan(cand_lb)] = -np.inf
                new_ub = hi.copy()
                new_lb = lo.copy()
                np.minimum.at(new_ub, c, cand_ub)
                np.maximum.at(new_lb, c, cand_lb)
                b = self.binary
                new_ub[b] = np.floor(new_ub[b] + self.int_tol)
                new_lb[b] = np.ceil(new_lb[b] - self.int_tol)
                # keep continuous tightenings a hair loose against rounding error
                slack = 1e-9 * (1.0 + np.abs(new_ub))
                new_ub[~b] = np.minimum(hi[~b], new_ub[~b] + slack[~b])
                slack = 1e-9 * (1.0 + np.abs(new_lb))
                new_lb[~b] = np.maximum(lo[~b], new_lb[~b] - slack[~b])
                if np.any(new_lb > new_ub + self.feas_tol * (1 + np.abs(new_ub))):
                    return None
                new_lb = np.minimum(new_lb, new_ub)
                tol = 1e-7 * (1.0 + np.abs(hi))
                moved = np.any(new_ub < hi - tol) or np.any(new_lb > lo + 1e-7 * (1.0 + np.abs(lo)))
                lo, hi = new_lb, new_ub
                if not moved:
                    break
        b = self.binary
        out_lb[b] = np.maximum(out_lb[b], lo[b])
        out_ub[b] = np.minimum(out_ub[b], hi[b])
        return out_lb, out_ub

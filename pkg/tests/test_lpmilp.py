from __future__ import annotations

import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from steplearn.lpmilp import (EQ, GE, LE, MilpProblem, ProblemBuilder, ProblemError, SolverOptions,
                              WarmStartError, fix_binaries_and_solve, relative_gap, solve_lp,
                              solve_milp, write_lp)
from steplearn.lpmilp.propagate import DomainPropagator
from steplearn.lpmilp.simplex import SCALE_TRIGGER, SimplexOptions, wants_scaling


def _problem(c, A, sense, rhs, lb, ub, binary=None):
    n = len(c)
    A = sp.csr_matrix(np.asarray(A, dtype=float).reshape(len(rhs), n))
    return MilpProblem(np.asarray(c, float), A, np.asarray(sense), np.asarray(rhs, float),
                       np.asarray(lb, float), np.asarray(ub, float),
                       np.zeros(n, bool) if binary is None else np.asarray(binary, bool),
                       tuple(f"x{j}" for j in range(n)), tuple(f"r{i}" for i in range(len(rhs))))


def _random_equality_lp(seed, m=5, n=8):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n))
    u = rng.uniform(1.0, 4.0, n)
    x0 = rng.uniform(0.0, 1.0, n) * u
    return A, A @ x0, u, rng.normal(size=n)


def _vertex_enumeration(A, b, u, c):
    """Best basic feasible solution of min c x, A x = b, 0 <= x <= u."""
    m, n = A.shape
    best = np.inf
    for basic in itertools.combinations(range(n), m):
        B = A[:, basic]
        if abs(np.linalg.det(B)) < 1e-10:
            continue
        rest = [j for j in range(n) if j not in basic]
        for at_upper in itertools.product((0, 1), repeat=len(rest)):
            x = np.zeros(n)
            x[rest] = np.array(at_upper) * u[rest]
            x[list(basic)] = np.linalg.solve(B, b - A[:, rest] @ x[rest])
            if np.all(x >= -1e-9) and np.all(x <= u + 1e-9):
                best = min(best, float(c @ x))
    return best


# -- LP -------------------------------------------------------------------------

def test_one_dimensional_lp():
    sol = solve_lp(_problem([-1.0], [[1.0]], [LE], [3.0], [0.0], [np.inf]))
    assert sol.status == "optimal"
    assert sol.x[0] == pytest.approx(3.0)
    assert sol.objective == pytest.approx(-3.0)


def test_empty_feasible_set_is_infeasible():
    p = _problem([1.0], [[1.0], [1.0]], [GE, LE], [2.0, 1.0], [-np.inf], [np.inf])
    assert solve_lp(p).status == "infeasible"


def test_unbounded_detected():
    p = _problem([-1.0, 0.0], [[1.0, -1.0]], [LE], [1.0], [0.0, 0.0], [np.inf, np.inf])
    assert solve_lp(p).status == "unbounded"


@pytest.mark.parametrize("seed", range(10))
def test_random_lp_matches_vertex_enumeration(seed):
    A, b, u, c = _random_equality_lp(seed)
    p = _problem(c, A, [EQ] * 5, b, np.zeros(8), u)
    sol = solve_lp(p)
    assert sol.status == "optimal"
    best = _vertex_enumeration(A, b, u, c)
    assert sol.objective == pytest.approx(best, rel=1e-7, abs=1e-7)
    assert p.max_violation(sol.x) <= 1e-6


@settings(max_examples=40)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 12), n=st.integers(1, 15))
def test_random_inequality_lp_matches_linprog(seed, m, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.6)
    x0 = rng.uniform(-1, 1, n)
    b = A @ x0 + rng.uniform(0, 1, m)
    lb = np.where(rng.random(n) < 0.2, -np.inf, -2.0)
    ub = np.where(rng.random(n) < 0.2, np.inf, 2.0)
    c = rng.normal(size=n)
    p = _problem(c, A, [LE] * m, b, lb, ub)
    ref = linprog(c, A_ub=A, b_ub=b, bounds=list(zip(np.where(np.isinf(lb), None, lb),
                                                       np.where(np.isinf(ub), None, ub))),
                  method="highs")
    sol = solve_lp(p)
    if ref.status == 3:
        assert sol.status == "unbounded"
        return
    assert ref.status == 0
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(ref.fun, rel=1e-7, abs=1e-7)
    assert p.max_violation(sol.x) <= 1e-6
    assert sol.max_duality_gap <= 1e-7 * (1 + abs(sol.objective))


def test_mixed_senses_against_linprog():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(6, 9))
    x0 = rng.uniform(0, 1, 9)
    act = A @ x0
    sense = np.array([LE, GE, EQ, LE, GE, EQ])
    rhs = act + np.array([0.5, -0.5, 0.0, 0.2, -0.2, 0.0])
    c = rng.normal(size=9)
    p = _problem(c, A, sense, rhs, np.zeros(9), np.full(9, 3.0))
    A_ub = np.vstack([A[sense == LE], -A[sense == GE]])
    b_ub = np.concatenate([rhs[sense == LE], -rhs[sense == GE]])
    ref = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A[sense == EQ], b_eq=rhs[sense == EQ],
                  bounds=(0, 3), method="highs")
    assert solve_lp(p).objective == pytest.approx(ref.fun, rel=1e-8)


def test_lp_ignores_integrality():
    p = _problem([-1.0, -1.0], [[2.0, 2.0]], [LE], [3.0], [0, 0], [1, 1], binary=[True, True])
    assert solve_lp(p).objective == pytest.approx(-1.5)


@pytest.mark.parametrize("mode", [True, False, "auto"])
def test_big_m_rows_with_and_without_scaling(mode):
    # x <= 1e6 z with a 1e-3 cost on z; the LP optimum is finite either way
    p = _problem([-1.0, 1e-3], [[1.0, -1e6], [1.0, 0.0]], [LE, LE], [0.0, 5.0],
                 [0, 0], [np.inf, 1], binary=[False, True])
    opts = SolverOptions(simplex=SimplexOptions(scale=mode))
    sol = solve_milp(p, opts)
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-5.0 + 1e-3, abs=1e-6)


def test_scaling_modes():
    small = sp.csr_matrix(np.array([[1.0, 2.0]]))
    big = sp.csr_matrix(np.array([[1.0, SCALE_TRIGGER]]))
    assert not wants_scaling(small, "auto")
    assert wants_scaling(big, "auto")
    assert wants_scaling(small, True)
    assert not wants_scaling(big, False)
    with pytest.raises(ValueError):
        wants_scaling(small, "sometimes")


# -- MILP -----------------------------------------------------------------------

def test_unit_knapsack():
    p = _problem([-3.0, -2.0], [[1.0, 1.0]], [LE], [1.0], [0, 0], [1, 1], binary=[True, True])
    sol = solve_milp(p)
    assert sol.status == "optimal"
    assert np.allclose(sol.x, [1.0, 0.0])
    assert sol.objective == pytest.approx(-3.0)


def _random_milp(seed, k):
    rng = np.random.default_rng(seed)
    nc = int(rng.integers(1, 5))
    n = k + nc
    m = int(rng.integers(2, 7))
    A = np.round(rng.normal(size=(m, n)), 2)
    b = np.abs(A).sum(axis=1) * rng.uniform(0.2, 0.6, m)
    c = np.round(rng.normal(size=n), 2)
    lb = np.zeros(n)
    ub = np.concatenate([np.ones(k), np.full(nc, 3.0)])
    binary = np.concatenate([np.ones(k, bool), np.zeros(nc, bool)])
    return _problem(c, A, [LE] * m, b, lb, ub, binary)


def _enumerate(p):
    ints = np.flatnonzero(p.binary)
    cont = np.flatnonzero(~p.binary)
    A = p.A.toarray()
    best = np.inf
    for bits in itertools.product((0.0, 1.0), repeat=len(ints)):
        y = np.array(bits)
        res = linprog(p.c[cont], A_ub=A[:, cont], b_ub=p.rhs - A[:, ints] @ y,
                      bounds=list(zip(p.lb[cont], p.ub[cont])), method="highs")
        if res.status == 0:
            best = min(best, res.fun + p.c[ints] @ y)
    return best


@pytest.mark.parametrize("seed", range(20))
def test_milp_matches_enumeration(seed):
    k = 3 + seed % 8
    p = _random_milp(seed, k)
    sol = solve_milp(p, SolverOptions(mip_gap=0.0))
    best = _enumerate(p)
    if not np.isfinite(best):
        assert sol.status == "infeasible"
        return
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(best, rel=1e-6, abs=1e-6)
    xi = sol.x[p.binary]
    assert np.all(np.abs(xi - np.round(xi)) <= 1e-6)
    assert p.max_violation(sol.x) <= 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_bound_and_incumbent_monotone(seed):
    sol = solve_milp(_random_milp(100 + seed, 10), SolverOptions(mip_gap=0.0))
    bounds = [h[0] for h in sol.history]
    incs = [h[1] for h in sol.history]
    assert all(b2 >= b1 - 1e-9 for b1, b2 in zip(bounds, bounds[1:]))
    assert all(i2 <= i1 + 1e-9 for i1, i2 in zip(incs, incs[1:]))


def test_gap_within_tolerance_when_optimal():
    p = _random_milp(7, 10)
    sol = solve_milp(p, SolverOptions(mip_gap=1e-3))
    assert sol.status == "optimal"
    assert sol.gap <= 1e-3


def test_determinism():
    p = _random_milp(11, 10)
    a, b = solve_milp(p), solve_milp(p)
    assert a.node_count == b.node_count
    assert np.array_equal(a.x, b.x)
    assert a.objective == b.objective


def test_warm_start_with_optimum():
    p = _random_milp(5, 8)
    ref = solve_milp(p, SolverOptions(mip_gap=0.0))
    sol = solve_milp(p, SolverOptions(mip_gap=0.0), warm_start=ref.x[p.binary])
    assert sol.objective == pytest.approx(ref.objective)
    assert sol.node_count >= 0


def test_warm_start_objective_never_worse():
    p = _random_milp(9, 8)
    for bits in itertools.product((0, 1), repeat=3):
        start = np.zeros(8)
        start[:3] = bits
        ev = fix_binaries_and_solve(p, start)
        if ev.status != "optimal":
            with pytest.raises(WarmStartError):
                solve_milp(p, warm_start=start)
            continue
        assert solve_milp(p, warm_start=start).objective <= ev.objective + 1e-9


def test_infeasible_warm_start_rejected():
    p = _problem([1.0, 1.0], [[1.0, 1.0]], [GE], [2.0], [0, 0], [1, 1], binary=[True, True])
    with pytest.raises(WarmStartError, match="infeasible"):
        solve_milp(p, warm_start=[1, 0])
    with pytest.raises(WarmStartError):
        solve_milp(p, warm_start=[0.5, 1])


def test_time_limit_status():
    p = _random_milp(1, 10)
    sol = solve_milp(p, SolverOptions(mip_gap=0.0, time_limit=0.0))
    assert sol.status == "time_limit"


def test_fix_binaries_matches_equality_fixings():
    p = _random_milp(4, 6)
    ref = solve_milp(p, SolverOptions(mip_gap=0.0))
    y = ref.x[p.binary]
    fixed = fix_binaries_and_solve(p, y)
    lb, ub = p.lb.copy(), p.ub.copy()
    lb[p.binary] = ub[p.binary] = y
    assert fixed.objective == pytest.approx(solve_milp(p.with_bounds(lb, ub)).objective)
    by_name = {p.var_names[j]: y[i] for i, j in enumerate(np.flatnonzero(p.binary))}
    assert fix_binaries_and_solve(p, by_name).objective == pytest.approx(fixed.objective)


def test_contradictory_fixing_infeasible():
    b = ProblemBuilder()
    y = b.add_vars(["y0", "y1"], 0, 1, binary=True)
    b.add_row(y, [1.0, -1.0], EQ, 0.0)
    p = b.build()
    assert fix_binaries_and_solve(p, [1, 0]).status == "infeasible"


def test_fix_binaries_with_no_binaries_is_lp():
    p = _problem([-1.0], [[1.0]], [LE], [3.0], [0.0], [10.0])
    assert fix_binaries_and_solve(p, []).objective == solve_lp(p).objective


def test_priority_orders_branching():
    b = ProblemBuilder()
    lo = b.add_vars(["lo0", "lo1"], 0, 1, cost=[-1.0, -1.0], binary=True, priority=-1)
    hi = b.add_vars(["hi0", "hi1"], 0, 1, cost=[-1.0, -1.0], binary=True)
    b.add_row(np.concatenate([lo, hi]), [2.0] * 4, LE, 3.0)
    p = b.build()
    assert list(p.priority) == [-1, -1, 0, 0]
    sol = solve_milp(p, SolverOptions(mip_gap=0.0))
    assert sol.objective == pytest.approx(-1.0)
    assert p.with_bounds().priority is p.priority


def test_relative_gap():
    assert relative_gap(np.inf, 0.0) == np.inf
    assert relative_gap(100.0, 99.0) == pytest.approx(0.01)
    assert relative_gap(5.0, 5.0) == 0.0


# -- problem well-formedness and export -------------------------------------------

def test_problem_rejects_bad_input():
    with pytest.raises(ProblemError):
        _problem([1.0], [[np.nan]], [LE], [1.0], [0], [1])
    with pytest.raises(ProblemError):
        _problem([1.0], [[1.0]], [LE], [1.0], [2], [1])
    with pytest.raises(ProblemError):
        _problem([1.0], [[1.0]], [LE], [1.0], [0], [2], binary=[True])
    with pytest.raises(ProblemError):
        ProblemBuilder().add_row([0], [1.0], "!", 1.0)


def test_write_lp(tmp_path):
    b = ProblemBuilder(name="toy")
    x = b.add_var("x", 0, 4, cost=-1.0)
    y = b.add_var("y", 0, 1, cost=2.0, binary=True)
    b.add_row([x, y], [1.0, -4.0], LE, 0.0, name="link")
    b.add_row([x], [1.0], GE, -1.0)
    b.add_objective_constant(3.0)
    path = tmp_path / "toy.lp"
    write_lp(b.build(), path)
    text = path.read_text()
    for token in ("Minimize", "Subject To", "link:", "Bounds", "Binar", "End"):
        assert token in text


# -- domain propagation --------------------------------------------------------------

@pytest.mark.parametrize("seed", range(12))
def test_propagation_keeps_optimum(seed):
    p = _random_milp(100 + seed, 3 + seed % 8)
    on = solve_milp(p, SolverOptions(mip_gap=0.0))
    off = solve_milp(p, SolverOptions(mip_gap=0.0, propagate=False))
    assert on.status == off.status
    if on.status == "optimal":
        assert on.objective == pytest.approx(off.objective, rel=1e-9, abs=1e-9)
        assert on.node_count <= off.node_count


def test_propagation_fixes_forced_binary():
    # x0 + 2 y <= 1.5 with x0 >= 0.6 forces y = 0; y - x1 >= 0 then pins x1 <= 0
    p = _problem([-1.0, 0.0, -1.0], [[1, 2, 0], [0, 1, -1]], [LE, GE], [1.5, 0.0],
                 [0.6, 0, 0], [1, 1, 1], [False, True, False])
    prop = DomainPropagator(p)
    lb, ub = prop.propagate(p.lb, p.ub)
    assert ub[1] == 0.0 and lb[1] == 0.0
    assert ub[0] == 1.0 and ub[2] == 1.0  # continuous bounds are handed back untouched
    sol = solve_milp(p)
    assert sol.node_count == 1 and sol.objective == pytest.approx(-1.0)


def test_propagation_detects_infeasible_node():
    p = _problem([1.0, 1.0], [[1, 1]], [GE], [2.5], [0, 0], [1, 1], [True, True])
    assert DomainPropagator(p).propagate(p.lb, p.ub) is None
    assert solve_milp(p).status == "infeasible"

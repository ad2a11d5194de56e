"""Mixed-integer encoding of trained ReLU networks and the surrogate planning model.

Each hidden neuron ``a = W h + b`` is split as ``a = hp - hn`` with
``0 <= hp <= U (1 - z)`` and ``0 <= hn <= -L z`` for a binary ``z``, where
``[L, U]`` are interval bounds on the pre-activation over the input box. The
affine output must lie below an output variable that is itself bounded below
by zero in target units, so under minimisation the output settles at
``max(0, forward(x))``.

Everything is expressed in the network's standardised input/output space;
objective coefficients are rescaled so that the planning objective is in $.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from .grid.plan import validate_plan
from .grid.types import InvestmentPlan, Network, ScenarioTree, discount_factor
from .lpmilp import EQ, GE, LE, MilpProblem, MilpSolution, ProblemBuilder, SolverOptions, solve_milp
from .lpmilp import write_lp
from .mlp.model import MlpModel, forward
from .opf import add_investment_block


# weights below this magnitude are left out of the rows (dead neurons decay towards 0)
COEF_EPS = 1e-11
# most binary inputs for which exact corner bounds are enumerated
CORNER_LIMIT = 12
# most binary inputs for which activation-pattern rows are generated
PATTERN_LIMIT = 6


class EmbeddingError(ValueError):
    """The network or its input box cannot be encoded."""


class SchemaError(EmbeddingError):
    """Model features do not match the planning instance."""


@dataclass
class NeuronBounds:
    """Pre-activation intervals per hidden layer, in standardised units."""

    lower: list[np.ndarray]
    upper: list[np.ndarray]
    out_lower: float = -np.inf
    out_upper: float = np.inf

    @property
    def big_m(self) -> list[np.ndarray]:
        return [np.maximum(np.abs(lo), hi) for lo, hi in zip(self.lower, self.upper)]

    @property
    def num_neurons(self) -> int:
        return sum(len(lo) for lo in self.lower)

    def stable_active(self) -> list[np.ndarray]:
        return [lo >= 0 for lo in self.lower]

    def stable_inactive(self) -> list[np.ndarray]:
        return [hi <= 0 for hi in self.upper]


def _interval_affine(w: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    wp, wn = np.maximum(w, 0.0), np.minimum(w, 0.0)
    return wp @ lo + wn @ hi + b, wp @ hi + wn @ lo + b


def propagate_bounds_normalised(model: MlpModel, zlo, zhi) -> NeuronBounds:
    """Interval arithmetic through the network on a standardised input box."""
    for arr in [*model.weights, *model.biases]:
        if not np.all(np.isfinite(arr)):
            raise EmbeddingError("network has non-finite parameters")
    lo = np.asarray(zlo, dtype=float)
    hi = np.asarray(zhi, dtype=float)
    if lo.shape != (model.n_inputs,) or hi.shape != lo.shape:
        raise EmbeddingError(f"input box must have {model.n_inputs} intervals")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise EmbeddingError("input box must be bounded")
    if np.any(lo > hi):
        raise EmbeddingError("input box has lower > upper")
    lows, ups = [], []
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a_lo, a_hi = _interval_affine(w, b, lo, hi)
        lows.append(a_lo)
        ups.append(a_hi)
        lo, hi = np.maximum(a_lo, 0.0), np.maximum(a_hi, 0.0)
    o_lo, o_hi = _interval_affine(model.weights[-1], model.biases[-1], lo, hi)
    return NeuronBounds(lows, ups, float(o_lo[0]), float(o_hi[0]))


def propagate_bounds(model: MlpModel, lower, upper) -> NeuronBounds:
    """Bounds for a box given in raw feature units (model feature order)."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    return propagate_bounds_normalised(model, model.normalise_x(lower), model.normalise_x(upper))


def _corner_grid(k: int) -> np.ndarray:
    # row c holds corner c; input i is bit (k - 1 - i) of c
    return ((np.arange(2 ** k)[:, None] >> np.arange(k)[None, ::-1]) & 1).astype(float)


@dataclass
class CornerPatterns:
    """Pre-activations of every hidden neuron at every 0/1 corner of the binary inputs."""

    binary_positions: np.ndarray  # model input positions of the binary features
    pre: list[np.ndarray]  # per layer, (neurons, 2**k)
    out: np.ndarray  # (2**k,) standardised outputs


def corner_patterns(model: MlpModel, lower, upper, binary) -> CornerPatterns:
    """Forward passes at all corners of a box whose `binary` coordinates take only 0 / 1.

    The remaining coordinates must be degenerate (lower == upper).
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    binary = np.asarray(binary, dtype=bool)
    if np.any(lower[~binary] != upper[~binary]):
        raise EmbeddingError("corner bounds need every non-binary input fixed")
    k = int(binary.sum())
    if k > CORNER_LIMIT:
        raise EmbeddingError(f"{k} binary inputs exceed the corner enumeration limit")
    X = np.repeat(lower[None, :], 2 ** k, axis=0)
    X[:, binary] = _corner_grid(k)
    h = model.normalise_x(X).T
    pre = []
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = w @ h + b[:, None]
        pre.append(a)
        h = np.maximum(a, 0.0)
    out = (model.weights[-1] @ h + model.biases[-1][:, None])[0]
    return CornerPatterns(np.flatnonzero(binary), pre, out)


def corner_bounds(model: MlpModel, lower, upper, binary) -> NeuronBounds:
    """Exact pre-activation ranges over a box whose `binary` coordinates take only 0 / 1.

    The remaining coordinates must be degenerate (lower == upper). Every
    integer point of the box is a forward pass, so these bounds are the
    tightest valid ones for a mixed-integer encoding.
    """
    cp = corner_patterns(model, lower, upper, binary)
    return NeuronBounds([a.min(axis=1) for a in cp.pre], [a.max(axis=1) for a in cp.pre],
                        float(cp.out.min()), float(cp.out.max()))


def _subcubes(k: int):
    """All faces of the k-cube as (code, corner indices); code[i] is 0, 1 or 2 (free)."""
    grid = _corner_grid(k).astype(int)
    faces = []
    for code in np.ndindex(*(3,) * k):
        code = np.array(code, dtype=int)
        fixed = code < 2
        idx = np.flatnonzero(np.all(grid[:, fixed] == code[fixed], axis=1))
        faces.append((code, idx))
    return faces


def pattern_implicants(pre: np.ndarray) -> list[tuple[int, int, np.ndarray]]:
    """Maximal faces on which a neuron's branch is constant.

    `pre` is (neurons, 2**k). Returns (neuron, branch, code) triples where
    branch 1 means the inactive side (pre-activation < 0) and code marks the
    face as in :func:`_subcubes`. Corners with pre-activation exactly 0 fit
    either branch. The full cube (a stable neuron) is left out.
    """
    n, ncorner = pre.shape
    k = int(round(np.log2(ncorner)))
    faces = _subcubes(k)
    index = {tuple(code): q for q, (code, _) in enumerate(faces)}
    out = []
    for branch in (0, 1):
        clash = pre > 0 if branch == 1 else pre < 0
        hit = pre < 0 if branch == 1 else pre > 0
        valid = np.zeros((n, len(faces)), dtype=bool)
        for q, (_, idx) in enumerate(faces):
            valid[:, q] = ~clash[:, idx].any(axis=1) & hit[:, idx].any(axis=1)
        prime = valid.copy()
        for q, (code, _) in enumerate(faces):
            for i in np.flatnonzero(code < 2):
                up = code.copy()
                up[i] = 2
                prime[:, q] &= ~valid[:, index[tuple(up)]]
        full = index[(2,) * k]
        prime[:, full] = False
        for j, q in zip(*np.nonzero(prime)):
            out.append((int(j), branch, faces[q][0]))
    return out


def training_box(model: MlpModel) -> tuple[np.ndarray, np.ndarray]:
    """Feature min / max seen in training (binary built-status columns widened to [0, 1])."""
    md = model.metadata
    if "x_min" not in md or "x_max" not in md:
        raise EmbeddingError("model metadata carries no training feature range")
    lo, hi = np.array(md["x_min"], dtype=float), np.array(md["x_max"], dtype=float)
    for i, n in enumerate(model.feature_names):
        if n.startswith("y_"):
            lo[i], hi[i] = min(lo[i], 0.0), max(hi[i], 1.0)
    return lo, hi


class Var(NamedTuple):
    """Reference to an existing MILP variable used as a network input."""

    index: int


@dataclass
class EmbeddedBlock:
    output: int  # standardised output variable
    pos: list[np.ndarray]  # hp per layer
    neg: list[np.ndarray]  # hn per layer
    active: list[np.ndarray]  # z per layer (1 = inactive branch)
    bounds: NeuronBounds
    model: MlpModel

    def predicted(self, x: np.ndarray) -> float:
        """Output in target units from a MILP solution vector."""
        return float(self.model.denormalise_y(x[self.output]))


def embed_network(b: ProblemBuilder, model: MlpModel, bounds: NeuronBounds, inputs,
                  tag: str = "", output_cost: float = 0.0, clamp: bool = True,
                  patterns: CornerPatterns | None = None) -> EmbeddedBlock:
    """Append one network copy to `b`.

    `inputs` lists, in model feature order, either a float (fixed raw value)
    or a :class:`Var` whose raw value enters the first layer. The output
    variable is in standardised units; with `clamp` its target-unit value is
    bounded below by zero.

    Rows that the variable bounds already imply are not emitted. A neuron
    that is inactive over the whole box keeps hp fixed at 0 and gets no rows,
    so its hn is left free within its bounds.

    With `patterns` (corner forward passes over binary inputs that are all
    MILP variables) each unstable neuron also gets rows tying z to those
    binaries: on every maximal face of the input cube where the neuron's
    branch is constant, z is forced to that branch whenever the binaries lie
    on the face. At integer inputs every z is then determined.
    """
    if len(inputs) != model.n_inputs:
        raise SchemaError(f"{len(inputs)} inputs for a network with {model.n_inputs}")
    if len(bounds.lower) != model.depth:
        raise EmbeddingError("bounds do not match the network depth")
    for lo, hi in zip(bounds.lower, bounds.upper):
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise EmbeddingError("infinite neuron bound; the input box must be bounded")
    # first-layer input in standardised units: z_i = (x_i - mean_i) / scale_i
    const = np.zeros(model.n_inputs)
    var_cols, var_pos = [], []
    for i, v in enumerate(inputs):
        if isinstance(v, Var):
            var_cols.append(int(v.index))
            var_pos.append(i)
            const[i] = -model.x_mean[i] / model.x_scale[i]
        else:
            const[i] = (float(v) - model.x_mean[i]) / model.x_scale[i]
    var_cols = np.array(var_cols, dtype=np.int64)
    var_pos = np.array(var_pos, dtype=np.int64)
    inv_scale = 1.0 / model.x_scale[var_pos] if len(var_pos) else np.zeros(0)

    if patterns is not None:
        if len(patterns.pre) != model.depth:
            raise EmbeddingError("corner patterns do not match the network depth")
        if not all(isinstance(inputs[i], Var) for i in patterns.binary_positions):
            raise EmbeddingError("corner patterns need every binary input wired to a variable")
        pat_cols = [int(inputs[i].index) for i in patterns.binary_positions]

    pos, neg, act = [], [], []
    prev = None
    for m, (w, bias) in enumerate(zip(model.weights[:-1], model.biases[:-1])):
        lo, hi = bounds.lower[m], bounds.upper[m]
        n = w.shape[0]
        names = [f"{tag}{m},{j}" for j in range(n)]
        hp = b.add_vars([f"hp[{s}]" for s in names], 0.0, np.maximum(hi, 0.0))
        hn = b.add_vars([f"hn[{s}]" for s in names], 0.0, np.maximum(-lo, 0.0))
        # z = 1 selects the inactive branch; stable neurons get z fixed
        zlb = (hi <= 0).astype(float)
        zub = np.where((lo >= 0) & (hi > 0), 0.0, 1.0)
        z = b.add_vars([f"z[{s}]" for s in names], zlb, zub, binary=True, priority=-1)
        for j in range(n):
            if hi[j] <= 0:
                continue
            if m == 0:
                rhs = -(bias[j] + float(w[j] @ const))
                coef = w[j, var_pos] * inv_scale
                nz = np.flatnonzero(np.abs(coef) > COEF_EPS)
                cols = list(var_cols[nz]) + [hp[j], hn[j]]
                vals = list(coef[nz]) + [-1.0, 1.0]
            else:
                nz = np.flatnonzero(np.abs(w[j]) > COEF_EPS)
                rhs = -bias[j]
                cols = list(prev[nz]) + [hp[j], hn[j]]
                vals = list(w[j, nz]) + [-1.0, 1.0]
            b.add_row(cols, vals, EQ, rhs, name=f"split[{names[j]}]")
            if lo[j] < 0:
                b.add_row([hp[j], z[j]], [1.0, hi[j]], LE, hi[j], name=f"on[{names[j]}]")
                b.add_row([hn[j], z[j]], [1.0, lo[j]], LE, 0.0, name=f"off[{names[j]}]")
        if patterns is not None:
            unstable = np.flatnonzero((lo < 0) & (hi > 0))
            for r, (j, branch, code) in enumerate(pattern_implicants(patterns.pre[m][unstable])):
                j = unstable[j]
                fixed = np.flatnonzero(code < 2)
                # Hamming distance of the binaries from the face, as an affine expression
                sgn = np.where(code[fixed] == 0, 1.0, -1.0)
                ones = float(np.sum(code[fixed] == 1))
                cols = [z[j]] + [pat_cols[i] for i in fixed]
                if branch == 0:  # z <= distance
                    b.add_row(cols, [1.0, *(-sgn)], LE, ones, name=f"pat[{names[j]},{r}]")
                else:  # z >= 1 - distance
                    b.add_row(cols, [1.0, *sgn], GE, 1.0 - ones, name=f"pat[{names[j]},{r}]")
        pos.append(hp)
        neg.append(hn)
        act.append(z)
        prev = hp
    w, bias = model.weights[-1][0], model.biases[-1][0]
    out_lb = -model.y_mean / model.y_scale if clamp else -np.inf
    out = b.add_var(f"out[{tag.rstrip(',')}]", out_lb, np.inf, cost=output_cost)
    if model.depth == 0:
        raise EmbeddingError("network has no hidden layer")
    nz = np.flatnonzero(np.abs(w) > COEF_EPS)
    b.add_row(list(prev[nz]) + [out], list(w[nz]) + [-1.0], LE, -bias,
              name=f"output[{tag.rstrip(',')}]")
    return EmbeddedBlock(out, pos, neg, act, bounds, model)


# -- surrogate planning model ---------------------------------------------------

@dataclass
class SurrogatePlanningModel:
    problem: MilpProblem
    network: Network
    tree: ScenarioTree
    cost_model: MlpModel
    shed_model: MlpModel
    y_inv: np.ndarray
    y_built: np.ndarray
    y_new: np.ndarray
    cost_blocks: list[EmbeddedBlock]
    shed_blocks: list[EmbeddedBlock]
    node_inputs: dict
    build_time: float = 0.0
    reliability_rows: bool = False

    @property
    def num_variables(self) -> int:
        return self.problem.num_vars

    @property
    def num_constraints(self) -> int:
        return self.problem.num_rows

    @property
    def num_binaries(self) -> int:
        return self.problem.num_binary

    def plan_from(self, x: np.ndarray) -> InvestmentPlan:
        r = lambda idx: np.rint(x[idx]).astype(np.int8)
        return InvestmentPlan(tuple(nd.id for nd in self.tree.nodes),
                              tuple(ln.id for ln in self.network.candidates),
                              r(self.y_inv), r(self.y_built), r(self.y_new))

    def write_lp(self, path) -> None:
        write_lp(self.problem, path)

    def write_bounds_report(self, path) -> None:
        """Per-neuron interval bounds and big-M values as CSV."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["network", "node", "layer", "neuron", "lower", "upper", "big_m",
                        "stable"])
            for name, blocks in (("cost", self.cost_blocks), ("shed", self.shed_blocks)):
                for nd, blk in zip(self.tree.nodes, blocks):
                    bd = blk.bounds
                    for m, (lo, hi, M) in enumerate(zip(bd.lower, bd.upper, bd.big_m)):
                        for j in range(len(lo)):
                            st = "active" if lo[j] >= 0 else "inactive" if hi[j] <= 0 else ""
                            w.writerow([name, nd.id, m, j, repr(float(lo[j])),
                                        repr(float(hi[j])), repr(float(M[j])), st])


def surrogate_variable_count(network: Network, tree: ScenarioTree, cost_model: MlpModel,
                             shed_model: MlpModel) -> dict[str, int]:
    """Closed-form variable counts of the surrogate planning model."""
    S, K = len(tree), len(network.candidates)
    neurons = sum(cost_model.hidden_widths) + sum(shed_model.hidden_widths)
    cont = S * (2 * neurons + 2)
    act = S * neurons
    inv = 3 * K * S
    return {"continuous": cont, "activation_binaries": act, "investment_binaries": inv,
            "total": cont + act + inv}


def node_total_demand(network: Network, tree: ScenarioTree, node_id,
                      features: Mapping[str, float]) -> float:
    """Total energy demand of a node implied by its feature values."""
    nd = tree.node(node_id)
    total = 0.0
    for ld in network.loads:
        fac = float(features.get(f"dfac_{ld.id}", 1.0))
        total += float(np.sum(ld.profile)) * nd.demand_growth * nd.load_multiplier(ld.id) * fac
    return total


def _node_inputs(model: MlpModel, features: Mapping[str, float], ycols: dict, node_id):
    inputs = []
    for name in model.feature_names:
        if name in ycols:
            inputs.append(Var(ycols[name]))
        elif name in features:
            inputs.append(float(features[name]))
        else:
            raise SchemaError(f"node {node_id!r}: no value for model feature {name!r}")
    return inputs


def _node_box(model: MlpModel, inputs, box: str):
    if box == "training":
        return training_box(model)
    lo = np.array([0.0 if isinstance(v, Var) else v for v in inputs])
    hi = np.array([1.0 if isinstance(v, Var) else v for v in inputs])
    if box == "node":
        return lo, hi
    raise ValueError(f"unknown box mode {box!r}; expected 'node' or 'training'")


def build_surrogate_step(network: Network, tree: ScenarioTree, cost_model: MlpModel,
                         shed_model: MlpModel, node_features: Mapping,
                         reliability: bool = False, box: str = "node",
                         bounds: str = "corners",
                         patterns: bool = True) -> SurrogatePlanningModel:
    """Investment binaries plus one cost and one shed network copy per tree node.

    `node_features[node_id]` maps feature names to the node's fixed values;
    built-status features ``y_<line>`` are wired to the node's y_built
    variables. With ``box="node"`` each copy is bounded on its own node's
    values (binaries on [0, 1]); ``box="training"`` uses the training range.
    ``bounds="corners"`` (node box only) replaces interval propagation by the
    exact ranges over all built-status combinations; ``"interval"`` keeps
    plain interval arithmetic. With `patterns` (corner bounds only, at most
    ``PATTERN_LIMIT`` built-status inputs) activation binaries are tied to
    the built-status binaries, see :func:`embed_network`.
    """
    if bounds not in ("corners", "interval"):
        raise ValueError(f"unknown bounds mode {bounds!r}")
    t0 = time.perf_counter()
    ylabels = [f"y_{ln.id}" for ln in network.candidates]
    for m in (cost_model, shed_model):
        unknown = [n for n in m.feature_names if n.startswith("y_") and n not in ylabels]
        if unknown:
            raise SchemaError(f"{m.target} model expects candidate features {unknown}")
    b = ProblemBuilder(name=f"surrogate-{network.name}-{tree.name}")
    y_inv, y_blt, y_new = add_investment_block(b, network, tree)
    cost_blocks, shed_blocks, inputs_used = [], [], {}
    for s, nd in enumerate(tree.nodes):
        if nd.id not in node_features:
            raise SchemaError(f"no feature values for node {nd.id!r}")
        feats = node_features[nd.id]
        ycols = {lab: int(y_blt[s, k]) for k, lab in enumerate(ylabels)}
        w = discount_factor(nd, tree.discount_rate)
        blocks = []
        for model, coef in ((cost_model, w), (shed_model, w * tree.voll)):
            inputs = _node_inputs(model, feats, ycols, nd.id)
            lo, hi = _node_box(model, inputs, box)
            if box == "training":
                fixed = np.array([np.nan if isinstance(v, Var) else v for v in inputs])
                ok = np.isnan(fixed) | ((fixed >= lo) & (fixed <= hi))
                if not np.all(ok):
                    # values outside the training range: widen to keep the bounds valid
                    lo = np.where(np.isnan(fixed), lo, np.minimum(lo, np.nan_to_num(fixed)))
                    hi = np.where(np.isnan(fixed), hi, np.maximum(hi, np.nan_to_num(fixed)))
            is_var = np.array([isinstance(v, Var) for v in inputs])
            cp = None
            if bounds == "corners" and box == "node" and is_var.sum() <= CORNER_LIMIT:
                cp = corner_patterns(model, lo, hi, is_var)
                nb = NeuronBounds([a.min(axis=1) for a in cp.pre],
                                  [a.max(axis=1) for a in cp.pre],
                                  float(cp.out.min()), float(cp.out.max()))
                if not patterns or is_var.sum() > PATTERN_LIMIT:
                    cp = None
            else:
                nb = propagate_bounds(model, lo, hi)
            blk = embed_network(b, model, nb, inputs, tag=f"{model.target}:{nd.id},",
                                output_cost=coef * model.y_scale, patterns=cp)
            b.add_objective_constant(coef * model.y_mean)
            blocks.append(blk)
        cost_blocks.append(blocks[0])
        shed_blocks.append(blocks[1])
        inputs_used[nd.id] = dict(feats)
        if reliability:
            cap = tree.reliability * node_total_demand(network, tree, nd.id, feats)
            sm = shed_model
            b.add_row([blocks[1].output], [1.0], LE, (cap - sm.y_mean) / sm.y_scale,
                      name=f"reliability[{nd.id}]")
    problem = b.build()
    return SurrogatePlanningModel(problem, network, tree, cost_model, shed_model, y_inv, y_blt,
                                  y_new, cost_blocks, shed_blocks, inputs_used,
                                  time.perf_counter() - t0, reliability)


@dataclass
class SurrogateSolution:
    plan: InvestmentPlan | None
    predicted_objective: float
    predicted: dict = field(default_factory=dict)  # node -> (cost $, shed MWh)
    status: str = ""
    milp: MilpSolution | None = None
    solve_time: float = 0.0
    build_time: float = 0.0
    investment_cost: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.plan is not None


def forward_at_plan(model: SurrogatePlanningModel, plan: InvestmentPlan) -> dict:
    """Clamped forward-pass predictions per node for a given plan."""
    out = {}
    for s, nd in enumerate(model.tree.nodes):
        feats = dict(model.node_inputs[nd.id])
        for k, ln in enumerate(model.network.candidates):
            feats[f"y_{ln.id}"] = float(plan.built[s, k])
        vals = []
        for m in (model.cost_model, model.shed_model):
            vals.append(max(forward(m, m.select(feats)), 0.0))
        out[nd.id] = tuple(vals)
    return out


def solve_surrogate_step(model: SurrogatePlanningModel,
                         options: SolverOptions | None = None) -> SurrogateSolution:
    sol = solve_milp(model.problem, options)
    if not sol.has_solution:
        return SurrogateSolution(None, np.inf, {}, sol.status, sol, sol.wall_time,
                                 model.build_time)
    x = sol.x
    plan = model.plan_from(x)
    bad = validate_plan(plan, model.tree)
    if bad:
        raise RuntimeError(f"surrogate returned an inconsistent plan: {bad[0].message}")
    pred = {nd.id: (model.cost_blocks[s].predicted(x), model.shed_blocks[s].predicted(x))
            for s, nd in enumerate(model.tree.nodes)}
    inv = float(sum(model.problem.c[j] * x[j] for j in model.y_new.ravel()))
    return SurrogateSolution(plan, sol.objective, pred, sol.status, sol, sol.wall_time,
                             model.build_time, inv)

"""Training-data generation: every tree node x every candidate configuration x N noise draws.

Dataset CSV layout: one comment line carrying the schema tag and generation
settings, then a header row, then one row per (node, draw, configuration) in
that nesting order. Columns:

    node_id, config_mask, y_<line>..., wfac_<gen>..., sfac_<gen>..., dfac_<load>...,
    tau_<line>..., growth, gmul_<gen>..., lmul_<load>..., target_cost, target_shed,
    infeasible_flag

``gmul_``/``lmul_`` columns exist only for generators / loads that carry a
node multiplier somewhere in the tree, so that features determine targets.
``config_mask`` reads the y bits as a binary number with the first candidate
as the most significant bit, matching the lexicographic configuration order.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .grid.types import SOLAR, WIND, Network, ScenarioTree
from .opf import OpfError, OpfTemplate, Perturbation, operating_context

log = logging.getLogger(__name__)

DATASET_SCHEMA = "steplearn-dataset/1"
MAX_CANDIDATES = 12


class ConfigLimitError(ValueError):
    """Too many candidate lines to enumerate every configuration."""


@dataclass(frozen=True)
class SamplerConfig:
    n_runs: int = 50
    half_range: float = 0.25
    seed: int = 0
    jobs: int = 1
    max_candidates: int = MAX_CANDIDATES

    def __post_init__(self) -> None:
        if self.n_runs < 1:
            raise ValueError("n_runs must be at least 1")
        if self.half_range < 0:
            raise ValueError("half_range must be nonnegative")
        if self.jobs < 1:
            raise ValueError("jobs must be at least 1")


@dataclass
class SampleRow:
    node_id: object
    config_mask: int
    y: tuple
    wfac: tuple
    sfac: tuple
    dfac: tuple
    tau: tuple
    growth: float
    gmul: tuple
    lmul: tuple
    target_cost: float
    target_shed: float
    infeasible: bool


def enumerate_configs(num_candidates: int, cap: int = MAX_CANDIDATES) -> list[tuple[int, ...]]:
    """All 2^k built vectors in lexicographic order."""
    if num_candidates > cap:
        raise ConfigLimitError(
            f"{num_candidates} candidate lines give 2^{num_candidates} configurations; the "
            f"sampler enumerates at most 2^{cap}. Reduce the candidate set or raise "
            f"max_candidates knowingly (cost grows exponentially).")
    return list(itertools.product((0, 1), repeat=num_candidates))


def config_mask(y) -> int:
    m = 0
    for bit in y:
        m = (m << 1) | int(bit)
    return m


def perturbation_from_key(key, network: Network, half_range: float) -> Perturbation:
    """U[1-h, 1+h] factors per renewable generator and per load from a seed-sequence key."""
    rng = np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))
    ren = network.renewables
    u = rng.uniform(-1.0, 1.0, size=len(ren) + len(network.loads))
    fac = 1.0 + half_range * u
    gen = {g.id: float(fac[i]) for i, g in enumerate(ren)}
    load = {ld.id: float(fac[len(ren) + i]) for i, ld in enumerate(network.loads)}
    return Perturbation(gen, load)


def draw_perturbation(seed: int, node_index: int, draw_index: int, network: Network,
                      half_range: float) -> Perturbation:
    """Independent U[1-h, 1+h] factors per renewable generator and per load.

    The stream depends only on (seed, node index, draw index), never on the
    order in which rows are produced.
    """
    return perturbation_from_key((seed, node_index, draw_index), network, half_range)


def multiplier_columns(network: Network, tree: ScenarioTree) -> tuple[list, list]:
    gids = {k for nd in tree.nodes for k in nd.generator_multipliers}
    lids = {k for nd in tree.nodes for k in nd.load_multipliers}
    return ([g.id for g in network.generators if g.id in gids],
            [ld.id for ld in network.loads if ld.id in lids])


def feature_columns(network: Network, tree: ScenarioTree) -> list[str]:
    gm, lm = multiplier_columns(network, tree)
    cols = [f"y_{ln.id}" for ln in network.candidates]
    cols += [f"wfac_{g.id}" for g in network.renewables if g.kind == WIND]
    cols += [f"sfac_{g.id}" for g in network.renewables if g.kind == SOLAR]
    cols += [f"dfac_{ld.id}" for ld in network.loads]
    cols += [f"tau_{ln.id}" for ln in network.candidates]
    cols += ["growth"]
    cols += [f"gmul_{g}" for g in gm] + [f"lmul_{k}" for k in lm]
    return cols


def dataset_columns(network: Network, tree: ScenarioTree) -> list[str]:
    return (["node_id", "config_mask"] + feature_columns(network, tree)
            + ["target_cost", "target_shed", "infeasible_flag"])


def node_features(network: Network, tree: ScenarioTree, node_id,
                  perturbation: Perturbation | None = None) -> dict[str, float]:
    """Non-binary feature values of one node (unperturbed factors are 1)."""
    pert = perturbation or Perturbation()
    nd = tree.node(node_id)
    gm, lm = multiplier_columns(network, tree)
    out = {}
    for g in network.renewables:
        out[f"{'wfac' if g.kind == WIND else 'sfac'}_{g.id}"] = pert.gen(g.id)
    for ld in network.loads:
        out[f"dfac_{ld.id}"] = pert.load(ld.id)
    for ln in network.candidates:
        out[f"tau_{ln.id}"] = float(ln.capacity)
    out["growth"] = float(nd.demand_growth)
    for g in gm:
        out[f"gmul_{g}"] = nd.gen_multiplier(g)
    for k in lm:
        out[f"lmul_{k}"] = nd.load_multiplier(k)
    return out


def _row_values(row: SampleRow) -> list:
    return ([row.node_id, row.config_mask, *row.y, *row.wfac, *row.sfac, *row.dfac, *row.tau,
             row.growth, *row.gmul, *row.lmul, row.target_cost, row.target_shed,
             int(row.infeasible)])


def _node_rows(args) -> tuple[list[SampleRow], int]:
    network, tree, node_index, cfg = args
    nd = tree.nodes[node_index]
    template = OpfTemplate(network, tree.voll)
    configs = enumerate_configs(len(network.candidates), cfg.max_candidates)
    gm, lm = multiplier_columns(network, tree)
    winds = [g for g in network.renewables if g.kind == WIND]
    suns = [g for g in network.renewables if g.kind == SOLAR]
    # reference basis: unperturbed, everything built; every row restarts from it
    ref = template.solve(operating_context(network, tree, nd.id, np.ones(len(configs[-1])))).basis
    rows, failures = [], 0
    for n in range(cfg.n_runs):
        pert = draw_perturbation(cfg.seed, node_index, n, network, cfg.half_range)
        for y in configs:
            ctx = operating_context(network, tree, nd.id, y, pert)
            try:
                res = template.solve(ctx, ref)
            except OpfError as exc:
                log.warning("row skipped: %s", exc)
                failures += 1
                continue
            rows.append(SampleRow(
                nd.id, config_mask(y), tuple(int(v) for v in y),
                tuple(pert.gen(g.id) for g in winds), tuple(pert.gen(g.id) for g in suns),
                tuple(pert.load(ld.id) for ld in network.loads),
                tuple(float(ln.capacity) for ln in network.candidates), float(nd.demand_growth),
                tuple(nd.gen_multiplier(g) for g in gm), tuple(nd.load_multiplier(k) for k in lm),
                max(res.cost, 0.0), max(res.shed, 0.0), not res.solution.feasible))
    return rows, failures


def generate_rows(network: Network, tree: ScenarioTree, config: SamplerConfig,
                  return_failures: bool = False):
    """All sample rows in canonical (node, draw, configuration) order."""
    if not network.candidates:
        enumerate_configs(0)
    tasks = [(network, tree, i, config) for i in range(len(tree))]
    if config.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            parts = list(pool.map(_node_rows, tasks))
    else:
        parts = [_node_rows(t) for t in tasks]
    rows = [r for part, _ in parts for r in part]
    failures = sum(f for _, f in parts)
    return (rows, failures) if return_failures else rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_dataset(rows: list[SampleRow], network: Network, tree: ScenarioTree,
                  config: SamplerConfig, path) -> None:
    meta = {"schema": DATASET_SCHEMA, "network": network.name, "tree": tree.name,
            "n_runs": config.n_runs, "half_range": config.half_range, "seed": config.seed,
            "candidates": [ln.id for ln in network.candidates]}
    buf = io.StringIO()
    buf.write("# " + yaml.safe_dump(meta, default_flow_style=True, width=10_000).strip() + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(dataset_columns(network, tree))
    for r in rows:
        w.writerow([_fmt(v) for v in _row_values(r)])
    Path(path).write_text(buf.getvalue())


@dataclass
class DatasetSummary:
    rows: int
    expected_rows: int
    nodes: int
    configurations: int
    n_runs: int
    failures: int
    shed_rows: int
    shed_fraction: float
    flagged_rows: int
    wall_time: float
    extra: dict = field(default_factory=dict)

    def accounting(self) -> str:
        return (f"N x |S| x 2^|L^C| = {self.n_runs} x {self.nodes} x {self.configurations} "
                f"= {self.expected_rows} problems; {self.rows} rows written, "
                f"{self.failures} failures")


def generate_dataset(network: Network, tree: ScenarioTree, config: SamplerConfig,
                     path=None) -> tuple[list[SampleRow], DatasetSummary]:
    """Sample, optionally write the CSV, and summarise.

    With `path` two sidecars are written: ``<path>.summary.yaml`` (counts only,
    reproducible) and ``<stem>_timing.csv`` (wall-clock time).
    """
    t0 = time.perf_counter()
    rows, failures = generate_rows(network, tree, config, return_failures=True)
    wall = time.perf_counter() - t0
    k = len(network.candidates)
    shed = sum(1 for r in rows if r.target_shed > 1e-9)
    summary = DatasetSummary(
        rows=len(rows), expected_rows=config.n_runs * len(tree) * 2 ** k, nodes=len(tree),
        configurations=2 ** k, n_runs=config.n_runs, failures=failures, shed_rows=shed,
        shed_fraction=shed / len(rows) if rows else 0.0,
        flagged_rows=sum(1 for r in rows if r.infeasible), wall_time=wall)
    if path is not None:
        write_dataset(rows, network, tree, config, path)
        counts = {key: v for key, v in asdict(summary).items() if key != "wall_time"}
        Path(str(path) + ".summary.yaml").write_text(yaml.safe_dump(counts, sort_keys=False))
        path = Path(path)
        path.with_name(path.stem + "_timing.csv").write_text(f"wall_time\n{wall!r}\n")
    return rows, summary


# -- reading ------------------------------------------------------------------

@dataclass
class Dataset:
    """Parsed dataset: feature matrix plus targets and bookkeeping columns."""

    feature_names: list[str]
    X: np.ndarray
    cost: np.ndarray
    shed: np.ndarray
    infeasible: np.ndarray
    node_ids: np.ndarray
    config_masks: np.ndarray
    meta: dict

    def __len__(self) -> int:
        return len(self.cost)

    def target(self, name: str) -> np.ndarray:
        if name == "cost":
            return self.cost
        if name == "shed":
            return self.shed
        raise ValueError(f"unknown target {name!r}; expected 'cost' or 'shed'")

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.feature_names, self.X[idx], self.cost[idx], self.shed[idx],
                       self.infeasible[idx], self.node_ids[idx], self.config_masks[idx],
                       self.meta)

    def training_rows(self, include_infeasible: bool = False) -> "Dataset":
        """Rows used for fitting; flagged rows are dropped unless requested."""
        if include_infeasible:
            return self
        return self.subset(np.flatnonzero(~self.infeasible))


def _parse_id(s: str):
    try:
        return int(s)
    except ValueError:
        return s


def load_dataset(path) -> Dataset:
    text = Path(path).read_text()
    first, _, rest = text.partition("\n")
    if not first.startswith("# "):
        raise ValueError(f"{path}: missing schema comment line")
    meta = yaml.safe_load(first[2:])
    if not isinstance(meta, dict) or meta.get("schema") != DATASET_SCHEMA:
        raise ValueError(f"{path}: unsupported dataset schema {meta!r}")
    reader = csv.reader(io.StringIO(rest))
    header = next(reader)
    body = [r for r in reader if r]
    if not body:
        raise ValueError(f"{path}: dataset has no rows")
    feats = header[2:-3]
    cols = list(zip(*body))
    X = np.array([[float(v) for v in col] for col in cols[2:-3]]).T
    return Dataset(feats, X.reshape(len(body), len(feats)),
                   np.array(cols[-3], dtype=float), np.array(cols[-2], dtype=float),
                   np.array(cols[-1], dtype=int).astype(bool),
                   np.array([_parse_id(v) for v in cols[0]], dtype=object),
                   np.array(cols[1], dtype=int), meta)


def rows_to_dataset(rows: list[SampleRow], network: Network, tree: ScenarioTree) -> Dataset:
    """In-memory equivalent of writing and re-reading the CSV."""
    cols = dataset_columns(network, tree)
    vals = [_row_values(r) for r in rows]
    X = np.array([v[2:-3] for v in vals], dtype=float).reshape(len(vals), len(cols) - 5)
    return Dataset(cols[2:-3], X, np.array([v[-3] for v in vals], dtype=float),
                   np.array([v[-2] for v in vals], dtype=float),
                   np.array([bool(v[-1]) for v in vals]),
                   np.array([v[0] for v in vals], dtype=object),
                   np.array([v[1] for v in vals], dtype=int),
                   {"network": network.name, "tree": tree.name})


# -- audits -------------------------------------------------------------------

def context_from_features(network: Network, tree: ScenarioTree, node_id,
                          features: dict[str, float]):
    """Rebuild the operating context a dataset row was generated from."""
    gen = {}
    for g in network.renewables:
        gen[g.id] = features[f"{'wfac' if g.kind == WIND else 'sfac'}_{g.id}"]
    load = {ld.id: features[f"dfac_{ld.id}"] for ld in network.loads}
    y = [features[f"y_{ln.id}"] for ln in network.candidates]
    nd = tree.node(node_id)
    if abs(features["growth"] - nd.demand_growth) > 1e-12:
        raise ValueError(f"row growth {features['growth']} does not match node {node_id!r}")
    return operating_context(network, tree, node_id, y, Perturbation(gen, load))


def audit_rows(dataset: Dataset, network: Network, tree: ScenarioTree, indices,
               rtol: float = 1e-6) -> list[dict]:
    """Re-solve selected rows from their stored features with a fresh LP; report mismatches."""
    template = OpfTemplate(network, tree.voll)
    bad = []
    for i in indices:
        feats = dict(zip(dataset.feature_names, dataset.X[i]))
        ctx = context_from_features(network, tree, dataset.node_ids[i], feats)
        res = template.solve(ctx)
        for name, got, want in (("cost", res.cost, dataset.cost[i]),
                                ("shed", res.shed, dataset.shed[i])):
            if abs(got - want) > rtol * max(1.0, abs(want)):
                bad.append({"row": int(i), "target": name, "stored": float(want),
                            "resolved": float(got)})
        if (not res.solution.feasible) != bool(dataset.infeasible[i]):
            bad.append({"row": int(i), "target": "flag", "stored": bool(dataset.infeasible[i]),
                        "resolved": not res.solution.feasible})
    return bad

"""Command-line pipeline: sample, train, tune, benchmark, sweep, explain, evaluate-plan.

Every subcommand reads one YAML experiment config. Paths in it are relative
to the config file; dataset, model and report paths are relative to the
output directory. Builtin fixture names (``ieee33``, ``rts24``, ``two_bus``,
``desk7``, ``paths13``) may stand in for network and tree paths.

Reports are CSV. Wall-clock timings go to separate ``*_timing.csv`` files so
that every other output is a pure function of config and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .embed import build_surrogate_step, solve_surrogate_step, surrogate_variable_count
from .explain import shapley_attribute, summarize_attributions, write_summary_csv
from .fixtures import DATA_DIR
from .grid import InvestmentPlan, Network, ScenarioTree, load_network, load_tree
from .grid import check_compatible, validate_plan
from .lpmilp import SolverOptions
from .mlp import TrainConfig, hpo_search, load_model, save_model, train, write_history
from .opf import build_exact_step, evaluate_plan, exact_variable_count, solve_exact_step
from .sampler import SamplerConfig, generate_dataset, load_dataset, node_features
from .sampler import perturbation_from_key

log = logging.getLogger("steplearn")

CONFIG_SCHEMA = "steplearn-experiment/1"
PLAN_SCHEMA = "steplearn-plan/1"
TARGETS = ("cost", "shed")
# seed-sequence tags; sampler keys are (seed, node, draw), so these never collide
TEST_STREAM = 0x7E57
SWEEP_STREAM = 0x5EE9
EXPLAIN_STREAM = 0xE7A1
BUILTIN_NETWORKS = ("ieee33", "rts24", "two_bus")
BUILTIN_TREES = ("desk7", "paths13")


class ConfigError(ValueError):
    """The experiment config is malformed."""


@dataclass
class ExplainSettings:
    target: str = "cost"
    background: int = 10_000
    evaluation: int = 1_000
    permutations: int = 200
    n_background: int = 100


@dataclass
class ExperimentConfig:
    network: str = "ieee33"
    tree: str = "desk7"
    out: str = "out"
    dataset: str = "dataset.csv"
    models: dict = field(default_factory=lambda: {"cost": "cost_model.json",
                                                  "shed": "shed_model.json"})
    seed: int = 0
    jobs: int = 1
    mip_gap: float = 1e-3
    time_limit: float = 1000.0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    training: dict = field(default_factory=dict)  # target -> TrainConfig
    tune_budget: int = 40
    tune_test_fraction: float = 0.1
    kappa_levels: tuple = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25)
    gamma_levels: tuple = (2e-5,)
    instances: int = 5
    surrogate_reliability: bool = False
    explain: ExplainSettings = field(default_factory=ExplainSettings)
    base_dir: Path = field(default_factory=Path.cwd)

    def __post_init__(self) -> None:
        if not self.kappa_levels or not self.gamma_levels:
            raise ConfigError("sweep grids must be non-empty")
        if min(self.kappa_levels) < 0 or min(self.gamma_levels) < 0:
            raise ConfigError("sweep levels must be nonnegative")
        if self.instances < 1:
            raise ConfigError("instances must be at least 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        for t in TARGETS:
            self.training.setdefault(t, TrainConfig.for_target(t, seed=self.seed))

    # -- paths ---------------------------------------------------------------
    @property
    def out_dir(self) -> Path:
        p = Path(self.out)
        return p if p.is_absolute() else self.base_dir / p

    def output(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else self.out_dir / p

    def model_path(self, target: str) -> Path:
        return self.output(self.models[target])

    def load_network(self) -> Network:
        if self.network in BUILTIN_NETWORKS:
            return load_network(DATA_DIR / f"{self.network}.network.yaml")
        return load_network(self._resolve(self.network))

    def load_tree(self) -> ScenarioTree:
        if self.tree in BUILTIN_TREES:
            return load_tree(DATA_DIR / f"{self.tree}.tree.yaml")
        return load_tree(self._resolve(self.tree))

    def _resolve(self, name: str) -> Path:
        p = Path(name)
        p = p if p.is_absolute() else self.base_dir / p
        if not p.exists():
            raise ConfigError(f"path {p} does not exist")
        return p

    def solver_options(self) -> SolverOptions:
        return SolverOptions(mip_gap=self.mip_gap, time_limit=self.time_limit)

    def to_dict(self) -> dict:
        return {
            "schema": CONFIG_SCHEMA, "network": self.network, "tree": self.tree,
            "out": str(self.out), "dataset": self.dataset, "models": dict(self.models),
            "seed": self.seed, "jobs": self.jobs,
            "solver": {"mip_gap": self.mip_gap, "time_limit": self.time_limit},
            "sampler": {"n_runs": self.sampler.n_runs, "half_range": self.sampler.half_range},
            "training": {t: c.to_dict() for t, c in self.training.items()},
            "tune": {"budget": self.tune_budget, "test_fraction": self.tune_test_fraction},
            "sweep": {"kappa": list(self.kappa_levels), "gamma": list(self.gamma_levels)},
            "instances": self.instances, "surrogate_reliability": self.surrogate_reliability,
            "explain": asdict(self.explain),
        }


_TOP_KEYS = {"schema", "network", "tree", "out", "dataset", "models", "seed", "jobs", "solver",
             "sampler", "training", "tune", "sweep", "instances", "surrogate_reliability",
             "explain"}


def config_from_dict(doc: dict, base_dir: Path | None = None, seed: int | None = None,
                     out: str | None = None, jobs: int | None = None) -> ExperimentConfig:
    """Build a config; `seed`, `out` and `jobs` override the document's values."""
    if not isinstance(doc, dict):
        raise ConfigError("experiment config must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    if doc.get("schema", CONFIG_SCHEMA) != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported config schema {doc.get('schema')!r}")
    seed = int(doc.get("seed", 0) if seed is None else seed)
    jobs = int(doc.get("jobs", 1) if jobs is None else jobs)
    try:
        solver = doc.get("solver", {}) or {}
        smp = doc.get("sampler", {}) or {}
        sampler = SamplerConfig(n_runs=int(smp.get("n_runs", 50)),
                                half_range=float(smp.get("half_range", 0.25)), seed=seed,
                                jobs=jobs)
        training = {}
        for t, kw in (doc.get("training", {}) or {}).items():
            if t not in TARGETS:
                raise ConfigError(f"unknown training target {t!r}")
            kw = dict(kw or {})
            kw.setdefault("seed", seed)
            training[t] = TrainConfig.for_target(t, **kw)
        tune = doc.get("tune", {}) or {}
        sweep = doc.get("sweep", {}) or {}
        models = {"cost": "cost_model.json", "shed": "shed_model.json"}
        models.update(doc.get("models", {}) or {})
        kw = dict(
            network=str(doc.get("network", "ieee33")), tree=str(doc.get("tree", "desk7")),
            out=str(doc.get("out", "out") if out is None else out),
            dataset=str(doc.get("dataset", "dataset.csv")), models=models, seed=seed, jobs=jobs,
            mip_gap=float(solver.get("mip_gap", 1e-3)),
            time_limit=float(solver.get("time_limit", 1000.0)), sampler=sampler,
            training=training, tune_budget=int(tune.get("budget", 40)),
            tune_test_fraction=float(tune.get("test_fraction", 0.1)),
            kappa_levels=tuple(float(v) for v in sweep.get("kappa", (0.0, 0.25, 0.5, 0.75,
                                                                      1.0, 1.25))),
            gamma_levels=tuple(float(v) for v in sweep.get("gamma", (2e-5,))),
            instances=int(doc.get("instances", 5)),
            surrogate_reliability=bool(doc.get("surrogate_reliability", False)),
            explain=ExplainSettings(**(doc.get("explain", {}) or {})),
            base_dir=Path(base_dir) if base_dir is not None else Path.cwd())
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(**kw)


def load_config(path, seed: int | None = None, out: str | None = None,
                jobs: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(doc or {}, path.parent, seed, out, jobs)


# -- plans ---------------------------------------------------------------------

def plan_label(plan: InvestmentPlan | None) -> str:
    """Compact 'node:line' list of new investments, '-' for none."""
    if plan is None:
        return "none"
    items = [f"{plan.node_ids[i]}:{plan.line_ids[k]}" for i, k in zip(*np.nonzero(plan.new))]
    return ";".join(items) or "-"


def save_plan(plan: InvestmentPlan, path) -> None:
    new = {}
    for i, k in zip(*np.nonzero(plan.new)):
        new.setdefault(plan.node_ids[i], []).append(plan.line_ids[k])
    doc = {"schema": PLAN_SCHEMA, "invest": new}
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False))


def load_plan(path, network: Network, tree: ScenarioTree) -> InvestmentPlan:
    doc = yaml.safe_load(Path(path).read_text()) or {}
    if doc.get("schema", PLAN_SCHEMA) != PLAN_SCHEMA:
        raise ConfigError(f"{path}: unsupported plan schema {doc.get('schema')!r}")
    lines = [ln.id for ln in network.candidates]
    new = np.zeros((len(tree), len(lines)), dtype=np.int8)
    for node, ids in (doc.get("invest") or {}).items():
        if node not in tree.index:
            raise ConfigError(f"{path}: unknown node {node!r}")
        for lid in ids or []:
            if lid not in lines:
                raise ConfigError(f"{path}: {lid!r} is not a candidate line")
            new[tree.index[node], lines.index(lid)] = 1
    plan = InvestmentPlan.from_new(tree, lines, new)
    bad = validate_plan(plan, tree)
    if bad:
        raise ConfigError(f"{path}: {bad[0].message}")
    return plan


# -- instances -----------------------------------------------------------------

def instance_perturbations(network: Network, tree: ScenarioTree, key, half_range: float) -> dict:
    """Fresh per-node noise for one evaluation instance (key is a seed-sequence prefix)."""
    return {nd.id: perturbation_from_key((*key, s), network, half_range)
            for s, nd in enumerate(tree.nodes)}


def _gap_pct(true_cost: float, exact: float) -> float:
    if not np.isfinite(exact):
        return float("nan")
    if not np.isfinite(true_cost):
        return float("inf")
    return 100.0 * (true_cost - exact) / max(abs(exact), 1e-12)


def run_instance(network: Network, tree: ScenarioTree, cost_model, shed_model, perturbations,
                 options: SolverOptions, reliability: bool = False,
                 warm_start: bool = True) -> tuple[dict, dict]:
    """Exact, surrogate and warm-started exact solves of one instance.

    Returns (results, timings); results hold no wall-clock values.
    """
    feats = {nd.id: node_features(network, tree, nd.id, perturbations.get(nd.id))
             for nd in tree.nodes}
    exact_model = build_exact_step(network, tree, perturbations)
    ex = solve_exact_step(network, tree, options, model=exact_model)
    sm = build_surrogate_step(network, tree, cost_model, shed_model, feats,
                              reliability=reliability)
    su = solve_surrogate_step(sm, options)
    res = {"exact_status": ex.status, "exact_objective": ex.total_cost,
           "exact_plan": plan_label(ex.plan), "surrogate_status": su.status,
           "surrogate_predicted": su.predicted_objective, "surrogate_plan": plan_label(su.plan),
           "plan_match": int(ex.plan is not None and su.plan is not None
                             and np.array_equal(ex.plan.new, su.plan.new)),
           "true_cost": float("nan"), "true_status": "", "gap_pct": float("nan"),
           "warm_status": "", "warm_objective": float("nan"),
           "exact_nodes": ex.milp.node_count, "surrogate_nodes": su.milp.node_count
           if su.milp is not None else 0}
    tm = {"exact_solve": ex.solve_time, "exact_total": ex.solve_time + exact_model.build_time,
          "surrogate_solve": su.solve_time, "surrogate_total": su.solve_time + su.build_time,
          "warm_solve": float("nan"), "warm_total": float("nan")}
    if su.plan is not None:
        ev = evaluate_plan(exact_model, su.plan, options)
        res["true_status"] = ev.status
        res["true_cost"] = ev.total_cost if ev.feasible else float("inf")
        res["gap_pct"] = _gap_pct(res["true_cost"], ex.total_cost)
        if warm_start and ev.feasible:
            ws = solve_exact_step(network, tree, options, warm_start=su.plan, model=exact_model)
            res["warm_status"] = ws.status
            res["warm_objective"] = ws.total_cost
            tm["warm_solve"] = ws.solve_time
            tm["warm_total"] = ws.solve_time + exact_model.build_time + tm["surrogate_total"]
    res["_exact_plan"] = ex.plan
    res["_surrogate_plan"] = su.plan
    return res, tm


def _run_instance_task(args):
    cfg, key, half_range, gamma = args
    network, tree = cfg.load_network(), cfg.load_tree()
    if gamma is not None:
        tree = replace(tree, reliability=gamma)
    models = [load_model(cfg.model_path(t)) for t in TARGETS]
    pert = instance_perturbations(network, tree, key, half_range)
    try:
        return run_instance(network, tree, *models, pert, cfg.solver_options(),
                            reliability=cfg.surrogate_reliability)
    except Exception as exc:  # recorded per instance; the run continues
        log.exception("instance %s failed", key)
        return {"error": f"{type(exc).__name__}: {exc}"}, {}


def _map(fn, tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r.get(h, "")) for h in header])


# -- subcommands -----------------------------------------------------------------

def cmd_sample(cfg: ExperimentConfig) -> int:
    network, tree = cfg.load_network(), cfg.load_tree()
    check_compatible(network, tree)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.output(cfg.dataset)
    _, summary = generate_dataset(network, tree, cfg.sampler, path)
    print(summary.accounting())
    print(f"shed rows {summary.shed_rows} ({100 * summary.shed_fraction:.1f}%), "
          f"flagged rows {summary.flagged_rows}; wrote {path}")
    return 0 if summary.failures == 0 else 1


def _targets(arg: str) -> tuple[str, ...]:
    return TARGETS if arg == "both" else (arg,)


def cmd_train(cfg: ExperimentConfig, target: str = "both") -> int:
    data = load_dataset(cfg.output(cfg.dataset))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    for t in _targets(target):
        res = train(data, cfg.training[t], t)
        save_model(res.model, cfg.model_path(t))
        write_history(res.history, cfg.output(f"loss_{t}.csv"))
        md = res.model.metadata
        metrics = {k: md[k] for k in ("best_epoch", "epochs_run", "val_loss", "val_r2", "val_mae",
                                      "n_train", "n_val")}
        cfg.output(f"train_{t}.json").write_text(json.dumps(metrics, indent=1, sort_keys=True))
        print(f"{t}: best epoch {md['best_epoch']}, val R2 {md['val_r2']:.6f}, "
              f"val MAE {md['val_mae']:.6g}")
    return 0


def cmd_tune(cfg: ExperimentConfig, target: str = "both", budget: int | None = None) -> int:
    data = load_dataset(cfg.output(cfg.dataset))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    budget = cfg.tune_budget if budget is None else budget
    for t in _targets(target):
        res = hpo_search(data, t, budget, cfg.seed, cfg.training[t], cfg.tune_test_fraction,
                         cfg.jobs)
        save_model(res.model, cfg.model_path(t))
        board = res.leaderboard()
        write_rows(cfg.output(f"tune_{t}.csv"), list(board[0]), board)
        metrics = {"val_loss": res.val_loss, "test_loss": res.test_loss, "test_r2": res.test_r2,
                   "best": res.best_config.to_dict()}
        cfg.output(f"tune_{t}.json").write_text(json.dumps(metrics, indent=1, sort_keys=True))
        print(f"{t}: val loss {res.val_loss:.6g}, test loss {res.test_loss:.6g}, "
              f"test R2 {res.test_r2:.6f}")
    return 0


BENCH_FIELDS = ["instance", "exact_status", "exact_objective", "exact_plan", "exact_nodes",
                "surrogate_status", "surrogate_predicted", "surrogate_plan", "surrogate_nodes",
                "true_status", "true_cost", "gap_pct", "plan_match", "warm_status",
                "warm_objective", "error"]
TIMING_FIELDS = ["exact_solve", "exact_total", "surrogate_solve", "surrogate_total",
                 "warm_solve", "warm_total", "solve_speedup", "total_speedup"]


def _speedups(tm: dict) -> dict:
    tm = dict(tm)
    if tm.get("surrogate_solve"):
        tm["solve_speedup"] = tm["exact_solve"] / tm["surrogate_solve"]
        tm["total_speedup"] = tm["exact_total"] / tm["surrogate_total"]
    return tm


def model_size_rows(network: Network, tree: ScenarioTree, cost_model, shed_model,
                    options_features: dict | None = None) -> list[dict]:
    """Variable / constraint counts of both formulations next to their closed forms."""
    feats = options_features or {nd.id: node_features(network, tree, nd.id)
                                 for nd in tree.nodes}
    ex = build_exact_step(network, tree)
    su = build_surrogate_step(network, tree, cost_model, shed_model, feats)
    closed = surrogate_variable_count(network, tree, cost_model, shed_model)
    return [
        {"model": "exact", "variables": ex.num_variables, "constraints": ex.num_constraints,
         "binaries": ex.problem.num_binary,
         "closed_form_variables": exact_variable_count(network, tree)},
        {"model": "surrogate", "variables": su.num_variables, "constraints": su.num_constraints,
         "binaries": su.num_binaries, "closed_form_variables": closed["total"]},
        {"model": "ratio_exact_over_surrogate",
         "variables": ex.num_variables / su.num_variables,
         "constraints": ex.num_constraints / su.num_constraints,
         "binaries": ex.problem.num_binary / su.num_binaries, "closed_form_variables": ""},
    ]


def cmd_benchmark(cfg: ExperimentConfig) -> int:
    network, tree = cfg.load_network(), cfg.load_tree()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(cfg, (cfg.seed, TEST_STREAM, i), cfg.sampler.half_range, None)
             for i in range(cfg.instances)]
    out = _map(_run_instance_task, tasks, cfg.jobs)
    rows, timing, failed = [], [], 0
    lines = [ln.id for ln in network.candidates]
    heat = np.zeros((len(lines), len(tree), 3), dtype=int)  # exact, surrogate, both
    for i, (res, tm) in enumerate(out):
        failed += "error" in res
        rows.append({"instance": i, **res})
        timing.append({"instance": i, **_speedups(tm)})
        ep, sp = res.get("_exact_plan"), res.get("_surrogate_plan")
        if ep is not None and sp is not None:
            heat[:, :, 0] += ep.new.T
            heat[:, :, 1] += sp.new.T
            heat[:, :, 2] += (ep.new & sp.new).T
    write_rows(cfg.output("benchmark.csv"), BENCH_FIELDS, rows)
    write_rows(cfg.output("benchmark_timing.csv"), ["instance", *TIMING_FIELDS], timing)
    heat_rows = [{"line": lines[k], "node": nd.id, "exact_invest": heat[k, s, 0],
                  "surrogate_invest": heat[k, s, 1], "both_invest": heat[k, s, 2],
                  "instances": cfg.instances}
                 for k in range(len(lines)) for s, nd in enumerate(tree.nodes)]
    write_rows(cfg.output("plan_heatmap.csv"), ["line", "node", "exact_invest",
                                                "surrogate_invest", "both_invest", "instances"],
               heat_rows)
    cost_model, shed_model = (load_model(cfg.model_path(t)) for t in TARGETS)
    sizes = model_size_rows(network, tree, cost_model, shed_model)
    write_rows(cfg.output("model_sizes.csv"), ["model", "variables", "constraints", "binaries",
                                               "closed_form_variables"], sizes)
    ok = [t for t in timing if "solve_speedup" in t]
    for r, t in zip(rows, timing):
        if "error" in r:
            print(f"instance {r['instance']}: FAILED {r['error']}")
            continue
        print(f"instance {r['instance']}: exact {r['exact_objective']:.2f} [{r['exact_plan']}] "
              f"{t['exact_solve']:.2f}s | surrogate [{r['surrogate_plan']}] "
              f"{t['surrogate_solve']:.2f}s | gap {r['gap_pct']:.3f}%")
    if ok:
        print(f"mean solve speedup {np.mean([t['solve_speedup'] for t in ok]):.2f}x, "
              f"mean total speedup {np.mean([t['total_speedup'] for t in ok]):.2f}x")
    print(f"model sizes: exact {sizes[0]['variables']} vars / {sizes[0]['constraints']} rows, "
          f"surrogate {sizes[1]['variables']} vars / {sizes[1]['constraints']} rows")
    return 0 if failed == 0 else 1


SWEEP_FIELDS = ["kappa", "gamma", "half_range", "exact_status", "exact_objective", "exact_plan",
                "surrogate_plan", "plan_match", "true_status", "true_cost", "gap_pct", "error"]


def cmd_sweep(cfg: ExperimentConfig) -> int:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    tasks, labels = [], []
    for a, kappa in enumerate(cfg.kappa_levels):
        for g, gamma in enumerate(cfg.gamma_levels):
            tasks.append((cfg, (cfg.seed, SWEEP_STREAM, a, g),
                          kappa * cfg.sampler.half_range, gamma))
            labels.append((kappa, gamma))
    out = _map(_run_instance_task, [(c, k, h, gm) for c, k, h, gm in tasks], cfg.jobs)
    rows, timing, failed = [], [], 0
    for (kappa, gamma), (_, _, h, _), (res, tm) in zip(labels, tasks, out):
        failed += "error" in res
        rows.append({"kappa": kappa, "gamma": gamma, "half_range": h, **res})
        timing.append({"kappa": kappa, "gamma": gamma, **_speedups(tm)})
    write_rows(cfg.output("sweep.csv"), SWEEP_FIELDS, rows)
    write_rows(cfg.output("sweep_timing.csv"), ["kappa", "gamma", *TIMING_FIELDS], timing)
    for r in rows:
        if "error" in r:
            print(f"kappa {r['kappa']:g} gamma {r['gamma']:g}: FAILED {r['error']}")
        else:
            print(f"kappa {r['kappa']:g} gamma {r['gamma']:g}: exact {r['exact_status']} "
                  f"[{r['exact_plan']}] surrogate [{r['surrogate_plan']}] "
                  f"match {r['plan_match']}")
    return 0 if failed == 0 else 1


def cmd_explain(cfg: ExperimentConfig, target: str | None = None) -> int:
    settings = cfg.explain
    targets = _targets(target or settings.target)
    data = load_dataset(cfg.output(cfg.dataset))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    for t in targets:
        model = load_model(cfg.model_path(t))
        rows = data.training_rows(bool(model.metadata.get("include_infeasible", False)))
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, EXPLAIN_STREAM]))
        bg = rng.choice(len(rows), size=min(settings.background, len(rows)), replace=False)
        ev = rng.choice(len(rows), size=min(settings.evaluation, len(rows)), replace=False)
        rep = shapley_attribute(model, rows.X[np.sort(bg)], rows.X[np.sort(ev)],
                                permutations=settings.permutations, seed=cfg.seed,
                                n_background=settings.n_background,
                                feature_names=rows.feature_names)
        rep.write_csv(cfg.output(f"shap_{t}.csv"))
        summary = summarize_attributions(rep)
        write_summary_csv(summary, cfg.output(f"shap_summary_{t}.csv"))
        ok = rep.efficiency_ok()
        print(f"{t}: efficiency within 3 SE on {int(ok.sum())}/{len(ok)} points; top features "
              + ", ".join(f"{r['feature']} ({r['share_pct']:.1f}%)" for r in summary[:5]))
    return 0


def cmd_evaluate_plan(cfg: ExperimentConfig, plan_path) -> int:
    network, tree = cfg.load_network(), cfg.load_tree()
    plan = load_plan(plan_path, network, tree)
    model = build_exact_step(network, tree)
    ev = evaluate_plan(model, plan, cfg.solver_options())
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    row = {"plan": plan_label(plan), "status": ev.status, "total_cost": ev.total_cost,
           "investment_cost": ev.investment_cost, "operational_cost": ev.operational_cost}
    write_rows(cfg.output("evaluate_plan.csv"), list(row), [row])
    print(f"plan [{row['plan']}]: {ev.status}, total {ev.total_cost:.4f} "
          f"(investment {ev.investment_cost:.4f}, operations {ev.operational_cost:.4f})")
    return 0 if ev.feasible else 1


# -- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="steplearn", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", type=Path, help="experiment config (YAML)")
    common.add_argument("--seed", type=int, default=None, help="override the master seed")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("--jobs", type=int, default=None, help="worker processes")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("sample", parents=[common], help="generate the training dataset")
    for name in ("train", "tune"):
        p = sub.add_parser(name, parents=[common],
                           help="fit surrogates" if name == "train" else "random search")
        p.add_argument("--target", choices=("cost", "shed", "both"), default="both")
        if name == "tune":
            p.add_argument("--budget", type=int, default=None)
    sub.add_parser("benchmark", parents=[common], help="exact vs surrogate on test instances")
    sub.add_parser("sweep", parents=[common], help="noise-level / reliability sweep")
    p = sub.add_parser("explain", parents=[common], help="Shapley attributions")
    p.add_argument("--target", choices=("cost", "shed", "both"), default=None)
    p = sub.add_parser("evaluate-plan", parents=[common], help="true cost of a plan file")
    p.add_argument("plan", type=Path)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed, args.out, args.jobs)
    except (ConfigError, OSError) as exc:
        print(f"steplearn: {exc}", file=sys.stderr)
        return 2
    t0 = time.perf_counter()
    try:
        if args.command == "sample":
            code = cmd_sample(cfg)
        elif args.command == "train":
            code = cmd_train(cfg, args.target)
        elif args.command == "tune":
            code = cmd_tune(cfg, args.target, args.budget)
        elif args.command == "benchmark":
            code = cmd_benchmark(cfg)
        elif args.command == "sweep":
            code = cmd_sweep(cfg)
        elif args.command == "explain":
            code = cmd_explain(cfg, args.target)
        else:
            code = cmd_evaluate_plan(cfg, args.plan)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"steplearn {args.command}: {exc}", file=sys.stderr)
        return 1
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())

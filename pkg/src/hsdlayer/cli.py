"""
Command-line entry point: ``hsdlayer {solve,grad-check,gen,train,eval,bench}``.

Every command that writes files also writes ``manifest.json`` next to them
with the resolved configuration, the master seed and a SHA-256 over the
inputs.  ``bench --manifest`` reruns a benchmark from such a file.

Exit codes: 0 success, 1 a check failed, 2 invalid input or configuration,
3 the LP layer reported an error.
"""

import argparse
import hashlib
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields, replace
from inspect import signature

import numpy as np

from . import __version__
from .errors import LPError
from .grad import (GradConfig, jacobian, BackwardContext, log_barrier_jacobian,
                   solve_barrier, solve_regularized_qp, dxdc_kkt_squared)
from .layer import prepare, solve_problem
from .lp import GeneralProblem, StandardFormLP, presolve
from .predictor import load_checkpoint, save_checkpoint
from .problems import GENERATORS, load_dataset, save_dataset
from .solver import SolverConfig, solve
from .train import METHODS, TrainConfig, evaluate, train

BENCH_COLUMNS = ("method", "seeds", "mse_mean", "mse_std", "regret_mean", "regret_std")


class ConfigError(ValueError):
    """Invalid command-line or configuration input (exit code 2)."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        super().__init__("; ".join(problems))
        self.problems = list(problems)


# ------------------------------------------------------------------ helpers

def sha256_of(paths=(), payload=None):
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            h.update(fh.read())
    if payload is not None:
        h.update(json.dumps(payload, sort_keys=True).encode())
    return h.hexdigest()


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=False)
        fh.write("\n")


def write_manifest(out_dir, subcommand, config, seed, inputs, outputs):
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "config": config,
        "seed": seed,
        "input_sha256": sha256_of(inputs, config),
        "inputs": [str(p) for p in inputs],
        "outputs": sorted(str(o) for o in outputs),
    }
    path = os.path.join(out_dir, "manifest.json")
    write_json(path, manifest)
    return path


def load_json(path, what="file"):
    if not os.path.exists(path):
        raise ConfigError(f"{what} not found: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path} is not valid JSON: {exc}") from None


def _build(cls, d, where):
    """Instantiate a frozen config dataclass, collecting every problem."""
    names = {f.name for f in fields(cls)}
    problems = [f"{where}: unknown option {k!r}" for k in d if k not in names]
    if problems:
        raise ConfigError(problems)
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _overrides(args, mapping):
    return {key: getattr(args, attr) for attr, key in mapping.items()
            if getattr(args, attr, None) is not None}


SOLVER_FLAGS = {"lambda_cutoff": "lambda_cutoff", "max_iter": "max_iter",
                "gamma": "gamma", "damping": "damping"}


def _solver_config(args, base=None):
    d = dict(base or {})
    d.update(_overrides(args, SOLVER_FLAGS))
    if getattr(args, "predictor_corrector", False):
        d["predictor_corrector"] = True
    return _build(SolverConfig, d, "solver")


def _fmt_float(v):
    return None if v is None or not np.isfinite(v) else float(v)


# -------------------------------------------------------------------- solve

def cmd_solve(args):
    problem = GeneralProblem.from_dict(load_json(args.problem, "problem"))
    cfg = _solver_config(args)
    out = solve_problem(problem, cfg)
    sol = out.solution
    report = {
        "status": "optimal",
        "objective": out.objective,
        "x": out.x.tolist(),
        "iterations": sol.iterations,
        "center_iterations": sol.center_iterations,
        "lambda": sol.lam,
        "residuals": sol.residuals,
        "damping_used": sol.damping_used,
    }
    _emit(args, report)
    return 0


def _emit(args, report):
    text = json.dumps(report, indent=1)
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)


# --------------------------------------------------------------- grad-check

def toy_lp(seed=0, k=6, p=3):
    """Random bounded, strictly feasible standard-form LP."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((p, k))
    b = A @ rng.uniform(0.1, 2.0, k)
    c = A.T @ rng.standard_normal(p) + rng.uniform(0.1, 2.0, k)
    return StandardFormLP(c=c, A=A, b=b)


def finite_difference(fn, c, step):
    cols = []
    for j in range(c.size):
        e = np.zeros(c.size)
        e[j] = step
        cols.append((fn(c + e) - fn(c - e)) / (2 * step))
    return np.array(cols).T


def _cosines(J, F, floor=1e-8):
    out = []
    for j in range(J.shape[1]):
        a, b = J[:, j], F[:, j]
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na < floor and nb < floor:
            out.append(1.0)
        elif na < floor or nb < floor:
            out.append(0.0)
        else:
            out.append(float(a @ b / (na * nb)))
    return np.array(out)


def grad_check(lp, formulation, cutoff=0.1, damping=0.0, lambda_sq=1.0, step=1e-4):
    """Analytic Jacobian against central differences of the matching forward map.

    ``hsd`` variants differentiate the early-stopped solver; ``kkt-log``
    the exact barrier solution at the terminal ``lam``; ``kkt-sq`` the
    regularised QP solution.
    """
    lp, _ = presolve(lp)
    gcfg = GradConfig(formulation=formulation, damping=damping, lambda_sq=lambda_sq)
    scfg = SolverConfig(lambda_cutoff=cutoff, damping=max(damping, 1e-6))
    if formulation in ("hsd", "hsd-literal"):
        sol = solve(lp, scfg)
        J = jacobian(BackwardContext(lp, sol.point, damping), gcfg).dxdc
        F = finite_difference(lambda c: solve(lp.with_cost(c), scfg).x, lp.c, step)
    elif formulation == "kkt-log":
        lam = solve(lp, scfg).lam
        x, _, _ = solve_barrier(lp, lam)
        J = log_barrier_jacobian(lp.A, x, lam).dxdc
        F = finite_difference(lambda c: solve_barrier(lp.with_cost(c), lam)[0], lp.c, step)
    else:
        x, _ = solve_regularized_qp(lp, lambda_sq)
        J = dxdc_kkt_squared(lp, lambda_sq, x).dxdc
        F = finite_difference(lambda c: solve_regularized_qp(lp.with_cost(c), lambda_sq)[0],
                              lp.c, step)
    cos = _cosines(J, F)
    scale = max(np.max(np.abs(F)), 1e-6)
    return {
        "formulation": formulation,
        "k": lp.k,
        "cosine_min": float(cos.min()),
        "fraction_cosine_ge_0.99": float(np.mean(cos >= 0.99)),
        "max_abs_error": float(np.max(np.abs(J - F))),
        "relative_error": float(np.max(np.abs(J - F)) / scale),
        "cosines": cos.tolist(),
    }


def cmd_grad_check(args):
    if args.problem:
        problem = GeneralProblem.from_dict(load_json(args.problem, "problem"))
        lp, _ = prepare(problem)
        lp = lp.with_cost(lp.embed_cost(problem.c))
    else:
        lp = toy_lp(args.seed)
    report = grad_check(lp, args.formulation, args.lambda_cutoff, args.damping,
                        args.lambda_sq, args.step)
    report["status"] = "pass" if report["fraction_cosine_ge_0.99"] >= 0.9 else "fail"
    _emit(args, report)
    return 0 if report["status"] == "pass" else 1


# ---------------------------------------------------------------------- gen

GEN_FLAGS = {
    "shortestpath": ("n_instances", "graph", "n_nodes", "n_edges", "rows", "cols",
                     "n_features", "noise", "hidden", "spread"),
    "knapsack": ("n_instances", "n_items", "n_features", "noise", "nonlinearity",
                 "budget_fraction"),
    "scheduling": ("n_instances", "n_tasks", "n_machines", "n_slots", "n_features", "noise"),
}


def cmd_gen(args):
    kwargs = {k: getattr(args, k) for k in GEN_FLAGS[args.problem]
              if getattr(args, k, None) is not None}
    kwargs["seed"] = args.seed
    dataset, task = GENERATORS[args.problem](**kwargs)
    out = args.out
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    save_dataset(dataset, task, out)
    config = {"problem": args.problem, **kwargs}
    write_manifest(os.path.dirname(os.path.abspath(out)), "gen", config, args.seed, [],
                   [out, out + ".spec.json"])
    print(json.dumps({"dataset": out, "instances": len(dataset), "problem": args.problem}))
    return 0


# -------------------------------------------------------------------- train

TRAIN_FLAGS = {"method": "method", "epochs": "epochs", "lr": "lr", "batch": "batch_size",
               "seed": "seed", "hidden": "hidden", "optimizer": "optimizer",
               "weight_decay": "weight_decay"}


def train_config(args, base=None):
    base = dict(base or {})
    solver = dict(base.pop("solver", {}) or {})
    grad = dict(base.pop("grad", {}) or {})
    base.update(_overrides(args, TRAIN_FLAGS))
    solver.update(_overrides(args, {"lambda_cutoff": "lambda_cutoff"}))
    grad.update(_overrides(args, {"damping": "damping", "formulation": "formulation"}))
    problems = []
    try:
        solver_cfg = _build(SolverConfig, solver, "solver")
    except ConfigError as exc:
        problems += exc.problems
    try:
        grad_cfg = _build(GradConfig, grad, "grad")
    except ConfigError as exc:
        problems += exc.problems
    if problems:
        raise ConfigError(problems)
    return _build(TrainConfig, {**base, "solver": solver_cfg, "grad": grad_cfg}, "train")


def _load_data(path):
    if not os.path.exists(path):
        raise ConfigError(f"dataset not found: {path}")
    try:
        return load_dataset(path)
    except FileNotFoundError:
        raise ConfigError(f"dataset spec not found: {path}.spec.json") from None


def cmd_train(args):
    base = load_json(args.config, "config") if args.config else {}
    cfg = train_config(args, base)
    dataset, task = _load_data(args.dataset)
    n_val = int(round(args.val_fraction * len(dataset)))
    if len(dataset) - n_val < 1:
        raise ConfigError("validation fraction leaves no training instances")
    tr, va = dataset.split([len(dataset) - n_val, n_val])
    select = None
    if n_val and args.select:
        select = "val_mse" if cfg.method == "two-stage" else "val_regret"
    model, record = train(tr, task, cfg, val=va if n_val else None, select=select)
    os.makedirs(args.out_dir, exist_ok=True)
    ckpt = os.path.join(args.out_dir, "model.json")
    curve = os.path.join(args.out_dir, "record.csv")
    save_checkpoint(ckpt, model, extra={"manifest": "manifest.json",
                                        "train_config": cfg.to_dict()})
    record.to_csv(curve)
    write_manifest(args.out_dir, "train", {"train": cfg.to_dict(),
                                           "val_fraction": args.val_fraction,
                                           "select": select},
                   cfg.seed, [args.dataset, args.dataset + ".spec.json"], [ckpt, curve])
    last = record.rows[-1]
    print(json.dumps({"checkpoint": ckpt, "record": curve, "best_epoch": record.best_epoch,
                      "final": {k: _fmt_float(v) if isinstance(v, float) else v
                                for k, v in last.items()}}))
    return 0


# --------------------------------------------------------------------- eval

def cmd_eval(args):
    if not os.path.exists(args.checkpoint):
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    model, _ = load_checkpoint(args.checkpoint)
    dataset, task = _load_data(args.dataset)
    m = evaluate(model, dataset, task)
    report = {"mse": m["mse"], "regret": m["regret"], "n": m["n"], "excluded": m["excluded"]}
    _emit(args, report)
    return 0


# -------------------------------------------------------------------- bench

def validate_bench(cfg):
    problems = []
    for key in ("dataset", "methods", "split"):
        if key not in cfg:
            problems.append(f"bench config is missing {key!r}")
    if problems:
        raise ConfigError(problems)
    known = {"master_seed", "seeds", "dataset", "split", "methods", "train", "workers"}
    problems += [f"unknown bench option {k!r}" for k in cfg if k not in known]
    if int(cfg.get("seeds", 1)) < 1:
        problems.append("seeds must be at least 1")
    ds = dict(cfg["dataset"])
    kind = ds.pop("problem", None)
    if kind not in GENERATORS:
        problems.append(f"dataset.problem must be one of {sorted(GENERATORS)}")
    else:
        allowed = set(signature(GENERATORS[kind]).parameters) - {"seed"}
        problems += [f"dataset: unknown option {k!r}" for k in ds if k not in allowed]
    split = cfg["split"]
    if len(split) != 3 or any(int(s) < 1 for s in split):
        problems.append("split must list three positive counts (train, val, test)")
    elif kind in GENERATORS and sum(split) > ds.get("n_instances", 100):
        problems.append("split counts exceed dataset.n_instances")
    names = set()
    for i, m in enumerate(cfg["methods"]):
        name = m.get("name", m.get("method"))
        if name in names:
            problems.append(f"duplicate method name {name!r}")
        names.add(name)
        if not isinstance(m.get("grid", {}), dict):
            problems.append(f"methods[{i}]: grid must map option names to lists")
            continue
        for point in grid_points(m):
            try:
                _method_config(cfg, m, point)
            except ConfigError as exc:
                problems += [f"methods[{i}]: {p}" for p in exc.problems]
    if problems:
        raise ConfigError(problems)


def _method_config(cfg, m, overrides=None):
    """TrainConfig of a bench method entry with optional grid overrides.

    Override keys are TrainConfig fields, or ``solver.<field>`` /
    ``grad.<field>`` for the nested configs.
    """
    base = json.loads(json.dumps(cfg.get("train", {})))
    m = dict(m)
    m.pop("name", None)
    m.pop("grid", None)
    for key in ("solver", "grad"):
        if key in m:
            base.setdefault(key, {}).update(m.pop(key))
    base.update(m)
    for key, value in (overrides or {}).items():
        if "." in key:
            outer, inner = key.split(".", 1)
            base.setdefault(outer, {})[inner] = value
        else:
            base[key] = value
    return train_config(argparse.Namespace(), base)


def grid_points(m):
    """Cartesian product of a method's ``grid`` entry, keys in sorted order."""
    grid = m.get("grid") or {}
    keys = sorted(grid)
    return [dict(zip(keys, values)) for values in itertools.product(*(grid[k] for k in keys))]


def run_seeds(master_seed, i):
    """Dataset and training seeds of run ``i``."""
    state = np.random.SeedSequence([master_seed, i]).generate_state(2)
    return int(state[0]), int(state[1])


def run_cell(cfg, m, i):
    """Train one (method, seed) cell; returns its row and learning curve.

    With a hyperparameter grid every point is trained and the one with the
    best validation value of the selection column is kept.
    """
    data_seed, train_seed = run_seeds(int(cfg.get("master_seed", 0)), i)
    ds = dict(cfg["dataset"])
    kind = ds.pop("problem")
    dataset, task = GENERATORS[kind](**ds, seed=data_seed)
    tr, va, te = dataset.split([int(s) for s in cfg["split"]])
    name = m.get("name", m.get("method"))
    best, failures_all = None, 0
    try:
        for point in grid_points(m):
            tcfg = replace(_method_config(cfg, m, point), seed=train_seed)
            select = "val_mse" if tcfg.method == "two-stage" else "val_regret"
            model, record = train(tr, task, tcfg, val=va, select=select)
            failures_all += int(sum(record.column("failures")))
            score = record.rows[record.best_epoch][select]
            if best is None or score < best[0]:
                best = (score, point, model, record)
    except Exception as exc:  # a failed cell must not stop the bench
        return {"method": name, "seed_index": i, "status": "failed",
                "error": f"{type(exc).__name__}: {exc}"}, None
    _, point, model, record = best
    metrics = evaluate(model, te, task)
    row = {"method": name, "seed_index": i, "status": "ok",
           "data_seed": data_seed, "train_seed": train_seed, "chosen": point,
           "best_epoch": record.best_epoch, "test_mse": metrics["mse"],
           "test_regret": metrics["regret"], "excluded": metrics["excluded"],
           "failures": int(sum(record.column("failures"))),
           "failures_all": failures_all}
    return row, record


def summarize(cfg, rows):
    table = []
    for m in cfg["methods"]:
        name = m.get("name", m.get("method"))
        ok = [r for r in rows if r["method"] == name and r["status"] == "ok"]
        n = len(ok)
        entry = {"method": name, "seeds": n}
        for key, col in (("test_mse", "mse"), ("test_regret", "regret")):
            vals = np.array([r[key] for r in ok])
            entry[f"{col}_mean"] = float(vals.mean()) if n else "failed"
            entry[f"{col}_std"] = float(vals.std(ddof=1)) if n >= 2 else None
        entry["failed_runs"] = sum(1 for r in rows if r["method"] == name and r["status"] != "ok")
        entry["numerical_failures"] = int(sum(r["failures_all"] for r in ok))
        table.append(entry)
    return table


def bench(cfg, out_dir, workers=None):
    """Run every (method, seed) cell and write report, table and curves."""
    validate_bench(cfg)
    seeds = int(cfg.get("seeds", 1))
    workers = int(workers or cfg.get("workers", 1))
    cells = [(m, i) for m in cfg["methods"] for i in range(seeds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_cell, [cfg] * len(cells),
                                    [m for m, _ in cells], [i for _, i in cells]))
    else:
        results = [run_cell(cfg, m, i) for m, i in cells]

    os.makedirs(os.path.join(out_dir, "curves"), exist_ok=True)
    outputs = []
    rows = []
    for row, record in results:
        rows.append(row)
        if record is not None:
            path = os.path.join(out_dir, "curves", f"{row['method']}_seed{row['seed_index']}.csv")
            record.to_csv(path, include_time=False)
            outputs.append(path)
    table = summarize(cfg, rows)
    report = {"manifest": "manifest.json", "columns": list(BENCH_COLUMNS),
              "table": table, "runs": rows}
    report_path = os.path.join(out_dir, "report.json")
    write_json(report_path, report)
    csv_path = os.path.join(out_dir, "report.csv")
    with open(csv_path, "w") as fh:
        fh.write(",".join(BENCH_COLUMNS) + "\n")
        for e in table:
            fh.write(",".join("" if e[c] is None else str(e[c]) for c in BENCH_COLUMNS) + "\n")
    outputs += [report_path, csv_path]
    write_manifest(out_dir, "bench", cfg, int(cfg.get("master_seed", 0)), [], outputs)
    return report


def cmd_bench(args):
    if args.manifest:
        manifest = load_json(args.manifest, "manifest")
        if manifest.get("subcommand") != "bench":
            raise ConfigError("manifest does not describe a bench run")
        cfg = manifest["config"]
    elif args.config:
        cfg = load_json(args.config, "config")
    else:
        raise ConfigError("bench needs a config file or --manifest")
    if args.master_seed is not None:
        cfg["master_seed"] = args.master_seed
    if args.seeds is not None:
        cfg["seeds"] = args.seeds
    report = bench(cfg, args.out_dir, args.workers)
    print(json.dumps(report["table"], indent=1))
    return 0


# ------------------------------------------------------------------- parser

def build_parser():
    parser = argparse.ArgumentParser(prog="hsdlayer", description=__doc__.splitlines()[1])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def solver_flags(p):
        p.add_argument("--lambda-cutoff", type=float, dest="lambda_cutoff")
        p.add_argument("--max-iter", type=int, dest="max_iter")
        p.add_argument("--gamma", type=float)
        p.add_argument("--damping", type=float)
        p.add_argument("--predictor-corrector", action="store_true", dest="predictor_corrector")

    p = sub.add_parser("solve", help="solve an LP given as JSON")
    p.add_argument("problem")
    p.add_argument("--out")
    solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("grad-check", help="compare analytic and finite-difference Jacobians")
    p.add_argument("--problem", help="LP JSON; default is a seeded random toy LP")
    p.add_argument("--formulation", default="hsd",
                   choices=("hsd", "hsd-literal", "kkt-log", "kkt-sq"))
    p.add_argument("--lambda-cutoff", type=float, default=0.1, dest="lambda_cutoff")
    p.add_argument("--damping", type=float, default=0.0)
    p.add_argument("--lambda-sq", type=float, default=1.0, dest="lambda_sq")
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--problem", required=True, choices=sorted(GENERATORS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="dataset path (JSON lines)")
    p.add_argument("--n-instances", type=int, dest="n_instances")
    p.add_argument("--graph", choices=("grid", "random"))
    for flag, typ in (("n-nodes", int), ("n-edges", int), ("spread", float), ("rows", int),
                      ("cols", int), ("n-features", int), ("noise", float), ("hidden", int), ("n-items", int), ("nonlinearity", float),
                      ("budget-fraction", float), ("n-tasks", int), ("n-machines", int),
                      ("n-slots", int)):
        p.add_argument(f"--{flag}", type=typ, dest=flag.replace("-", "_"))
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a predictor")
    p.add_argument("dataset")
    p.add_argument("--config", help="JSON file with TrainConfig fields")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--lambda-cutoff", type=float, dest="lambda_cutoff")
    p.add_argument("--damping", type=float)
    p.add_argument("--formulation", choices=("hsd", "hsd-literal", "kkt-log", "kkt-sq"))
    p.add_argument("--seed", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--optimizer", choices=("sgd", "adam"))
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--val-fraction", type=float, default=0.2, dest="val_fraction")
    p.add_argument("--no-select", action="store_false", dest="select",
                   help="keep the last epoch instead of the best validation epoch")
    p.add_argument("--out-dir", default="run", dest="out_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="test MSE and exact regret of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="methods x seeds benchmark table")
    p.add_argument("config", nargs="?")
    p.add_argument("--manifest", help="rerun the bench recorded in this manifest")
    p.add_argument("--out-dir", default="bench", dest="out_dir")
    p.add_argument("--master-seed", type=int, dest="master_seed")
    p.add_argument("--seeds", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "invalid input", "problems": exc.problems}), file=sys.stderr)
        return 2
    except LPError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc),
                          "kind": getattr(exc, "kind", None)}), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

"""
Predict-and-optimize training loops and regret evaluation.

Three methods share one loop and differ only in the gradient they send
back to the predicted cost target ``c_hat``:

``two-stage``
    mean squared error against the true target.
``intopt``
    the task loss ``c' x*(c_hat)``, differentiated through the interior
    point layer with ``dL/dx = c`` (negated for maximisation).
``spo``
    the SPO+ subgradient ``x*(c) - x*(2 c_hat - c)``.
"""

import csv
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import InfeasibleError, LPError
from .grad import GradConfig
from .layer import cost_vjp, prepare, solve_problem
from .predictor import MLP, make_optimizer
from .solver import SolverConfig

METHODS = ("two-stage", "intopt", "spo")
RECORD_COLUMNS = ("epoch", "train_mse", "val_mse", "val_regret", "failures",
                  "seconds", "solver_iterations")


class TrainingAborted(RuntimeError):
    """Every instance of an epoch failed in the LP layer."""


@dataclass(frozen=True)
class TrainConfig:
    method: str = "intopt"
    epochs: int = 10
    batch_size: int = 8
    optimizer: str = "adam"
    lr: float = 0.01
    weight_decay: float = 0.0
    hidden: int = 0
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(lambda_cutoff=0.1))
    grad: GradConfig = field(default_factory=GradConfig)
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.hidden < 0:
            raise ValueError("hidden must be nonnegative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "solver" in d and isinstance(d["solver"], dict):
            d["solver"] = SolverConfig(**d["solver"])
        if "grad" in d and isinstance(d["grad"], dict):
            d["grad"] = GradConfig(**d["grad"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ExperimentRecord:
    rows: list = field(default_factory=list)
    best_epoch: int = None

    def add(self, **row):
        self.rows.append({k: row.get(k) for k in RECORD_COLUMNS})

    def column(self, name):
        return [r[name] for r in self.rows]

    def to_csv(self, path, include_time=True):
        cols = [c for c in RECORD_COLUMNS if include_time or c != "seconds"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            writer.writeheader()
            for r in self.rows:
                writer.writerow({k: _fmt(r[k]) for k in cols})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def regret(c, x_hat, x_star, sense="min"):
    """Decision cost of acting on ``x_hat`` instead of ``x_star``."""
    c, x_hat, x_star = (np.asarray(a, dtype=float) for a in (c, x_hat, x_star))
    if not c.shape == x_hat.shape == x_star.shape:
        raise ValueError("regret arguments differ in length")
    d = float(c @ (x_hat - x_star))
    return d if sense == "min" else -d


def make_model(n_features, hidden, seed):
    sizes = [n_features, hidden, 1] if hidden else [n_features, 1]
    return MLP(sizes, seed=seed)


class LayerCache:
    """Prepared standard forms, one per distinct right-hand side."""

    def __init__(self, task):
        self.task = task
        self._lps = {}

    def problem(self, target, b=None):
        return self.task.problem(target, b)

    def solve(self, target, b, cfg):
        key = None if b is None else tuple(np.asarray(b).tolist())
        problem = self.task.problem(target, b)
        if key not in self._lps:
            self._lps[key] = prepare(problem)[0]
        return solve_problem(problem, cfg, lp=self._lps[key])


def _sense_sign(task):
    return 1.0 if task.sense == "min" else -1.0


def grad_two_stage(inst, c_hat):
    return 2.0 * (c_hat - inst.c) / c_hat.size, 0


def grad_intopt(inst, c_hat, task, layers, cfg):
    """``d(s c' x*(c_hat)) / d c_hat`` with ``s = -1`` for maximisation."""
    out = layers.solve(c_hat, inst.b, cfg.solver)
    g_x = _sense_sign(task) * (task.Q @ inst.c)
    g = cost_vjp(out, g_x, cfg.grad)
    return task.Q.T @ g, out.solution.iterations


def grad_spo(inst, c_hat, task, layers, cfg):
    """SPO+ subgradient ``x*(c) - x*(2 c_hat - c)`` in minimisation form."""
    truth = layers.solve(inst.c, inst.b, cfg.solver)
    pert = layers.solve(2.0 * c_hat - inst.c, inst.b, cfg.solver)
    g = _sense_sign(task) * (truth.x - pert.x)
    iters = truth.solution.iterations + pert.solution.iterations
    return task.Q.T @ g, iters


def evaluate(model, dataset, task):
    """Mean MSE and exact-oracle regret of ``model`` on ``dataset``.

    Instances where the oracle reports infeasibility are excluded and
    counted.
    """
    regrets, mses, excluded = [], [], 0
    for inst in dataset.instances:
        c_hat = model.forward(inst.z)
        mses.append(float(np.mean((c_hat - inst.c) ** 2)))
        try:
            x_hat = task.oracle(c_hat, inst.b)
            x_star = task.oracle(inst.c, inst.b)
        except InfeasibleError:
            excluded += 1
            continue
        regrets.append(regret(task.Q @ inst.c, x_hat, x_star, task.sense))
    return {
        "mse": float(np.mean(mses)) if mses else float("nan"),
        "regret": float(np.mean(regrets)) if regrets else float("nan"),
        "regrets": regrets,
        "excluded": excluded,
        "n": len(dataset),
    }


def _train_mse(model, dataset):
    return float(np.mean([np.mean((model.forward(i.z) - i.c) ** 2) for i in dataset.instances]))


def train(dataset, task, cfg, val=None, select=None):
    """Run ``cfg.epochs`` epochs of mini-batch training.

    Parameters
    ----------
    dataset, val : Dataset
        Training and (optional) validation instances.
    task : Task
    cfg : TrainConfig
    select : {"val_regret", "val_mse"}, optional
        Return the parameters of the epoch (0 included) with the lowest
        value of this column instead of the last ones.

    Returns
    -------
    model : MLP
    record : ExperimentRecord
    """
    if len(dataset) == 0:
        raise ValueError("empty training set")
    if select is not None and val is None:
        raise ValueError("model selection needs a validation set")
    n_features = dataset[0].z.shape[-1]
    model = make_model(n_features, cfg.hidden, cfg.seed)
    opt = make_optimizer(cfg.optimizer, cfg.lr, cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    layers = LayerCache(task)

    if cfg.method == "two-stage":
        def grad_fn(inst, c_hat):
            return grad_two_stage(inst, c_hat)
    elif cfg.method == "intopt":
        def grad_fn(inst, c_hat):
            return grad_intopt(inst, c_hat, task, layers, cfg)
    else:
        def grad_fn(inst, c_hat):
            return grad_spo(inst, c_hat, task, layers, cfg)

    record = ExperimentRecord()
    best = None

    def log(epoch, failures, seconds, iters):
        row = {"epoch": epoch, "train_mse": _train_mse(model, dataset),
               "val_mse": float("nan"), "val_regret": float("nan"),
               "failures": failures, "seconds": seconds,
               "solver_iterations": iters}
        if val is not None:
            m = evaluate(model, val, task)
            row["val_mse"], row["val_regret"] = m["mse"], m["regret"]
        record.add(**row)
        nonlocal best
        if select is not None and (best is None or row[select] < best[0]):
            best = (row[select], epoch, model.copy())

    log(0, 0, 0.0, 0)
    n = len(dataset)
    last_error = None
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        failures, iters = 0, 0
        for b0 in range(0, n, cfg.batch_size):
            model.zero_grad()
            ok = 0
            for i in order[b0:b0 + cfg.batch_size]:
                inst = dataset[i]
                c_hat = model.forward(inst.z)
                try:
                    g, it = grad_fn(inst, c_hat)
                except LPError as exc:
                    failures += 1
                    last_error = exc
                    continue
                iters += it
                model.backward(g)
                ok += 1
            if ok:
                for gbuf in model.grads:
                    gbuf /= ok
                opt.step(model.params, model.grads)
        if failures == n:
            raise TrainingAborted(
                f"all {n} instances failed in epoch {epoch}; last error: "
                f"{type(last_error).__name__}: {last_error}")
        log(epoch, failures, time.perf_counter() - start, iters)

    if select is not None:
        _, record.best_epoch, model = best
    return model, record


def train_twostage(dataset, task, cfg, val=None, select=None):
    return train(dataset, task, replace(cfg, method="two-stage"), val, select)


def train_intopt(dataset, task, cfg, val=None, select=None):
    return train(dataset, task, replace(cfg, method="intopt"), val, select)


def train_spo(dataset, task, cfg, val=None, select=None):
    return train(dataset, task, replace(cfg, method="spo"), val, select)

"""
Benchmark decision problems, synthetic data generators and exact oracles.

Each family exposes the same pieces:

* a spec dataclass describing the fixed structure,
* a builder returning a :class:`GeneralProblem` whose objective is linear in
  the prediction target through a fixed matrix ``Q`` (``c_lp = Q @ target``),
* an exact discrete oracle used to measure regret.

:class:`Task` bundles these so training code does not need to know which
family it is working on.
"""

import heapq
import itertools
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InfeasibleError, StructuralError
from .lp import GeneralProblem

MAX_BRUTE_FORCE_BINARIES = 22
MAX_DP_CAPACITY = 10_000_000


# ---------------------------------------------------------------- knapsack

@dataclass(frozen=True)
class KnapsackSpec:
    costs: tuple
    budget: float

    def __post_init__(self):
        costs = tuple(float(c) for c in self.costs)
        if not costs or min(costs) <= 0:
            raise StructuralError("knapsack costs must be positive")
        if not self.budget > 0:
            raise StructuralError("knapsack budget must be positive")
        object.__setattr__(self, "costs", costs)
        object.__setattr__(self, "budget", float(self.budget))

    @property
    def n_items(self):
        return len(self.costs)


def knapsack_to_lp(spec, values=None):
    """``max values @ x`` s.t. ``costs @ x <= B``, ``x <= 1``, ``x >= 0``."""
    n = spec.n_items
    values = np.zeros(n) if values is None else np.asarray(values, dtype=float)
    A_ub = np.vstack([np.asarray(spec.costs)[None, :], np.eye(n)])
    b_ub = np.concatenate([[spec.budget], np.ones(n)])
    return GeneralProblem(c=values, A_ub=A_ub, b_ub=b_ub, sense="max",
                          integrality=np.ones(n, dtype=bool))


def _integer_scale(costs, budget, max_scale=1e6):
    """Smallest power of ten (up to ``max_scale``) making all data integral."""
    data = np.concatenate([costs, [budget]])
    scale = 1.0
    while scale < max_scale and np.any(np.abs(data * scale - np.round(data * scale)) > 1e-9 * scale):
        scale *= 10.0
    return scale


def knapsack_oracle(values, costs, budget):
    """Exact 0-1 knapsack by dynamic programming over the (integer) budget.

    Costs are multiplied by the smallest power of ten up to ``1e6`` that
    makes them integral, then rounded.  Among optimal sets the one that
    skips later items is preferred.

    Returns
    -------
    chosen : tuple of int
        Sorted item indices.
    objective : float
    """
    values = np.asarray(values, dtype=float)
    costs = np.asarray(costs, dtype=float)
    if values.shape != costs.shape:
        raise ValueError("values and costs differ in length")
    if budget < 0:
        raise InfeasibleError("negative knapsack budget")
    scale = _integer_scale(costs, budget)
    w = np.round(costs * scale).astype(np.int64)
    cap = int(np.floor(budget * scale + 1e-9))
    if cap > MAX_DP_CAPACITY:
        raise OverflowError(f"scaled budget {cap} exceeds DP capacity {MAX_DP_CAPACITY}")

    n = values.size
    best = np.zeros(cap + 1)
    take = np.zeros((n, cap + 1), dtype=bool)
    for i in range(n):
        if values[i] <= 0 or w[i] > cap:
            continue
        cand = np.full(cap + 1, -np.inf)
        cand[w[i]:] = best[:cap + 1 - w[i]] + values[i]
        take[i] = cand > best
        best = np.where(take[i], cand, best)

    chosen = []
    r = cap
    for i in reversed(range(n)):
        if take[i, r]:
            chosen.append(i)
            r -= w[i]
    chosen.sort()
    return tuple(chosen), float(values[chosen].sum()) if chosen else 0.0


# ----------------------------------------------------------- shortest path

@dataclass(frozen=True)
class ShortestPathSpec:
    n_nodes: int
    edges: tuple
    source: int = 0
    dest: int = None

    def __post_init__(self):
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        dest = self.n_nodes - 1 if self.dest is None else int(self.dest)
        if not edges:
            raise StructuralError("graph has no edges")
        for u, v in edges:
            if not (0 <= u < self.n_nodes and 0 <= v < self.n_nodes) or u == v:
                raise StructuralError(f"bad edge ({u}, {v})")
        if self.source == dest:
            raise StructuralError("source and destination coincide")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "dest", dest)

    @property
    def n_edges(self):
        return len(self.edges)

    def incidence(self):
        N = np.zeros((self.n_nodes, self.n_edges))
        for e, (u, v) in enumerate(self.edges):
            N[u, e] = 1.0
            N[v, e] = -1.0
        return N

    def supply(self, source=None, dest=None):
        b = np.zeros(self.n_nodes)
        b[self.source if source is None else source] = 1.0
        b[self.dest if dest is None else dest] = -1.0
        return b


def shortestpath_to_lp(spec, weights=None, b=None):
    """Flow formulation ``min w @ x`` s.t. ``N x = b``, ``x >= 0``.

    ``N`` is the node-edge incidence matrix (+1 at the tail, -1 at the
    head).  The row of the last node is dropped: the rows of ``N`` sum to
    zero, so it is implied by the others.  ``b`` is a full node-length
    supply vector and defaults to the spec's source/destination pair.
    """
    w = np.zeros(spec.n_edges) if weights is None else np.asarray(weights, dtype=float)
    b = spec.supply() if b is None else np.asarray(b, dtype=float)
    return GeneralProblem(c=w, A_eq=spec.incidence()[:-1], b_eq=b[:-1], sense="min",
                          integrality=np.ones(spec.n_edges, dtype=bool))


def _endpoints(spec, b):
    if b is None:
        return spec.source, spec.dest
    b = np.asarray(b)
    return int(np.argmax(b)), int(np.argmin(b))


def _path_edges(pred_edge, spec, s, d):
    path, node = [], d
    while node != s:
        e = pred_edge[node]
        path.append(e)
        node = spec.edges[e][0]
    return path[::-1]


def dijkstra_oracle(spec, weights, source=None, dest=None):
    """Exact shortest path for nonnegative weights.

    Labels are compared as ``(distance, edge index sequence)`` so equal-cost
    ties go to the lexicographically smallest edge sequence.

    Returns
    -------
    path : list of int
        Edge indices from source to destination.
    cost : float
    """
    w = np.asarray(weights, dtype=float)
    if w.size != spec.n_edges:
        raise ValueError("one weight per edge required")
    if np.any(w < 0):
        raise ValueError("Dijkstra needs nonnegative weights")
    s = spec.source if source is None else source
    d = spec.dest if dest is None else dest
    out = [[] for _ in range(spec.n_nodes)]
    for e, (u, v) in enumerate(spec.edges):
        out[u].append(e)

    heap = [(0.0, (), s)]
    done = set()
    while heap:
        dist, path, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == d:
            return list(path), float(sum(w[list(path)])) if path else 0.0
        for e in out[u]:
            v = spec.edges[e][1]
            if v not in done:
                heapq.heappush(heap, (dist + w[e], path + (e,), v))
    raise InfeasibleError(f"destination {d} unreachable from {s}")


def bellman_ford_oracle(spec, weights, source=None, dest=None):
    """Shortest path allowing negative weights; fails on negative cycles."""
    w = np.asarray(weights, dtype=float)
    s = spec.source if source is None else source
    d = spec.dest if dest is None else dest
    dist = np.full(spec.n_nodes, np.inf)
    dist[s] = 0.0
    pred = [-1] * spec.n_nodes
    for _ in range(spec.n_nodes - 1):
        changed = False
        for e, (u, v) in enumerate(spec.edges):
            if dist[u] + w[e] < dist[v]:
                dist[v] = dist[u] + w[e]
                pred[v] = e
                changed = True
        if not changed:
            break
    else:
        for e, (u, v) in enumerate(spec.edges):
            if dist[u] + w[e] < dist[v]:
                raise InfeasibleError("negative cycle reachable from source", kind="unbounded")
    if not np.isfinite(dist[d]):
        raise InfeasibleError(f"destination {d} unreachable from {s}")
    path = _path_edges(pred, spec, s, d)
    return path, float(sum(w[path]))


def shortest_path(spec, weights, source=None, dest=None):
    """Dijkstra when all weights are nonnegative, Bellman-Ford otherwise."""
    if np.all(np.asarray(weights) >= 0):
        return dijkstra_oracle(spec, weights, source, dest)
    return bellman_ford_oracle(spec, weights, source, dest)


def grid_graph(rows, cols):
    """Directed grid with edges pointing right and down (a DAG)."""
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                edges.append((u, u + 1))
            if r + 1 < rows:
                edges.append((u, u + cols))
    return ShortestPathSpec(n_nodes=rows * cols, edges=tuple(edges), source=0,
                            dest=rows * cols - 1)


# -------------------------------------------------------------- scheduling

@dataclass(frozen=True)
class SchedulingSpec:
    """Tasks with durations and time windows on machines with capacities.

    ``usage[j][r]`` is task ``j``'s use of resource ``r``; ``capacity[m][r]``
    the capacity of machine ``m``.  A task running from slot ``t`` occupies
    slots ``t .. t + duration - 1`` and must satisfy
    ``earliest <= t`` and ``t + duration <= latest``.
    """

    duration: tuple
    earliest: tuple
    latest: tuple
    power: tuple
    usage: tuple
    capacity: tuple
    n_slots: int

    def __post_init__(self):
        as_tuple = lambda v, f: tuple(f(x) for x in v)  # noqa: E731
        object.__setattr__(self, "duration", as_tuple(self.duration, int))
        object.__setattr__(self, "earliest", as_tuple(self.earliest, int))
        object.__setattr__(self, "latest", as_tuple(self.latest, int))
        object.__setattr__(self, "power", as_tuple(self.power, float))
        object.__setattr__(self, "usage", tuple(as_tuple(u, float) for u in self.usage))
        object.__setattr__(self, "capacity", tuple(as_tuple(c, float) for c in self.capacity))
        J = len(self.duration)
        if not (len(self.earliest) == len(self.latest) == len(self.power) == len(self.usage) == J):
            raise StructuralError("task attribute lengths differ")
        R = len(self.usage[0]) if J else 0
        if any(len(u) != R for u in self.usage) or any(len(c) != R for c in self.capacity):
            raise StructuralError("resource counts differ")
        if any(c < 0 for cap in self.capacity for c in cap):
            raise StructuralError("capacities must be nonnegative")
        for j in range(J):
            if self.duration[j] < 1:
                raise StructuralError(f"task {j} has non-positive duration")
            if self.earliest[j] + self.duration[j] > self.latest[j]:
                raise InfeasibleError(f"task {j} has an empty time window")

    @property
    def n_tasks(self):
        return len(self.duration)

    @property
    def n_machines(self):
        return len(self.capacity)


def scheduling_variables(spec):
    """Allowed ``(j, m, t)`` triples in lexicographic order."""
    out = []
    for j in range(spec.n_tasks):
        u = np.asarray(spec.usage[j])
        found = False
        for m in range(spec.n_machines):
            if np.any(u > np.asarray(spec.capacity[m])):
                continue
            last = min(spec.latest[j], spec.n_slots) - spec.duration[j]
            for t in range(max(spec.earliest[j], 0), last + 1):
                out.append((j, m, t))
                found = True
        if not found:
            raise InfeasibleError(f"task {j} fits on no machine within its window")
    return out


def scheduling_cost_matrix(spec, variables=None):
    """``Q`` with ``Q[v, t'] = p_j`` for the slots ``t'`` variable ``v`` occupies."""
    variables = scheduling_variables(spec) if variables is None else variables
    Q = np.zeros((len(variables), spec.n_slots))
    for v, (j, m, t) in enumerate(variables):
        Q[v, t:t + spec.duration[j]] = spec.power[j]
    return Q


def scheduling_to_lp(spec, prices=None):
    """Assignment rows (each task exactly once) plus per-slot resource rows.

    Resource rows that cannot bind (the tasks that may overlap slot ``t``
    on machine ``m`` fit together) are omitted.
    """
    variables = scheduling_variables(spec)
    n = len(variables)
    A_eq = np.zeros((spec.n_tasks, n))
    for v, (j, _, _) in enumerate(variables):
        A_eq[j, v] = 1.0
    rows, rhs = [], []
    n_res = len(spec.capacity[0]) if spec.capacity else 0
    for m in range(spec.n_machines):
        for r in range(n_res):
            for t in range(spec.n_slots):
                row = np.zeros(n)
                tasks = set()
                for v, (j, mm, s) in enumerate(variables):
                    if mm == m and s <= t < s + spec.duration[j] and spec.usage[j][r] > 0:
                        row[v] = spec.usage[j][r]
                        tasks.add(j)
                if sum(spec.usage[j][r] for j in tasks) > spec.capacity[m][r]:
                    rows.append(row)
                    rhs.append(spec.capacity[m][r])
    Q = scheduling_cost_matrix(spec, variables)
    c = np.zeros(n) if prices is None else Q @ np.asarray(prices, dtype=float)
    return GeneralProblem(c=c, A_eq=A_eq, b_eq=np.ones(spec.n_tasks),
                          A_ub=np.array(rows).reshape(len(rows), n), b_ub=np.array(rhs),
                          sense="min", integrality=np.ones(n, dtype=bool))


def scheduling_oracle(spec, prices):
    """Exact schedule by enumerating one ``(machine, start)`` per task.

    Returns the 0-1 vector over :func:`scheduling_variables` and its cost.
    """
    variables = scheduling_variables(spec)
    Q = scheduling_cost_matrix(spec, variables)
    cost = Q @ np.asarray(prices, dtype=float)
    per_task = [[v for v, (j, _, _) in enumerate(variables) if j == jj]
                for jj in range(spec.n_tasks)]
    n_res = len(spec.capacity[0]) if spec.capacity else 0
    best, best_x = np.inf, None
    for combo in itertools.product(*per_task):
        load = np.zeros((spec.n_machines, n_res, spec.n_slots))
        for v in combo:
            j, m, t = variables[v]
            load[m, :, t:t + spec.duration[j]] += np.asarray(spec.usage[j])[:, None]
        if np.any(load > np.asarray(spec.capacity)[:, :, None] + 1e-9):
            continue
        val = float(cost[list(combo)].sum())
        if val < best:
            best, best_x = val, combo
    if best_x is None:
        raise InfeasibleError("no schedule satisfies the capacities")
    x = np.zeros(len(variables))
    x[list(best_x)] = 1.0
    return x, best


# ------------------------------------------------------ generic brute force

def brute_force_milp(problem, chunk=1 << 16):
    """Exhaustive search over 0-1 assignments of all variables.

    Assignments are visited in lexicographic order (``x_0`` most
    significant) and the first optimal one is returned.
    """
    n = problem.n_vars
    if not np.all(problem.integrality):
        raise ValueError("brute force needs every variable to be binary")
    if n > MAX_BRUTE_FORCE_BINARIES:
        raise ValueError(f"{n} binaries exceed the limit of {MAX_BRUTE_FORCE_BINARIES}")
    sign = 1.0 if problem.sense == "min" else -1.0
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    best, best_x = np.inf, None
    for start in range(0, 1 << n, chunk):
        idx = np.arange(start, min(start + chunk, 1 << n), dtype=np.int64)
        X = ((idx[:, None] >> shifts) & 1).astype(float)
        ok = np.ones(idx.size, dtype=bool)
        if problem.A_eq.shape[0]:
            ok &= np.all(np.abs(X @ problem.A_eq.T - problem.b_eq) <= 1e-9, axis=1)
        if problem.A_ub.shape[0]:
            ok &= np.all(X @ problem.A_ub.T - problem.b_ub <= 1e-9, axis=1)
        if not np.any(ok):
            continue
        vals = sign * (X[ok] @ problem.c)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best, best_x = vals[i], X[ok][i]
    if best_x is None:
        raise InfeasibleError("no 0-1 assignment is feasible")
    return best_x, float(sign * best)


# --------------------------------------------------------------- task glue

class Task:
    """A problem family with fixed structure and a predicted cost target.

    ``target`` vectors have length :attr:`n_targets`; the objective of the
    original problem is ``Q @ target``.  ``b`` overrides (shortest path
    only) are full node-length supply vectors.
    """

    def __init__(self, kind, spec):
        if kind not in ("knapsack", "shortestpath", "scheduling"):
            raise ValueError(f"unknown problem kind {kind!r}")
        self.kind = kind
        self.spec = spec
        if kind == "knapsack":
            self.Q = np.eye(spec.n_items)
        elif kind == "shortestpath":
            self.Q = np.eye(spec.n_edges)
        else:
            self.Q = scheduling_cost_matrix(spec)

    @property
    def n_targets(self):
        return self.Q.shape[1]

    @property
    def sense(self):
        return "max" if self.kind == "knapsack" else "min"

    def problem(self, target=None, b=None):
        c = None if target is None else self.Q @ np.asarray(target, dtype=float)
        if self.kind == "knapsack":
            return knapsack_to_lp(self.spec, c)
        if self.kind == "shortestpath":
            return shortestpath_to_lp(self.spec, c, b)
        p = scheduling_to_lp(self.spec)
        return p if c is None else p.with_objective(c)

    def oracle(self, target, b=None):
        """Exact discrete optimum ``x`` (original variables) under ``target``."""
        target = np.asarray(target, dtype=float)
        if self.kind == "knapsack":
            chosen, _ = knapsack_oracle(target, self.spec.costs, self.spec.budget)
            x = np.zeros(self.spec.n_items)
            x[list(chosen)] = 1.0
            return x
        if self.kind == "shortestpath":
            s, d = _endpoints(self.spec, b)
            path, _ = shortest_path(self.spec, target, s, d)
            x = np.zeros(self.spec.n_edges)
            x[path] = 1.0
            return x
        return scheduling_oracle(self.spec, target)[0]

    def objective(self, target, x):
        return float((self.Q @ np.asarray(target, dtype=float)) @ x)

    def to_dict(self):
        return {"problem": self.kind, "spec": asdict(self.spec)}

    @classmethod
    def from_dict(cls, d):
        kind = d["problem"]
        spec_cls = {"knapsack": KnapsackSpec, "shortestpath": ShortestPathSpec,
                    "scheduling": SchedulingSpec}[kind]
        return cls(kind, spec_cls(**d["spec"]))


# ---------------------------------------------------------------- datasets

@dataclass
class Instance:
    z: np.ndarray
    c: np.ndarray
    b: np.ndarray = None


@dataclass
class Dataset:
    instances: list
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.instances)

    def __getitem__(self, i):
        return self.instances[i]

    def subset(self, idx):
        return Dataset([self.instances[i] for i in idx], dict(self.metadata))

    def split(self, counts):
        """Consecutive splits with the given sizes."""
        if any(n < 0 for n in counts) or sum(counts) > len(self):
            raise ValueError(f"split sizes {counts} do not fit dataset size {len(self)}")
        out, start = [], 0
        for n in counts:
            out.append(self.subset(range(start, start + n)))
            start += n
        return out

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for inst in self.instances:
                row = {"z": inst.z.tolist(), "c": inst.c.tolist()}
                if inst.b is not None:
                    row["b_override"] = inst.b.tolist()
                fh.write(json.dumps(row) + "\n")

    @classmethod
    def from_jsonl(cls, path, metadata=None):
        instances = []
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                b = row.get("b_override")
                instances.append(Instance(z=np.asarray(row["z"], dtype=float),
                                          c=np.asarray(row["c"], dtype=float),
                                          b=None if b is None else np.asarray(b, dtype=float)))
        return cls(instances, metadata or {})


def save_dataset(dataset, task, path):
    """Write ``path`` (JSON lines) and ``path + '.spec.json'``."""
    dataset.to_jsonl(path)
    with open(spec_path(path), "w") as fh:
        json.dump({**task.to_dict(), "metadata": dataset.metadata}, fh, indent=1)


def load_dataset(path):
    with open(spec_path(path)) as fh:
        meta = json.load(fh)
    task = Task.from_dict(meta)
    return Dataset.from_jsonl(path, meta.get("metadata", {})), task


def spec_path(path):
    return str(path) + ".spec.json"


def _random_relu_net(rng, sizes, bias_scale=0.5):
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        layers.append((rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_in, fan_out)),
                       rng.normal(0.0, bias_scale, fan_out)))
    return layers


def _apply_net(layers, h):
    for i, (W, b) in enumerate(layers):
        h = h @ W + b
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return h[..., 0]


def random_dag(n_nodes, n_edges, rng):
    """Chain ``0 -> 1 -> ... -> n-1`` plus distinct random forward edges."""
    if n_nodes < 2:
        raise StructuralError("need at least two nodes")
    max_edges = n_nodes * (n_nodes - 1) // 2
    if not n_nodes - 1 <= n_edges <= max_edges:
        raise StructuralError(f"edge count must lie in [{n_nodes - 1}, {max_edges}]")
    edges = {(i, i + 1) for i in range(n_nodes - 1)}
    while len(edges) < n_edges:
        u, v = sorted(rng.choice(n_nodes, size=2, replace=False))
        edges.add((int(u), int(v)))
    return ShortestPathSpec(n_nodes=n_nodes, edges=tuple(sorted(edges)), source=0,
                            dest=n_nodes - 1)


def reachable_pairs(spec):
    """All ``(s, d)`` with ``d != s`` reachable from ``s``, sorted."""
    out = [[] for _ in range(spec.n_nodes)]
    for u, v in spec.edges:
        out[u].append(v)
    pairs = []
    for s in range(spec.n_nodes):
        seen, stack = {s}, [s]
        while stack:
            for v in out[stack.pop()]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        pairs += [(s, d) for d in sorted(seen - {s})]
    return pairs


def gen_shortestpath_dataset(n_instances=100, graph="random", n_nodes=20, n_edges=50,
                             rows=4, cols=4, n_features=4, noise=0.5, hidden=16,
                             spread=0.5, min_weight=0.01, seed=0):
    """Shortest-path instances with weights from a random ReLU network.

    The graph is either a random DAG with ``n_nodes`` nodes and ``n_edges``
    edges (``graph="random"``) or a ``rows x cols`` grid with edges pointing
    right and down (``graph="grid"``); it is shared by all instances.

    Each instance draws node features uniformly from ``[0, 1)`` and one
    uniform random number per edge.  The true weight of edge ``(u, v)`` is
    a fixed random 3-layer ReLU network applied to
    ``[features(u), features(v), r_e]`` (shifted to ``[-1, 1)``), affinely
    normalised to mean 1 and standard deviation ``spread`` over the
    dataset, plus Gaussian noise of scale ``noise * spread``, and clamped
    to ``min_weight``.  The predictor sees the same concatenated rows.
    Source and destination are a uniformly drawn reachable pair.
    """
    rng = np.random.default_rng(seed)
    if graph == "grid":
        spec = grid_graph(rows, cols)
    elif graph == "random":
        spec = random_dag(n_nodes, n_edges, rng)
    else:
        raise ValueError(f"unknown graph type {graph!r}")
    d_in = 2 * n_features + 1
    net = _random_relu_net(rng, [d_in, hidden, hidden, 1])
    src = np.array([u for u, _ in spec.edges])
    dst = np.array([v for _, v in spec.edges])
    pairs_all = reachable_pairs(spec)

    zs, raws, pairs = [], [], []
    for _ in range(n_instances):
        feats = rng.uniform(0.0, 1.0, (spec.n_nodes, n_features))
        r = rng.uniform(0.0, 1.0, (spec.n_edges, 1))
        z = np.hstack([feats[src], feats[dst], r])
        zs.append(z)
        raws.append(_apply_net(net, 2.0 * z - 1.0))
        pairs.append(pairs_all[int(rng.integers(len(pairs_all)))])
    raw = np.array(raws)
    mu, sd = raw.mean(), raw.std()
    sd = sd if sd > 0 else 1.0
    instances = []
    for z, w_raw, (s, d) in zip(zs, raw, pairs):
        w = 1.0 + spread * ((w_raw - mu) / sd + noise * rng.standard_normal(w_raw.size))
        instances.append(Instance(z=z, c=np.maximum(w, min_weight), b=spec.supply(s, d)))
    meta = {"generator": "shortestpath", "graph": graph, "n_nodes": spec.n_nodes,
            "n_edges": spec.n_edges, "n_features": n_features, "noise": noise,
            "hidden": hidden, "spread": spread, "min_weight": min_weight, "seed": seed,
            "random_input": "uniform[0,1)"}
    return Dataset(instances, meta), Task("shortestpath", spec)


def gen_knapsack_dataset(n_instances=100, n_items=10, n_features=5, noise=0.1,
                         nonlinearity=1.0, budget_fraction=0.5, max_cost=10, seed=0):
    """Knapsack instances whose item values depend on item features.

    ``value = z @ w + 3 + nonlinearity * (z @ w)**2 + noise * N(0, 1)``
    with ``z ~ N(0, I)``, a fixed random ``w`` normalised to unit length,
    integer costs in ``1..max_cost`` and budget
    ``budget_fraction * sum(costs)``.
    """
    rng = np.random.default_rng(seed)
    costs = rng.integers(1, max_cost + 1, n_items).astype(float)
    budget = float(max(1.0, np.floor(budget_fraction * costs.sum())))
    w = rng.standard_normal(n_features)
    w /= np.linalg.norm(w)
    instances = []
    for _ in range(n_instances):
        z = rng.standard_normal((n_items, n_features))
        s = z @ w
        v = s + 3.0 + nonlinearity * s ** 2 + noise * rng.standard_normal(n_items)
        instances.append(Instance(z=z, c=v))
    meta = {"generator": "knapsack", "n_items": n_items, "n_features": n_features,
            "noise": noise, "nonlinearity": nonlinearity,
            "budget_fraction": budget_fraction, "seed": seed}
    return Dataset(instances, meta), Task("knapsack", KnapsackSpec(tuple(costs), budget))


def gen_scheduling_dataset(n_instances=50, n_tasks=3, n_machines=2, n_slots=8,
                           n_features=4, noise=0.1, seed=0):
    """Small scheduling instances with slot prices predicted from slot features.

    ``price_t = 1 + |z_t @ w| + noise * N(0, 1)`` clamped at ``0.01``.
    """
    rng = np.random.default_rng(seed)
    duration = rng.integers(1, 3, n_tasks)
    earliest = [int(rng.integers(0, n_slots - d)) for d in duration]
    latest = [int(min(n_slots, e + d + rng.integers(1, 4))) for e, d in zip(earliest, duration)]
    spec = SchedulingSpec(duration=tuple(duration), earliest=tuple(earliest),
                          latest=tuple(latest),
                          power=tuple(rng.uniform(0.5, 2.0, n_tasks)),
                          usage=tuple((float(u),) for u in rng.integers(1, 3, n_tasks)),
                          capacity=tuple((2.0,) for _ in range(n_machines)),
                          n_slots=n_slots)
    w = rng.standard_normal(n_features)
    instances = []
    for _ in range(n_instances):
        z = rng.standard_normal((n_slots, n_features))
        price = 1.0 + np.abs(z @ w) + noise * rng.standard_normal(n_slots)
        instances.append(Instance(z=z, c=np.maximum(price, 0.01)))
    meta = {"generator": "scheduling", "n_tasks": n_tasks, "n_machines": n_machines,
            "n_slots": n_slots, "n_features": n_features, "noise": noise, "seed": seed}
    return Dataset(instances, meta), Task("scheduling", spec)


GENERATORS = {
    "shortestpath": gen_shortestpath_dataset,
    "knapsack": gen_knapsack_dataset,
    "scheduling": gen_scheduling_dataset,
}

"""
Small fully connected predictors with hand-written backpropagation.

A model maps one feature row to ``out_dim`` outputs.  Passing a 2-D array
of shape ``(n_items, n_features)`` applies it to every row, which is how a
cost vector is predicted one item (edge, timeslot, ...) at a time.
"""

import json

import numpy as np


class MLP:
    """Affine layers with ReLU in between and identity at the output.

    ``sizes=[d, 1]`` is a linear model (no hidden layer); ``[d, h, 1]`` has
    one hidden layer of width ``h``.  Weights are drawn uniformly from
    ``+-1/sqrt(fan_in)``.
    """

    def __init__(self, sizes, seed=0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = [int(s) for s in sizes]
        rng = np.random.default_rng(seed)
        self.params = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
            self.params.append(rng.uniform(-bound, bound, fan_out))
        self.grads = [np.zeros_like(p) for p in self.params]
        self._cache = None

    @property
    def n_layers(self):
        return len(self.sizes) - 1

    def zero_grad(self):
        for g in self.grads:
            g.fill(0.0)

    def forward(self, z):
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        h = z[None, :] if single else z
        if h.shape[1] != self.sizes[0]:
            raise ValueError(f"expected {self.sizes[0]} features, got {h.shape[1]}")
        acts, pre = [h], []
        for i in range(self.n_layers):
            W, b = self.params[2 * i], self.params[2 * i + 1]
            a = h @ W.T + b
            pre.append(a)
            h = np.maximum(a, 0.0) if i < self.n_layers - 1 else a
            acts.append(h)
        self._cache = (acts, pre, single)
        out = h[0] if single else h
        if not single and self.sizes[-1] == 1:
            out = out[:, 0]
        return out

    def backward(self, grad_out):
        """Accumulate ``d(out . grad_out) / d theta`` into ``self.grads``.

        Must follow the :meth:`forward` call that produced ``out``.
        """
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        acts, pre, single = self._cache
        g = np.asarray(grad_out, dtype=float)
        g = g.reshape(acts[-1].shape)
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                g = g * (pre[i] > 0)
            self.grads[2 * i] += g.T @ acts[i]
            self.grads[2 * i + 1] += g.sum(axis=0)
            if i > 0:
                g = g @ self.params[2 * i]
        return self.grads

    def get_flat(self):
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat):
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    def copy(self):
        other = MLP.__new__(MLP)
        other.sizes = list(self.sizes)
        other.params = [p.copy() for p in self.params]
        other.grads = [np.zeros_like(p) for p in self.params]
        other._cache = None
        return other

    def to_dict(self):
        return {"sizes": self.sizes, "params": [p.ravel().tolist() for p in self.params]}

    @classmethod
    def from_dict(cls, d):
        model = cls(d["sizes"])
        for p, flat in zip(model.params, d["params"]):
            flat = np.asarray(flat, dtype=float)
            if flat.size != p.size:
                raise ValueError("checkpoint shape mismatch")
            p[...] = flat.reshape(p.shape)
        return model


class SGD:
    def __init__(self, lr=0.1, weight_decay=0.0):
        self.lr = lr
        self.weight_decay = weight_decay
        self.step_count = 0

    def step(self, params, grads):
        for p, g in zip(params, grads):
            if self.weight_decay:
                g = g + self.weight_decay * p
            p -= self.lr * g
        self.step_count += 1

    def state_dict(self):
        return {"kind": "sgd", "lr": self.lr, "weight_decay": self.weight_decay,
                "step_count": self.step_count}


class Adam:
    def __init__(self, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if self.weight_decay:
                g = g + self.weight_decay * p
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_dict(self):
        return {
            "kind": "adam", "lr": self.lr, "betas": [self.beta1, self.beta2],
            "eps": self.eps, "weight_decay": self.weight_decay,
            "step_count": self.step_count,
            "m": None if self.m is None else [a.ravel().tolist() for a in self.m],
            "v": None if self.v is None else [a.ravel().tolist() for a in self.v],
        }


def make_optimizer(kind, lr, weight_decay=0.0):
    if kind == "sgd":
        return SGD(lr=lr, weight_decay=weight_decay)
    if kind == "adam":
        return Adam(lr=lr, weight_decay=weight_decay)
    raise ValueError(f"unknown optimizer {kind!r}")


def optimizer_from_state(state, params):
    if state["kind"] == "sgd":
        opt = SGD(lr=state["lr"], weight_decay=state["weight_decay"])
    else:
        opt = Adam(lr=state["lr"], betas=tuple(state["betas"]), eps=state["eps"],
                   weight_decay=state["weight_decay"])
        if state.get("m") is not None:
            opt.m = [np.asarray(a, dtype=float).reshape(p.shape) for a, p in zip(state["m"], params)]
            opt.v = [np.asarray(a, dtype=float).reshape(p.shape) for a, p in zip(state["v"], params)]
    opt.step_count = state["step_count"]
    return opt


def save_checkpoint(path, model, optimizer=None, extra=None):
    payload = {"model": model.to_dict(),
               "optimizer": None if optimizer is None else optimizer.state_dict()}
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_checkpoint(path):
    with open(path) as fh:
        payload = json.load(fh)
    model = MLP.from_dict(payload["model"])
    opt = payload.get("optimizer")
    return model, (None if opt is None else optimizer_from_state(opt, model.params))

"""MLP and LSTM predictors with hand-written forward/backward passes.

Backward passes return the per-layer deltas and layer inputs rather than
only dense gradients, because the encoding-layer update re-weights the
input factor of ``outer(delta, input)`` column by column.

Batch convention: arrays carry one sample per row.  Deltas are per-sample
derivatives of each sample's own loss; dense weight gradients are averaged
over the batch (the gradient of the mean loss).
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import linalg
from .linalg import activation, activation_derivative, output_delta

GATES = ("o", "i", "g", "f")
CHECKPOINT_MAGIC = "GILCKPT"
CHECKPOINT_VERSION = 1


class ContractViolation(ValueError):
    pass


def glorot_uniform(rng, fan_out, fan_in):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


# --------------------------------------------------------------------- MLP


@dataclass
class MlpModel:
    weights: list
    biases: list
    activations: list

    @property
    def dims(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def encoding(self):
        return self.weights[0]

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self):
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                        list(self.activations))


@dataclass
class MlpForwardCache:
    inputs: list  # q_{i-1} for each layer, q_0 = filled input
    preacts: list  # z_i
    output: np.ndarray

    @property
    def features(self):
        """Encoding-layer output, the learned feature."""
        return self.inputs[1]


@dataclass
class MlpGradients:
    deltas: list
    inputs: list
    n: int

    def weight_grad(self, i):
        return self.deltas[i].T @ self.inputs[i] / self.n

    def bias_grad(self, i):
        return self.deltas[i].mean(axis=0)

    def dense(self):
        """[dW_1, db_1, dW_2, db_2, ...] aligned with ``MlpModel.params()``."""
        out = []
        for i in range(len(self.deltas)):
            out.extend((self.weight_grad(i), self.bias_grad(i)))
        return out


def mlp_init(layer_dims, activations, seed):
    layer_dims = list(layer_dims)
    if len(layer_dims) < 3:
        raise ValueError("an MLP needs input, at least one hidden and an output dimension")
    if len(activations) != len(layer_dims) - 1:
        raise ValueError("one activation per weight layer required")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(glorot_uniform(rng, fan_out, fan_in))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, list(activations))


def mlp_forward(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if np.isnan(x).any():
        raise ContractViolation("MLP input contains NaN; fill missing entries first")
    if x.shape[1] != model.weights[0].shape[1]:
        raise linalg.ShapeError(f"input dim {x.shape[1]} != {model.weights[0].shape[1]}")
    inputs, preacts = [x], []
    q = x
    for w, b, kind in zip(model.weights, model.biases, model.activations):
        z = q @ w.T + b
        q = activation(kind, z)
        preacts.append(z)
        inputs.append(q)
    output = inputs.pop()
    return MlpForwardCache(inputs, preacts, output)


def _check_cache(model, cache):
    if len(cache.preacts) != len(model.weights) or any(
        z.shape[1] != w.shape[0] for z, w in zip(cache.preacts, model.weights)
    ):
        raise ContractViolation("forward cache does not match this model")


def backprop(model, cache, delta_out):
    """Propagate an output-layer delta (dE/dz_out per sample) to every layer."""
    _check_cache(model, cache)
    n_layers = len(model.weights)
    deltas = [None] * n_layers
    deltas[-1] = np.asarray(delta_out, dtype=np.float64).reshape(cache.output.shape)
    for i in range(n_layers - 2, -1, -1):
        upstream = deltas[i + 1] @ model.weights[i + 1]
        deltas[i] = upstream * activation_derivative(model.activations[i], cache.preacts[i])
    return MlpGradients(deltas, cache.inputs, cache.output.shape[0])


def mlp_backward(model, cache, y, loss="cross_entropy"):
    """Gradients of the batch-mean loss; ``y`` is a target matrix (one-hot for CE)."""
    y = np.asarray(y, dtype=np.float64).reshape(cache.output.shape)
    delta = output_delta(loss, model.activations[-1], cache.preacts[-1], cache.output, y)
    return backprop(model, cache, delta)


def mlp_backward_output_grad(model, cache, grad_out):
    """Backward pass from an arbitrary upstream gradient on the network output."""
    grad_out = np.asarray(grad_out, dtype=np.float64).reshape(cache.output.shape)
    kind = model.activations[-1]
    if kind == "softmax":
        delta = linalg.softmax_vjp(cache.output, grad_out)
    else:
        delta = grad_out * activation_derivative(kind, cache.preacts[-1])
    return backprop(model, cache, delta)


def input_grad(model, grads):
    """Per-sample dE/dx (each row w.r.t. that sample's own loss)."""
    return grads.deltas[0] @ model.weights[0]


# -------------------------------------------------------------------- LSTM


@dataclass
class LstmModel:
    W: dict  # gate -> (e, d)
    U: dict  # gate -> (e, e)
    b: dict  # gate -> (e,)
    W_out: np.ndarray
    b_out: np.ndarray
    out_activation: str = "softmax"

    @property
    def hidden(self):
        return self.W_out.shape[1]

    @property
    def d(self):
        return self.W["o"].shape[1]

    def params(self):
        out = [self.W[g] for g in GATES] + [self.U[g] for g in GATES] + [self.b[g] for g in GATES]
        return out + [self.W_out, self.b_out]

    def copy(self):
        return LstmModel({g: v.copy() for g, v in self.W.items()},
                         {g: v.copy() for g, v in self.U.items()},
                         {g: v.copy() for g, v in self.b.items()},
                         self.W_out.copy(), self.b_out.copy(), self.out_activation)


@dataclass
class LstmForwardCache:
    xs: np.ndarray
    gates: dict  # gate -> (T, e) activations
    cells: np.ndarray  # (T + 1, e), row 0 is c_0
    hiddens: np.ndarray  # (T + 1, e), row 0 is h_0
    out_preact: np.ndarray
    output: np.ndarray

    @property
    def horizon(self):
        return len(self.xs)


@dataclass
class LstmGradients:
    gate_deltas: dict  # gate -> (T, e); dE/dW_gate = sum_t outer(delta_t, x_t)
    xs: np.ndarray
    U: dict
    b: dict
    W_out: np.ndarray
    b_out: np.ndarray

    def input_weight_grad(self, gate, xs=None):
        xs = self.xs if xs is None else xs
        return self.gate_deltas[gate].T @ xs

    def dense(self):
        return ([self.input_weight_grad(g) for g in GATES] + [self.U[g] for g in GATES]
                + [self.b[g] for g in GATES] + [self.W_out, self.b_out])


def lstm_init(d, hidden, num_classes, seed, out_activation="softmax"):
    rng = np.random.default_rng(seed)
    W = {g: glorot_uniform(rng, hidden, d) for g in GATES}
    U = {g: glorot_uniform(rng, hidden, hidden) for g in GATES}
    b = {g: np.zeros(hidden) for g in GATES}
    b["f"] = np.ones(hidden)
    W_out = glorot_uniform(rng, num_classes, hidden)
    return LstmModel(W, U, b, W_out, np.zeros(num_classes), out_activation)


def lstm_forward(model, xs):
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or len(xs) < 1:
        raise ContractViolation("LSTM input must be a (T, d) array with T >= 1")
    if np.isnan(xs).any():
        raise ContractViolation("LSTM input contains NaN; fill missing entries first")
    T, e = len(xs), model.hidden
    gates = {g: np.empty((T, e)) for g in GATES}
    cells = np.zeros((T + 1, e))
    hiddens = np.zeros((T + 1, e))
    for t in range(T):
        h_prev = hiddens[t]
        pre = {g: model.W[g] @ xs[t] + model.U[g] @ h_prev + model.b[g] for g in GATES}
        o, i, f = linalg.sigmoid(pre["o"]), linalg.sigmoid(pre["i"]), linalg.sigmoid(pre["f"])
        g = np.tanh(pre["g"])
        cells[t + 1] = f * cells[t] + i * g
        hiddens[t + 1] = o * np.tanh(cells[t + 1])
        gates["o"][t], gates["i"][t], gates["g"][t], gates["f"][t] = o, i, g, f
    z = model.W_out @ hiddens[T] + model.b_out
    return LstmForwardCache(xs, gates, cells, hiddens, z, activation(model.out_activation, z))


def lstm_backward(model, cache, y, loss="cross_entropy"):
    """Full BPTT with the loss attached to the final hidden state."""
    y = np.asarray(y, dtype=np.float64).reshape(cache.output.shape)
    delta_out = output_delta(loss, model.out_activation, cache.out_preact, cache.output, y)
    T, e = cache.horizon, model.hidden
    h_T = cache.hiddens[T]
    d_W_out = np.outer(delta_out, h_T)
    dh = model.W_out.T @ delta_out
    dc_next = np.zeros(e)
    deltas = {g: np.zeros((T, e)) for g in GATES}
    dU = {g: np.zeros((e, e)) for g in GATES}
    for t in range(T - 1, -1, -1):
        o, i, g, f = (cache.gates[k][t] for k in GATES)
        c_t, c_prev, h_prev = cache.cells[t + 1], cache.cells[t], cache.hiddens[t]
        tanh_c = np.tanh(c_t)
        dc = dh * o * (1.0 - tanh_c ** 2) + dc_next
        deltas["o"][t] = dh * tanh_c * o * (1.0 - o)
        deltas["i"][t] = dc * g * i * (1.0 - i)
        deltas["g"][t] = dc * i * (1.0 - g ** 2)
        deltas["f"][t] = dc * c_prev * f * (1.0 - f)
        dc_next = dc * f
        dh = np.zeros(e)
        for k in GATES:
            dU[k] += np.outer(deltas[k][t], h_prev)
            dh += model.U[k].T @ deltas[k][t]
    db = {k: deltas[k].sum(axis=0) for k in GATES}
    return LstmGradients(deltas, cache.xs, dU, db, d_W_out, delta_out.copy())


# -------------------------------------------------------------- checkpoints


def _tensors(model):
    if isinstance(model, MlpModel):
        out = []
        for k, (w, b) in enumerate(zip(model.weights, model.biases)):
            out += [(f"W{k}", w), (f"b{k}", b)]
        return "mlp", " ".join(model.activations), out
    named = [(f"W_{g}", model.W[g]) for g in GATES] + [(f"U_{g}", model.U[g]) for g in GATES]
    named += [(f"b_{g}", model.b[g]) for g in GATES] + [("W_out", model.W_out), ("b_out", model.b_out)]
    return "lstm", model.out_activation, named


def save_checkpoint(model, path):
    """Text checkpoint: header, then per tensor ``name rows cols`` and its values."""
    kind, meta, tensors = _tensors(model)
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", kind, meta, str(len(tensors))]
    for name, arr in tensors:
        mat = np.atleast_2d(arr) if arr.ndim == 2 else arr[None, :]
        lines.append(f"{name} {arr.ndim} {mat.shape[0]} {mat.shape[1]}")
        lines.extend(" ".join(repr(float(v)) for v in row) for row in mat)
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path):
    lines = Path(path).read_text().splitlines()
    magic, version = lines[0].split()
    if magic != CHECKPOINT_MAGIC or int(version) != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
    kind, meta, count = lines[1], lines[2], int(lines[3])
    pos, tensors = 4, {}
    for _ in range(count):
        name, ndim, rows, cols = lines[pos].split()
        rows, cols = int(rows), int(cols)
        mat = np.array([[float(v) for v in lines[pos + 1 + r].split()] for r in range(rows)])
        mat = mat.reshape(rows, cols)
        tensors[name] = mat if int(ndim) == 2 else mat[0]
        pos += 1 + rows
    if kind == "mlp":
        k = count // 2
        return MlpModel([tensors[f"W{i}"] for i in range(k)], [tensors[f"b{i}"] for i in range(k)],
                        meta.split())
    return LstmModel({g: tensors[f"W_{g}"] for g in GATES}, {g: tensors[f"U_{g}"] for g in GATES},
                     {g: tensors[f"b_{g}"] for g in GATES}, tensors["W_out"], tensors["b_out"], meta)

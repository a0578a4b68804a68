"""Dense float64 helpers, activations and losses with analytic derivatives.

Vectors and matrices are plain ``numpy.ndarray`` objects of dtype float64.
Functions that take a batch accept a 2-D array with one sample per row.
"""

import numpy as np

ACTIVATIONS = ("sigmoid", "tanh", "relu", "softmax", "identity")
LOSSES = ("cross_entropy", "mse")

PROB_CLAMP = 1e-12


class ShapeError(ValueError):
    pass


def _as_f64(a):
    return np.asarray(a, dtype=np.float64)


def matvec(m, v):
    m, v = _as_f64(m), _as_f64(v)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: cannot multiply {m.shape} by {v.shape}")
    return m @ v


def outer(u, v):
    return np.outer(_as_f64(u), _as_f64(v))


def hadamard(a, b):
    a, b = _as_f64(a), _as_f64(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard: shape mismatch {a.shape} vs {b.shape}")
    return a * b


def sigmoid(z):
    z = _as_f64(z)
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    z = _as_f64(z)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def activation(kind, z):
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "tanh":
        return np.tanh(_as_f64(z))
    if kind == "relu":
        return np.maximum(_as_f64(z), 0.0)
    if kind == "softmax":
        return softmax(z)
    if kind == "identity":
        return _as_f64(z).copy()
    raise ValueError(f"unknown activation {kind!r}")


def activation_derivative(kind, z):
    """Element-wise derivative of the activation at ``z``.

    Softmax has no element-wise derivative; use :func:`softmax_vjp`.
    """
    if kind == "sigmoid":
        s = sigmoid(z)
        return s * (1.0 - s)
    if kind == "tanh":
        t = np.tanh(_as_f64(z))
        return 1.0 - t * t
    if kind == "relu":
        return (_as_f64(z) > 0).astype(np.float64)
    if kind == "identity":
        return np.ones_like(_as_f64(z))
    if kind == "softmax":
        raise ValueError("softmax derivative is not element-wise; use softmax_vjp")
    raise ValueError(f"unknown activation {kind!r}")


def softmax_vjp(y_hat, g):
    """Jacobian-transpose product of softmax at output ``y_hat`` with ``g``."""
    return y_hat * (g - np.sum(g * y_hat, axis=-1, keepdims=True))


def loss(kind, y_hat, y):
    """Loss averaged over the batch (rows); a 1-D input is one sample."""
    y_hat, y = _as_f64(y_hat), _as_f64(y)
    if y_hat.shape != y.shape:
        raise ShapeError(f"loss: shape mismatch {y_hat.shape} vs {y.shape}")
    per_sample = loss_per_sample(kind, y_hat, y)
    return float(np.mean(per_sample))


def loss_per_sample(kind, y_hat, y):
    y_hat, y = _as_f64(y_hat), _as_f64(y)
    if y_hat.ndim == 1:
        y_hat, y = y_hat[None, :], y[None, :]
    if kind == "mse":
        return np.mean((y_hat - y) ** 2, axis=-1)
    if kind == "cross_entropy":
        p = np.clip(y_hat, PROB_CLAMP, 1.0 - PROB_CLAMP)
        if y_hat.shape[-1] == 1:
            return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))[:, 0]
        return -np.sum(y * np.log(p), axis=-1)
    raise ValueError(f"unknown loss {kind!r}")


def loss_gradient(kind, y_hat, y):
    """dE/dy_hat for a single sample's (un-averaged) loss."""
    y_hat, y = _as_f64(y_hat), _as_f64(y)
    if kind == "mse":
        return 2.0 * (y_hat - y) / y_hat.shape[-1]
    if kind == "cross_entropy":
        p = np.clip(y_hat, PROB_CLAMP, 1.0 - PROB_CLAMP)
        if y_hat.shape[-1] == 1:
            return (p - y) / (p * (1.0 - p))
        return -y / p
    raise ValueError(f"unknown loss {kind!r}")


def output_delta(loss_kind, out_kind, z, y_hat, y):
    """Delta at the output pre-activation, dE/dz, per sample.

    Softmax or sigmoid paired with cross-entropy collapse to ``y_hat - y``.
    """
    if loss_kind == "cross_entropy" and (
        out_kind == "softmax" or (out_kind == "sigmoid" and y_hat.shape[-1] == 1)
    ):
        return y_hat - y
    g = loss_gradient(loss_kind, y_hat, y)
    if out_kind == "softmax":
        return softmax_vjp(y_hat, g)
    return g * activation_derivative(out_kind, z)


def one_hot(labels, num_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out

"""SGD / Adam and the importance-weighted encoding gradient."""

from dataclasses import dataclass, field

import numpy as np


def apply_importance(delta, x_filled, a):
    """Importance-weighted encoding gradient ``outer(delta, x_filled * a)``.

    Batched inputs (one row per sample) give the batch-mean gradient
    ``delta.T @ (x_filled * a) / n``; ``a`` may be one vector for the whole
    batch or one row per sample.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.size and (a.min() < 0.0 or a.max() > 1.0 or np.isnan(a).any()):
        raise ValueError("importance entries must lie in [0, 1]")
    delta = np.asarray(delta, dtype=np.float64)
    x_filled = np.asarray(x_filled, dtype=np.float64)
    if delta.ndim == 1:
        return np.outer(delta, x_filled * a)
    return delta.T @ (x_filled * a) / delta.shape[0]


@dataclass
class Optimizer:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_steps: int = 0  # 0 disables exponential decay
    decay_rate: float = 1.0
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")

    def current_lr(self):
        if self.decay_steps > 0:
            return self.lr * self.decay_rate ** (self.t / self.decay_steps)
        return self.lr

    def step(self, params, grads, update_scales=None):
        """In-place descent step on ``params``.

        ``update_scales`` optionally multiplies each parameter's final update
        (after Adam's preconditioning) element-wise; None entries are skipped.
        """
        lr = self.current_lr()
        if self.kind == "adam" and not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        if lr == 0.0:
            return params
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, (p, g) in enumerate(zip(params, grads)):
            if self.kind == "sgd":
                update = lr * g
            else:
                m, v = self.m[k], self.v[k]
                m *= self.beta1
                m += (1.0 - self.beta1) * g
                v *= self.beta2
                v += (1.0 - self.beta2) * (g * g)
                # lr * m_hat / (sqrt(v_hat) + eps), fused to limit temporaries
                update = np.sqrt(v)
                update *= 1.0 / np.sqrt(bc2)
                update += self.eps
                np.divide(m, update, out=update)
                update *= lr / bc1
            if update_scales is not None and update_scales[k] is not None:
                update = update * update_scales[k]
            p -= update
        return params

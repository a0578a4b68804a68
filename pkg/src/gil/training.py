"""Training loops: gradient importance learning and its variants, plus the
impute-then-train baselines.

One iteration of the importance-learning loop, for a (mini-)batch:

1. draw importance ``a`` from the behaviour policy at state ``s``;
2. update the encoding weights with ``outer(delta, x_filled * a)`` and the
   remaining weights with their plain gradients;
3. re-run the forward pass on the same inputs with the updated weights and
   score ``r = -loss`` (plus ``c * D`` for the contrastive variant);
4. fetch the next batch, build ``s'`` with the updated weights, and update
   actor and critic on ``(s, a, r, s')``.

With ``action_mode="sample"`` every sample carries its own action and
transition, which for ``batch_size=1`` is the per-sample algorithm verbatim.
``action_mode="batch"`` uses a single action per batch.
"""

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import linalg
from .datasets import ConfigError, balanced_batch_iter, batch_iter
from .metrics import EvalResult, evaluate, imputation_mse
from .missingness import missing_rate
from .models import (
    GATES,
    LstmModel,
    MlpModel,
    lstm_backward,
    lstm_forward,
    lstm_init,
    mlp_backward,
    mlp_backward_output_grad,
    mlp_forward,
    mlp_init,
)
from .optim import Optimizer, apply_importance
from .rl import (
    TrainingDiverged,
    Transition,
    behavioral,
    make_actor_critic,
    observe,
    state_matrix,
)

VARIANTS = ("gil", "gil_h", "gil_d", "ablation_input", "baseline")
IMPUTERS = ("zero", "mean", "carry_forward", "noise_mean")


@dataclass
class TrainConfig:
    variant: str = "gil"
    imputer: str = "zero"
    model: str = "mlp"  # mlp | lstm
    hidden: tuple = (64, 64)  # MLP hidden widths; the first is the encoding layer
    hidden_activation: str = "relu"
    lstm_hidden: int = 32
    loss: str = "cross_entropy"
    max_iter: int = 1000
    batch_size: int = 128
    optimizer: str = "adam"
    lr: float = 1e-3
    decay_steps: int = 500
    decay_rate: float = 0.9
    importance_after_precondition: bool = False
    action_mode: str = "sample"  # sample | batch
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    rl_optimizer: str = "adam"
    rl_hidden: tuple = (256, 256)
    gamma: float = 0.99
    mixture: tuple = (0.8, 0.1, 0.1)
    noise: float = 0.1
    targets: bool = False
    tau: float = 0.005
    replay_capacity: int = 0
    replay_batch: int = 64
    c: float = 1.0
    placeholder: float = 0.0
    noise_scale: float = 1.0  # noise_mean imputer: noise std in column-std units
    balanced: bool = False
    force_importance: Optional[str] = None  # None | "ones" | "mask"
    freeze_weighting: bool = False  # ablation: h(x) pinned to ones
    eval_every: int = 100
    seed: int = 0

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.imputer not in IMPUTERS:
            raise ConfigError(f"unknown imputer {self.imputer!r}")
        if self.model not in ("mlp", "lstm"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.action_mode not in ("sample", "batch"):
            raise ConfigError(f"unknown action_mode {self.action_mode!r}")
        if self.force_importance not in (None, "ones", "mask"):
            raise ConfigError(f"unknown force_importance {self.force_importance!r}")
        if self.variant == "gil_d":
            # c = 0 is accepted as the degenerate case that reduces to plain GIL
            if self.c < 0:
                raise ConfigError("gil_d needs c >= 0")
            if self.batch_size % 4:
                raise ConfigError("gil_d needs a batch size divisible by 4")
        if self.model == "mlp" and len(self.hidden) < 1:
            raise ConfigError("MLP needs at least one hidden layer")
        return self


@dataclass
class TrainReport:
    variant: str
    seed: int
    iterations: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    td_errors: list = field(default_factory=list)
    evals: list = field(default_factory=list)  # (iteration, EvalResult)
    eval_times: list = field(default_factory=list)  # seconds since start at each eval
    final: Optional[EvalResult] = None
    best_iteration: Optional[int] = None
    best: Optional[EvalResult] = None
    best_model: object = None
    wall_clock: float = 0.0
    missing_rate: float = 0.0
    imputation_mse: Optional[float] = None


@dataclass
class InputWeightedModel:
    """Predictor ``x -> model(x * weighting(x))`` from the input-weighting ablation."""

    model: object
    weighting: MlpModel


# ------------------------------------------------------------------ helpers


def _seeds(seed):
    children = np.random.SeedSequence(seed).spawn(5)
    return {k: c for k, c in zip(("init", "data", "policy", "rl_init", "impute"), children)}


def _batches(ds, cfg, seed):
    if cfg.balanced or cfg.variant == "gil_d":
        return balanced_batch_iter(ds, cfg.batch_size, seed)
    return batch_iter(len(ds), cfg.batch_size, seed)


def _make_optimizer(cfg):
    return Optimizer(cfg.optimizer, cfg.lr, decay_steps=cfg.decay_steps, decay_rate=cfg.decay_rate)


def contrastive_distance(features):
    """Feature-separation term on a balanced batch laid out [positives | negatives].

    Cross-class MSE between matching quarter slices minus within-class MSE
    between the two quarters of each class.
    """
    features = np.asarray(features, dtype=np.float64)
    b = len(features)
    if b % 4:
        raise ConfigError("contrastive distance needs a batch size divisible by 4")
    half, quarter = b // 2, b // 4
    pos, neg = features[:half], features[half:]

    def mse(u, v):
        return float(np.mean((u - v) ** 2))

    return (mse(pos[:quarter], neg[:quarter]) + mse(pos[quarter:half], neg[quarter:half])
            - mse(pos[:quarter], pos[quarter:half]) - mse(neg[:quarter], neg[quarter:half]))


def impute(ds, imputer, means, rng=None, noise_scale=1.0, stds=None):
    """Imputed copy of the inputs: an array (tabular) or list of arrays (sequences)."""
    if imputer == "carry_forward":
        if not ds.is_sequence:
            raise ConfigError("carry-forward imputation needs sequence data")
        return [carry_forward(s, means) for s in ds.sequences]
    if ds.is_sequence:
        return [_impute_array(s, imputer, means, rng, noise_scale, stds) for s in ds.sequences]
    return _impute_array(ds.values, imputer, means, rng, noise_scale, stds)


def _impute_array(values, imputer, means, rng, noise_scale, stds):
    missing = np.isnan(values)
    if imputer == "zero":
        fill = np.zeros_like(values)
    elif imputer == "mean":
        fill = np.broadcast_to(means, values.shape)
    elif imputer == "noise_mean":
        fill = means + noise_scale * stds * rng.standard_normal(values.shape)
    else:
        raise ConfigError(f"unknown imputer {imputer!r}")
    return np.where(missing, fill, values)


def carry_forward(seq, means):
    """Fill each missing entry with the feature's last observed value, else its mean."""
    out = np.array(seq, dtype=np.float64)
    last = np.full(out.shape[1], np.nan)
    for t in range(len(out)):
        row = out[t]
        seen = ~np.isnan(row)
        last[seen] = row[seen]
        row[~seen] = np.where(np.isnan(last[~seen]), means[~seen], last[~seen])
    return out


def _observed_std(ds):
    vals = np.concatenate(ds.sequences) if ds.is_sequence else ds.values
    std = np.nanstd(vals, axis=0)
    return np.nan_to_num(std, nan=0.0)


# ------------------------------------------------------------- prediction


def predict_proba(model, inputs):
    """Class probabilities for an (n, d) array or a list of (T, d) sequences."""
    if isinstance(model, InputWeightedModel):
        if isinstance(inputs, list):
            weighted = [x * mlp_forward(model.weighting, x).output for x in inputs]
        else:
            weighted = inputs * _chunked_forward(model.weighting, inputs)
        return predict_proba(model.model, weighted)
    if isinstance(model, LstmModel):
        return np.vstack([lstm_forward(model, x).output for x in inputs])
    return _chunked_forward(model, inputs)


def _chunked_forward(model, x, chunk=2048):
    return np.vstack([mlp_forward(model, x[k:k + chunk]).output for k in range(0, len(x), chunk)])


def _eval(model, inputs, labels, cfg):
    probs = predict_proba(model, inputs)
    y = linalg.one_hot(labels, probs.shape[1])
    return evaluate(probs, labels, linalg.loss(cfg.loss, probs, y))


# ----------------------------------------------------------- RL plumbing


class _Importance:
    """Supplies importance vectors and feeds transitions back to the agent."""

    def __init__(self, cfg, d, state_dim, seeds):
        self.cfg = cfg
        self.d = d
        self.rng = np.random.default_rng(seeds["policy"])
        self.ac = None
        if cfg.variant in ("gil", "gil_d"):
            self.ac = make_actor_critic(
                state_dim, d, seeds["rl_init"], hidden=cfg.rl_hidden, actor_lr=cfg.actor_lr,
                critic_lr=cfg.critic_lr, optimizer=cfg.rl_optimizer, gamma=cfg.gamma,
                mixture=cfg.mixture, noise=cfg.noise, targets=cfg.targets, tau=cfg.tau,
                replay_capacity=cfg.replay_capacity, replay_batch=cfg.replay_batch,
            )

    @property
    def uses_rl(self):
        return self.ac is not None

    def act(self, states, masks):
        """Actions for the RL rows in ``states``; ``masks`` are the per-row indicators."""
        if self.cfg.variant == "gil_h":
            return masks
        actions, _ = behavioral(self.ac, states, self.rng)
        if self.cfg.force_importance == "ones":
            actions = np.ones_like(actions)
        elif self.cfg.force_importance == "mask":
            actions = masks.copy()
        return actions

    def learn(self, s, a, r, s_next):
        tr = Transition(s, a, r, s_next)
        return observe(self.ac, tr, self.rng)


def _rl_states(cfg, x, m, zeta, y_hat):
    """RL state rows: one per sample, or one summarising the batch."""
    if cfg.action_mode == "batch":
        return state_matrix(x[0], m[0], zeta.mean(axis=0), y_hat.mean(axis=0))
    return state_matrix(x, m, zeta, y_hat)


def _check_finite(value, report, what="training loss"):
    if not np.isfinite(value):
        err = TrainingDiverged(f"{what} became non-finite")
        err.report = report
        raise err


# --------------------------------------------------------------- MLP loop


def _init_mlp(cfg, d, num_classes, seeds):
    dims = [d] + list(cfg.hidden) + [num_classes]
    acts = [cfg.hidden_activation] * len(cfg.hidden) + ["softmax"]
    if len(dims) < 3:
        raise ConfigError("MLP needs at least one hidden layer")
    return mlp_init(dims, acts, seeds["init"])


def _init_weighting(cfg, d, seeds):
    dims = [d] + list(cfg.rl_hidden) + [d]
    acts = ["relu"] * len(cfg.rl_hidden) + ["sigmoid"]
    h = mlp_init(dims, acts, np.random.default_rng(seeds["rl_init"]).integers(2**63))
    if cfg.freeze_weighting:
        h.weights[-1][:] = 0.0
        # sigmoid(40) rounds to exactly 1.0 in float64
        h.biases[-1][:] = 40.0
    return h


def ablation_gradients(model, weighting, x, y, loss="cross_entropy"):
    """Loss and gradients of ``model(x * weighting(x))`` w.r.t. both networks."""
    h_cache = mlp_forward(weighting, x)
    cache = mlp_forward(model, x * h_cache.output)
    grads = mlp_backward(model, cache, y, loss)
    d_input = grads.deltas[0] @ model.weights[0]
    h_grads = mlp_backward_output_grad(weighting, h_cache, d_input * x)
    value = linalg.loss(loss, cache.output, y)
    return value, grads.dense(), h_grads.dense(), cache


def _run_mlp(train, evalset, cfg, callback=None):
    cfg.validate()
    start = time.perf_counter()
    seeds = _seeds(cfg.seed)
    n_classes = train.num_classes
    report = TrainReport(cfg.variant, cfg.seed, missing_rate=missing_rate(train))

    baseline = cfg.variant == "baseline"
    if baseline:
        means = train.column_means
        stds = _observed_std(train)
        rng_imp = np.random.default_rng(seeds["impute"])
        X = impute(train, cfg.imputer, means, rng_imp, cfg.noise_scale, stds)
        X_eval = impute(evalset, cfg.imputer, means, rng_imp, cfg.noise_scale, stds)
        if train.truth is not None and train.mask.min() == 0:
            report.imputation_mse = imputation_mse(X, train.truth, train.mask)
    else:
        X, X_eval = train.filled, evalset.filled
    M = train.mask
    Y = linalg.one_hot(train.labels, n_classes)
    d = train.d

    model = _init_mlp(cfg, d, n_classes, seeds)
    opt = _make_optimizer(cfg)
    ablation = cfg.variant == "ablation_input"
    weighting = h_opt = None
    if ablation:
        weighting = _init_weighting(cfg, d, seeds)
        h_opt = _make_optimizer(cfg)
    predictor = InputWeightedModel(model, weighting) if ablation else model

    weighted_importance = cfg.variant in ("gil", "gil_h", "gil_d")
    state_dim = 2 * d + cfg.hidden[0] + n_classes
    imp = _Importance(cfg, d, state_dim, seeds)

    batches = _batches(train, cfg, seeds["data"])
    idx = next(batches)
    cache = mlp_forward(model, X[idx])
    s = _rl_states(cfg, X[idx], M[idx], cache.features, cache.output) if imp.uses_rl else None

    for it in range(1, cfg.max_iter + 1):
        y = Y[idx]
        if ablation:
            batch_loss, dense, h_dense, cache = ablation_gradients(model, weighting, X[idx], y, cfg.loss)
        else:
            batch_loss = linalg.loss(cfg.loss, cache.output, y)
            grads = mlp_backward(model, cache, y, cfg.loss)
            dense = grads.dense()
        _check_finite(batch_loss, report)

        scales = None
        a = None
        if weighted_importance:
            a = imp.act(s, M[idx] if cfg.action_mode == "sample" else M[idx][:1])
            row_a = a if cfg.action_mode == "sample" else a[0]
            if cfg.importance_after_precondition:
                scales = [np.broadcast_to(np.atleast_2d(row_a).mean(axis=0), dense[0].shape)]
                scales += [None] * (len(dense) - 1)
            else:
                dense[0] = apply_importance(grads.deltas[0], grads.inputs[0], row_a)
        opt.step(model.params(), dense, scales)
        if ablation and not cfg.freeze_weighting:
            h_opt.step(weighting.params(), h_dense)

        report.iterations.append(it)
        report.train_loss.append(batch_loss)

        if imp.uses_rl:
            post = mlp_forward(model, X[idx])
            per_sample = linalg.loss_per_sample(cfg.loss, post.output, y)
            if cfg.action_mode == "sample":
                r = -per_sample
            else:
                r = np.array([-per_sample.mean()])
            if cfg.variant == "gil_d":
                r = r + cfg.c * contrastive_distance(post.features)
            report.rewards.append(float(np.mean(r)))

        idx_next = next(batches)
        cache = mlp_forward(model, X[idx_next])
        if imp.uses_rl:
            s_next = _rl_states(cfg, X[idx_next], M[idx_next], cache.features, cache.output)
            delta = imp.learn(s, a, r, s_next)
            report.td_errors.append(float(np.mean(np.abs(delta))))
            s = s_next
        idx = idx_next

        if callback is not None:
            callback(it, model)
        if it % cfg.eval_every == 0 or it == cfg.max_iter:
            _record_eval(report, it, predictor, X_eval, evalset.labels, cfg, start)

    report.wall_clock = time.perf_counter() - start
    return predictor, imp.ac, report


def _record_eval(report, it, predictor, inputs, labels, cfg, start):
    res = _eval(predictor, inputs, labels, cfg)
    report.evals.append((it, res))
    report.eval_times.append(time.perf_counter() - start)
    report.final = res
    if report.best is None or res.accuracy > report.best.accuracy:
        report.best, report.best_iteration = res, it
        report.best_model = _snapshot(predictor)


def _snapshot(predictor):
    if isinstance(predictor, InputWeightedModel):
        return InputWeightedModel(predictor.model.copy(), predictor.weighting.copy())
    return predictor.copy()


# -------------------------------------------------------------- LSTM loop


def _lstm_input_weight_grads(grads, xs_weighted):
    return {g: grads.gate_deltas[g].T @ xs_weighted for g in GATES}


def _lstm_input_grad(model, grads):
    """dE/dx_t for every step (rows)."""
    return sum(grads.gate_deltas[g] @ model.W[g] for g in GATES)


def _run_lstm(train, evalset, cfg, callback=None):
    cfg.validate()
    start = time.perf_counter()
    seeds = _seeds(cfg.seed)
    n_classes = train.num_classes
    report = TrainReport(cfg.variant, cfg.seed, missing_rate=missing_rate(train))

    baseline = cfg.variant == "baseline"
    if baseline:
        means = train.column_means
        stds = _observed_std(train)
        rng_imp = np.random.default_rng(seeds["impute"])
        X = impute(train, cfg.imputer, means, rng_imp, cfg.noise_scale, stds)
        X_eval = impute(evalset, cfg.imputer, means, rng_imp, cfg.noise_scale, stds)
        if train.truth is not None:
            mask = train.mask
            if min(m.min() for m in mask) == 0:
                report.imputation_mse = imputation_mse(X, train.truth, mask)
    else:
        X, X_eval = train.filled, evalset.filled
    M = train.mask
    d, e = train.d, cfg.lstm_hidden

    model = lstm_init(d, e, n_classes, seeds["init"])
    opt = _make_optimizer(cfg)
    ablation = cfg.variant == "ablation_input"
    weighting = h_opt = None
    if ablation:
        weighting = _init_weighting(cfg, d, seeds)
        h_opt = _make_optimizer(cfg)
    predictor = InputWeightedModel(model, weighting) if ablation else model

    weighted_importance = cfg.variant in ("gil", "gil_h", "gil_d")
    imp = _Importance(cfg, d, 2 * d + e + n_classes, seeds)

    def states_for(j, cache):
        T = cache.horizon
        y_hat = np.broadcast_to(cache.output, (T, n_classes))
        return state_matrix(X[j], M[j], cache.hiddens[1:], y_hat)

    def weighted_inputs(j):
        if not ablation:
            return X[j], None
        h_cache = mlp_forward(weighting, X[j])
        return X[j] * h_cache.output, h_cache

    batches = _batches(train, cfg, seeds["data"])
    idx = next(batches)
    caches = [lstm_forward(model, weighted_inputs(j)[0]) for j in idx]
    states = [states_for(j, c) for j, c in zip(idx, caches)] if imp.uses_rl else None

    for it in range(1, cfg.max_iter + 1):
        b = len(idx)
        acc = [np.zeros_like(p) for p in model.params()]
        h_acc = [np.zeros_like(p) for p in weighting.params()] if ablation else None
        losses, actions = [], []
        for k, j in enumerate(idx):
            y = linalg.one_hot([train.labels[j]], n_classes)[0]
            xs, h_cache = weighted_inputs(j)
            cache = caches[k]
            losses.append(linalg.loss(cfg.loss, cache.output, y))
            grads = lstm_backward(model, cache, y, cfg.loss)
            dense = grads.dense()
            if weighted_importance:
                a_t = imp.act(states[k], M[j]) if imp.uses_rl else M[j]
                if cfg.variant == "gil_h":
                    a_t = M[j]
                actions.append(a_t)
                if not cfg.importance_after_precondition:
                    w = _lstm_input_weight_grads(grads, apply_rows(X[j], a_t))
                    dense[:4] = [w[g] for g in GATES]
            if ablation:
                dx = _lstm_input_grad(model, grads)
                h_grads = mlp_backward_output_grad(weighting, h_cache, dx * X[j])
                for acc_p, g in zip(h_acc, h_grads.dense()):
                    acc_p += g * (len(X[j]) / b)
            for acc_p, g in zip(acc, dense):
                acc_p += g / b
        batch_loss = float(np.mean(losses))
        _check_finite(batch_loss, report)
        scales = None
        if weighted_importance and cfg.importance_after_precondition:
            col = np.concatenate(actions).mean(axis=0)
            scales = [np.broadcast_to(col, p.shape) for p in acc[:4]] + [None] * (len(acc) - 4)
        opt.step(model.params(), acc, scales)
        if ablation and not cfg.freeze_weighting:
            h_opt.step(weighting.params(), h_acc)
        report.iterations.append(it)
        report.train_loss.append(batch_loss)

        if imp.uses_rl:
            post = [lstm_forward(model, X[j]) for j in idx]
            rewards = np.array([
                -linalg.loss(cfg.loss, c.output, linalg.one_hot([train.labels[j]], n_classes)[0])
                for j, c in zip(idx, post)
            ])
            if cfg.variant == "gil_d":
                rewards = rewards + cfg.c * contrastive_distance(np.vstack([c.hiddens[-1] for c in post]))
            report.rewards.append(float(rewards.mean()))

        idx_next = next(batches)
        caches = [lstm_forward(model, weighted_inputs(j)[0]) for j in idx_next]
        if imp.uses_rl:
            next_states = [states_for(j, c) for j, c in zip(idx_next, caches)]
            s_rows, a_rows, r_rows, s2_rows = [], [], [], []
            for k, j in enumerate(idx):
                post_states = states_for(j, post[k])
                s2 = np.vstack([post_states[1:], next_states[k][:1]])
                s_rows.append(states[k])
                a_rows.append(actions[k])
                r_rows.append(np.full(len(states[k]), rewards[k]))
                s2_rows.append(s2)
            delta = imp.learn(np.vstack(s_rows), np.vstack(a_rows), np.concatenate(r_rows),
                              np.vstack(s2_rows))
            report.td_errors.append(float(np.mean(np.abs(delta))))
            states = next_states
        idx = idx_next

        if callback is not None:
            callback(it, model)
        if it % cfg.eval_every == 0 or it == cfg.max_iter:
            _record_eval(report, it, predictor, X_eval, evalset.labels, cfg, start)

    report.wall_clock = time.perf_counter() - start
    return predictor, imp.ac, report


def apply_rows(xs, a):
    a = np.asarray(a, dtype=np.float64)
    if a.size and (a.min() < 0.0 or a.max() > 1.0):
        raise ValueError("importance entries must lie in [0, 1]")
    return xs * a


# ------------------------------------------------------------ public API


def _run(train, evalset, cfg, callback):
    if train.placeholder != cfg.placeholder:
        train = replace(train, placeholder=cfg.placeholder)
    if evalset.placeholder != cfg.placeholder:
        evalset = replace(evalset, placeholder=cfg.placeholder)
    if train.is_sequence != (cfg.model == "lstm"):
        cfg = replace(cfg, model="lstm" if train.is_sequence else "mlp")
    if train.is_sequence:
        return _run_lstm(train, evalset, cfg, callback)
    return _run_mlp(train, evalset, cfg, callback)


def train_gil(train, evalset, cfg, callback=None):
    """Importance learned on the fly by the actor-critic agent."""
    cfg = replace(cfg, variant="gil")
    return _run(train, evalset, cfg, callback)


def train_gil_h(train, evalset, cfg, callback=None):
    """Heuristic importance: the missing indicator itself."""
    model, _, report = _run(train, evalset, replace(cfg, variant="gil_h"), callback)
    return model, report


def train_gil_d(train, evalset, cfg, callback=None):
    """Importance learning with the contrastive feature-separation reward."""
    if train.num_classes != 2:
        raise ConfigError("gil_d needs binary labels")
    return _run(train, evalset, replace(cfg, variant="gil_d"), callback)


def train_ablation_input(train, evalset, cfg, callback=None):
    """Weights the inputs with a jointly trained network instead of the gradients."""
    model, _, report = _run(train, evalset, replace(cfg, variant="ablation_input"), callback)
    return model, report


def train_baseline(train, evalset, cfg, callback=None):
    """Impute, then train the same architecture with plain gradient steps."""
    if cfg.imputer == "carry_forward" and not train.is_sequence:
        raise ConfigError("carry-forward imputation needs sequence data")
    model, _, report = _run(train, evalset, replace(cfg, variant="baseline"), callback)
    return model, report, report.imputation_mse


def train(train_ds, eval_ds, cfg, callback=None):
    """Dispatch on ``cfg.variant``; returns (model, actor_critic_or_None, report)."""
    if cfg.variant == "gil_d" and train_ds.num_classes != 2:
        raise ConfigError("gil_d needs binary labels")
    if cfg.variant == "baseline" and cfg.imputer == "carry_forward" and not train_ds.is_sequence:
        raise ConfigError("carry-forward imputation needs sequence data")
    return _run(train_ds, eval_ds, cfg, callback)

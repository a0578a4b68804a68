"""Deterministic actor-critic machinery for learning gradient importance.

States are flat vectors laid out as ``[x_filled | m | zeta | y_hat]``; the
actor maps a state to an importance vector in (0, 1)^d and the critic scores
(state, action) pairs.  All functions accept one state per row.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .models import (
    MlpModel,
    backprop,
    input_grad,
    mlp_backward_output_grad,
    mlp_forward,
    mlp_init,
)
from .optim import Optimizer

BRANCH_ACTOR, BRANCH_MASK, BRANCH_RANDOM = 0, 1, 2


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class GilState:
    x_filled: np.ndarray
    m: np.ndarray
    zeta: np.ndarray
    y_hat: np.ndarray

    @property
    def vector(self):
        return np.concatenate([self.x_filled, self.m, self.zeta, self.y_hat], axis=-1)


def state_matrix(x_filled, m, zeta, y_hat):
    """Row-wise state vectors for a batch (1-D inputs give a single row)."""
    parts = [np.atleast_2d(np.asarray(p, dtype=np.float64)) for p in (x_filled, m, zeta, y_hat)]
    return np.hstack(parts)


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray

    def __post_init__(self):
        self.s, self.a, self.s_next = (np.atleast_2d(v) for v in (self.s, self.a, self.s_next))
        self.r = np.atleast_1d(np.asarray(self.r, dtype=np.float64))
        if not np.all(np.isfinite(self.r)):
            raise TrainingDiverged("non-finite reward")


class ReplayBuffer:
    """Fixed-capacity ring buffer, sampled uniformly with replacement."""

    def __init__(self, capacity, state_dim, action_dim):
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, state_dim))
        self.a = np.zeros((self.capacity, action_dim))
        self.r = np.zeros(self.capacity)
        self.s_next = np.zeros((self.capacity, state_dim))
        self.size = 0
        self.cursor = 0

    def __len__(self):
        return self.size

    def push(self, tr):
        for k in range(len(tr.r)):
            c = self.cursor
            self.s[c], self.a[c], self.r[c], self.s_next[c] = tr.s[k], tr.a[k], tr.r[k], tr.s_next[k]
            self.cursor = (c + 1) % self.capacity
            self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, k):
        if self.size == 0:
            raise IndexError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=k)
        return Transition(self.s[idx], self.a[idx], self.r[idx], self.s_next[idx])


@dataclass
class ActorCritic:
    actor: MlpModel
    critic: MlpModel
    action_dim: int
    actor_opt: Optimizer
    critic_opt: Optimizer
    gamma: float = 0.99
    mixture: tuple = (0.8, 0.1, 0.1)
    noise: float = 0.1
    tau: float = 0.005
    target_actor: Optional[MlpModel] = None
    target_critic: Optional[MlpModel] = None
    replay: Optional[ReplayBuffer] = None
    replay_batch: int = 64

    def __post_init__(self):
        p = np.asarray(self.mixture, dtype=np.float64)
        if p.shape != (3,) or (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("mixture must be three non-negative probabilities summing to 1")

    @property
    def state_dim(self):
        return self.actor.weights[0].shape[1]


def make_actor_critic(state_dim, action_dim, seed, hidden=(256, 256), actor_lr=1e-4,
                      critic_lr=1e-3, optimizer="adam", gamma=0.99, mixture=(0.8, 0.1, 0.1),
                      noise=0.1, targets=False, tau=0.005, replay_capacity=0, replay_batch=64):
    rng = np.random.default_rng(seed)
    hidden = list(hidden)
    acts = ["relu"] * len(hidden)
    actor = mlp_init([state_dim] + hidden + [action_dim], acts + ["sigmoid"], rng.integers(2**63))
    critic = mlp_init([state_dim + action_dim] + hidden + [1], acts + ["identity"],
                      rng.integers(2**63))
    # small final layers keep initial actions near 0.5 and Q near 0
    actor.weights[-1] *= 0.1
    critic.weights[-1] *= 0.1
    ac = ActorCritic(
        actor, critic, action_dim,
        Optimizer(optimizer, actor_lr), Optimizer(optimizer, critic_lr),
        gamma=gamma, mixture=tuple(mixture), noise=noise, tau=tau, replay_batch=replay_batch,
    )
    if targets:
        ac.target_actor, ac.target_critic = actor.copy(), critic.copy()
    if replay_capacity:
        ac.replay = ReplayBuffer(replay_capacity, state_dim, action_dim)
    return ac


def actor_forward(ac, s, actor=None):
    return mlp_forward(actor or ac.actor, np.atleast_2d(s)).output


def critic_forward(ac, s, a, critic=None):
    sa = np.hstack([np.atleast_2d(s), np.atleast_2d(a)])
    return mlp_forward(critic or ac.critic, sa).output[:, 0]


def mask_from_state(ac, s):
    d = ac.action_dim
    return np.atleast_2d(s)[:, d:2 * d]


def behavioral(ac, s, rng):
    """Mixture behaviour policy: noisy actor output, the missing indicator, or
    a uniform random action.  Returns (actions, branch ids).

    The random stream is consumed identically whatever branches are drawn.
    """
    s = np.atleast_2d(s)
    n, d = len(s), ac.action_dim
    branch = rng.choice(3, size=n, p=np.asarray(ac.mixture, dtype=np.float64))
    noise = rng.standard_normal((n, d))
    uniform = rng.random((n, d))
    out = np.empty((n, d))
    pick = branch == BRANCH_ACTOR
    if pick.any():
        pi = actor_forward(ac, s[pick])
        if ac.noise > 0:
            pi = np.clip(pi + ac.noise * noise[pick], 0.0, 1.0)
        out[pick] = pi
    pick = branch == BRANCH_MASK
    if pick.any():
        out[pick] = mask_from_state(ac, s[pick])
    pick = branch == BRANCH_RANDOM
    out[pick] = uniform[pick]
    return out, branch


def critic_action_grad(ac, s, a):
    """dQ/da per row."""
    sa = np.hstack([np.atleast_2d(s), np.atleast_2d(a)])
    cache = mlp_forward(ac.critic, sa)
    grads = backprop(ac.critic, cache, np.ones((len(sa), 1)))
    return input_grad(ac.critic, grads)[:, -ac.action_dim:]


def td_errors(ac, tr):
    actor = ac.target_actor or ac.actor
    critic = ac.target_critic or ac.critic
    q_next = critic_forward(ac, tr.s_next, actor_forward(ac, tr.s_next, actor), critic)
    return tr.r + ac.gamma * q_next - critic_forward(ac, tr.s, tr.a)


def _soft_update(target, source, tau):
    for pt, ps in zip(target.params(), source.params()):
        pt *= 1.0 - tau
        pt += tau * ps


def update(ac, tr):
    """One joint actor-critic step on a batch of transitions; returns the TD errors.

    Critic: semi-gradient step on 0.5 * delta^2 (nu += lr * delta * dQ/dnu).
    Actor: ascend dQ/da at a = pi(s), chained through the actor.  Both
    gradients use the pre-update parameters.
    """
    s, a = tr.s, tr.a
    n = len(tr.r)
    actor = ac.target_actor or ac.actor
    critic = ac.target_critic or ac.critic
    q_next = critic_forward(ac, tr.s_next, actor_forward(ac, tr.s_next, actor), critic)
    cache_c = mlp_forward(ac.critic, np.hstack([s, a]))
    delta = tr.r + ac.gamma * q_next - cache_c.output[:, 0]
    if not np.all(np.isfinite(delta)):
        raise TrainingDiverged("TD error is not finite")
    critic_grads = backprop(ac.critic, cache_c, -delta.reshape(n, 1)).dense()

    cache_a = mlp_forward(ac.actor, s)
    dq_da = critic_action_grad(ac, s, cache_a.output)
    actor_grads = mlp_backward_output_grad(ac.actor, cache_a, -dq_da).dense()

    ac.critic_opt.step(ac.critic.params(), critic_grads)
    ac.actor_opt.step(ac.actor.params(), actor_grads)
    if ac.target_actor is not None:
        _soft_update(ac.target_actor, ac.actor, ac.tau)
        _soft_update(ac.target_critic, ac.critic, ac.tau)
    return delta


def observe(ac, tr, rng):
    """Feed fresh transitions: update on them directly, or via the replay buffer."""
    if ac.replay is None:
        return update(ac, tr)
    ac.replay.push(tr)
    return update(ac, ac.replay.sample(rng, ac.replay_batch))

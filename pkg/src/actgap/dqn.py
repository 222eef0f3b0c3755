"""DQN with replay and a target network, in unmodified or oracle mode.

The oracle form of the update folds the similarity matrix into the loss:
every output head of a sampled state is regressed onto that sample's TD
target, weighted by its similarity to the action actually taken. One
backward pass therefore updates all similar heads at once. With an identity
matrix the loss reduces exactly to the usual single-head squared TD error.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .augmentation import AugmentedEnv, SimilarityMatrix, identity_similarity
from .curves import LearningCurve
from .nn import (Mlp, OptimizerState, adam_step, backward, clip_grad_norm, clone_parameters,
                 forward, mlp_init)
from .qcore import AgentHyperparams, Transition, epsilon_at, greedy_action
from .seeding import derive_seed, make_rng

log = logging.getLogger(__name__)

DEFAULT_DQN_HYPERPARAMS = AgentHyperparams(alpha=5e-4, gamma=0.99, epsilon_start=1.0,
                                           epsilon_end=0.05, epsilon_decay_steps=10_000)


@dataclass
class DqnConfig:
    hyperparams: AgentHyperparams = DEFAULT_DQN_HYPERPARAMS
    batch_size: int = 64
    replay_capacity: int = 50_000
    learning_starts: int = 1_000
    target_sync_interval: int = 500
    train_interval: int = 1
    oracle: bool = False
    k: Optional[SimilarityMatrix] = None
    hidden: Tuple[int, ...] = (128, 128)
    grad_clip: float = 10.0
    normalize_by_clique: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("batch_size", "replay_capacity", "learning_starts",
                     "target_sync_interval", "train_interval"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.batch_size > self.replay_capacity:
            raise ValueError("batch_size cannot exceed replay_capacity")
        if self.oracle and self.k is None:
            raise ValueError("oracle mode needs a similarity matrix")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions stored as parallel arrays."""

    def __init__(self, capacity: int, obs_dim: int, dtype=np.float64):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=dtype)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=dtype)
        self.terminals = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, obs, action: int, reward: float, next_obs, terminal: bool) -> None:
        i = self.cursor
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.terminals[i] = terminal
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ordered_indices(self) -> np.ndarray:
        """Storage indices from oldest to newest."""
        start = self.cursor if self.size == self.capacity else 0
        return (start + np.arange(self.size)) % self.capacity

    def sample(self, rng: np.random.Generator, batch_size: int) -> "Batch":
        idx = rng.integers(self.size, size=batch_size)
        return Batch(self.obs[idx], self.actions[idx], self.rewards[idx],
                     self.next_obs[idx], self.terminals[idx])


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    terminals: np.ndarray

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition], dtype=np.float64) -> "Batch":
        return cls(
            np.array([t.s for t in transitions], dtype=dtype),
            np.array([t.a for t in transitions], dtype=np.int64),
            np.array([t.r for t in transitions], dtype=dtype),
            np.array([t.s_next for t in transitions], dtype=dtype),
            np.array([t.terminal for t in transitions], dtype=bool),
        )

    def __len__(self):
        return len(self.actions)


def compute_targets(batch: Batch, target_net: Mlp, gamma: float) -> np.ndarray:
    """``r`` for terminal samples, ``r + gamma * max_b Q_target(s', b)`` otherwise."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    next_q = forward(target_net, batch.next_obs)[0]
    boot = batch.rewards + gamma * next_q.max(axis=1)
    return np.where(batch.terminals, batch.rewards, boot)


def weighted_td_loss(q_outputs: np.ndarray, actions: np.ndarray, targets: np.ndarray,
                     k, normalize_by_clique: bool = False) -> Tuple[float, np.ndarray]:
    """Similarity-weighted squared TD error and its gradient w.r.t. ``q_outputs``.

    loss = (1/B) sum_i sum_b K[a_i, b] (y_i - Q(s_i, b))^2

    ``k`` may be a :class:`SimilarityMatrix` or a plain array.
    """
    kmat = k.entries if isinstance(k, SimilarityMatrix) else np.asarray(k)
    q = np.asarray(q_outputs)
    batch = q.shape[0]
    if kmat.shape != (q.shape[1], q.shape[1]):
        raise ValueError(f"similarity matrix shape {kmat.shape} does not match {q.shape[1]} heads")
    w = kmat[actions]
    if normalize_by_clique:
        w = w / w.sum(axis=1, keepdims=True)
    diff = q - targets[:, None]
    wdiff = w * diff
    loss = (wdiff * diff).sum(axis=1).sum() / batch
    grad = np.where(w != 0.0, (2.0 / batch) * wdiff, 0.0).astype(q.dtype, copy=False)
    return float(loss), grad


def agent_act(net: Mlp, obs, epsilon: float, rng: np.random.Generator) -> int:
    n_actions = net.layer_dims[-1]
    if rng.random() < epsilon:
        return int(rng.integers(n_actions))
    return greedy_action(forward(net, obs)[0], rng)


class DqnLearner:
    """Online/target networks plus optimizer state; one instance per run."""

    def __init__(self, obs_dim: int, action_count: int, config: DqnConfig, init_seed: int):
        self.config = config
        self.dtype = np.dtype(config.dtype)
        self.net = mlp_init([obs_dim, *config.hidden, action_count], init_seed, dtype=self.dtype)
        self.target = clone_parameters(self.net)
        self.opt = OptimizerState.for_mlp(self.net, learning_rate=config.hyperparams.alpha)
        k = config.k if config.oracle else identity_similarity(action_count)
        if k.size != action_count:
            raise ValueError(f"similarity matrix size {k.size} != action count {action_count}")
        self.k = k.entries.astype(self.dtype)
        self.updates = 0

    def train_step(self, batch: Batch) -> float:
        y = compute_targets(batch, self.target, self.config.hyperparams.gamma)
        q, cache = forward(self.net, batch.obs)
        loss, g = weighted_td_loss(q, batch.actions, y, self.k, self.config.normalize_by_clique)
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite TD loss at update {self.updates}")
        grad = backward(self.net, cache, g)
        grad, _ = clip_grad_norm(grad, self.config.grad_clip)
        flat, self.opt = adam_step(self.net.flat, grad, self.opt)
        self.net.flat[...] = flat
        self.updates += 1
        return loss

    def sync_target(self) -> None:
        self.target = clone_parameters(self.net)


def train_dqn(env: AugmentedEnv, config: DqnConfig, budget: int, seed: int,
              on_episode: Optional[Callable[[LearningCurve], None]] = None
              ) -> Tuple[LearningCurve, Mlp]:
    """Run DQN for ``budget`` environment steps; return the curve and final network.

    Sub-streams for episode resets, exploration, network init and replay
    sampling are all derived from ``seed``. ``on_episode`` receives the curve
    after each completed episode.
    """
    spec = env.spec
    action_count = env.action_count
    learner = DqnLearner(spec.obs_dim, action_count, config, derive_seed(seed, "init"))
    hp = config.hyperparams
    env_rng = make_rng(seed, "env")
    explore_rng = make_rng(seed, "explore")
    replay_rng = make_rng(seed, "replay")
    buffer = ReplayBuffer(config.replay_capacity, spec.obs_dim, dtype=learner.dtype)
    curve = LearningCurve()

    t = 0
    while t < budget:
        obs = env.reset(int(env_rng.integers(2**63)))
        ep_return = 0.0
        losses: List[float] = []
        while True:
            eps = epsilon_at(hp, t)
            a = agent_act(learner.net, obs, eps, explore_rng)
            res = env.step(a)
            buffer.add(obs, a, res.reward, res.observation, res.terminated)
            ep_return += res.reward
            obs = res.observation
            t += 1
            if (t >= config.learning_starts and t % config.train_interval == 0
                    and len(buffer) >= config.batch_size):
                losses.append(learner.train_step(buffer.sample(replay_rng, config.batch_size)))
            if t % config.target_sync_interval == 0:
                learner.sync_target()
            if res.terminated or res.truncated:
                loss_mean = float(np.mean(losses)) if losses else None
                curve.append(t, ep_return, eps, loss_mean)
                if on_episode is not None:
                    on_episode(curve)
                break
            if t >= budget:
                break
    log.debug("dqn run seed=%d finished: %d episodes, %d updates", seed, len(curve),
              learner.updates)
    return curve, learner.net

"""Tabular Q-learning with the similarity-weighted oracle update.

For an experience ``(s, a, r, s')`` the oracle moves every action value of
state ``s`` toward the same TD target, scaled by how similar each action is
to the one that was taken::

    Q(s, b) += alpha * K[a, b] * (target - Q(s, b))    for every action b

With an identity ``K`` this is ordinary Q-learning.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .augmentation import AugmentedEnv, SimilarityMatrix
from .curves import LearningCurve
from .seeding import make_rng


@dataclass(frozen=True)
class AgentHyperparams:
    alpha: float = 0.1
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 1000

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.epsilon_start < self.epsilon_end:
            raise ValueError("epsilon_start must be >= epsilon_end")
        if self.epsilon_decay_steps < 1:
            raise ValueError("epsilon_decay_steps must be positive")


@dataclass(frozen=True)
class Transition:
    s: object
    a: int
    r: float
    s_next: object
    terminal: bool


class TabularQ:
    def __init__(self, state_count: int, action_count: int, values: Optional[np.ndarray] = None):
        if state_count < 1 or action_count < 1:
            raise ValueError("state_count and action_count must be positive")
        self.state_count = state_count
        self.action_count = action_count
        if values is None:
            values = np.zeros((state_count, action_count))
        elif values.shape != (state_count, action_count):
            raise ValueError(f"values shape {values.shape} != {(state_count, action_count)}")
        self.values = values

    def copy(self) -> "TabularQ":
        return TabularQ(self.state_count, self.action_count, self.values.copy())

    def greedy_policy(self) -> np.ndarray:
        return np.argmax(self.values, axis=1)


def oracle_q_update(q: TabularQ, t: Transition, k: SimilarityMatrix,
                    hp: AgentHyperparams) -> TabularQ:
    """Apply one oracle update to ``q`` in place and return it.

    The bootstrap ``max_b Q(s', b)`` is read before any entry changes, so all
    actions move toward one shared target.
    """
    if k.size != q.action_count:
        raise ValueError(f"similarity matrix size {k.size} != action count {q.action_count}")
    if not 0 <= t.a < q.action_count:
        raise ValueError(f"action {t.a} out of range for {q.action_count} actions")
    target = t.r if t.terminal else t.r + hp.gamma * q.values[t.s_next].max()
    row = q.values[t.s]
    row += hp.alpha * k.entries[t.a] * (target - row)
    return q


def greedy_action(values, rng: np.random.Generator) -> int:
    """Argmax with exact ties broken uniformly at random."""
    v = np.asarray(values)
    if v.size == 0:
        raise ValueError("no action values")
    best = np.flatnonzero(v == v.max())
    if best.size == 1:
        return int(best[0])
    return int(best[rng.integers(best.size)])


def epsilon_at(hp: AgentHyperparams, step: int) -> float:
    """Linear decay from ``epsilon_start`` to ``epsilon_end``, then flat."""
    if step >= hp.epsilon_decay_steps:
        return hp.epsilon_end
    frac = step / hp.epsilon_decay_steps
    return hp.epsilon_start + frac * (hp.epsilon_end - hp.epsilon_start)


def train_tabular(env: AugmentedEnv, k: SimilarityMatrix, hp: AgentHyperparams, budget: int,
                  seed: int, on_update=None, return_q: bool = False):
    """Epsilon-greedy tabular training with the oracle update on every step.

    ``env`` must wrap an environment with enumerable states (it needs
    ``n_states`` and ``state_key``). ``on_update(q, transition)`` is called
    after every update when given. Returns the learning curve, or
    ``(curve, q)`` with ``return_q``.
    """
    base = env.base
    if not hasattr(base, "n_states") or not hasattr(base, "state_key"):
        raise TypeError(f"{type(base).__name__} has no enumerable state space")
    if k.size != env.action_count:
        raise ValueError(f"similarity matrix size {k.size} != action count {env.action_count}")

    q = TabularQ(base.n_states, env.action_count)
    env_rng = make_rng(seed, "env")
    explore_rng = make_rng(seed, "explore")
    curve = LearningCurve()

    t = 0
    while t < budget:
        obs = env.reset(int(env_rng.integers(2**63)))
        s = base.state_key(obs)
        ep_return = 0.0
        while True:
            eps = epsilon_at(hp, t)
            if explore_rng.random() < eps:
                a = int(explore_rng.integers(env.action_count))
            else:
                a = greedy_action(q.values[s], explore_rng)
            res = env.step(a)
            s_next = base.state_key(res.observation)
            tr = Transition(s, a, res.reward, s_next, res.terminated)
            oracle_q_update(q, tr, k, hp)
            if on_update is not None:
                on_update(q, tr)
            ep_return += res.reward
            t += 1
            s = s_next
            if res.terminated or res.truncated:
                curve.append(t, ep_return, eps)
                break
            if t >= budget:
                break
    return (curve, q) if return_q else curve

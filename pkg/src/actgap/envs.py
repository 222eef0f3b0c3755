"""Seeded classic-control environments with magnitude-scaled discrete actions.

Every environment is stepped with an :class:`ActionRealization`: a base
action index plus a magnitude in ``[0, 1]`` that scales the applied
force/torque. Magnitude 1 is the unscaled action and magnitude 0 applies no
control at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class EpisodeFinishedError(RuntimeError):
    """Raised when stepping an episode that already terminated or was truncated."""


@dataclass(frozen=True)
class EnvSpec:
    obs_dim: int
    base_action_count: int
    reward_threshold: float
    max_episode_steps: int

    def __post_init__(self):
        if self.obs_dim < 1:
            raise ValueError("obs_dim must be positive")
        if self.base_action_count < 2:
            raise ValueError("an environment needs at least 2 base actions")
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be >= 1")


@dataclass(frozen=True)
class ActionRealization:
    base_action: int
    magnitude: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.magnitude <= 1.0:
            raise ValueError(f"magnitude must lie in [0, 1], got {self.magnitude}")
        if self.base_action < 0:
            raise ValueError(f"base_action must be non-negative, got {self.base_action}")


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool

    @property
    def done(self) -> bool:
        return self.terminated or self.truncated


class Env:
    """Shared episode bookkeeping; subclasses implement ``_reset`` and ``_advance``."""

    spec: EnvSpec

    def __init__(self):
        self.steps = 0
        self._active = False

    def reset(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.steps = 0
        self._active = True
        self._reset(rng)
        return self.observation()

    def step(self, realization: ActionRealization) -> StepResult:
        if not self._active:
            raise EpisodeFinishedError(
                f"{type(self).__name__}.step called on a finished episode; call reset first")
        if realization.base_action >= self.spec.base_action_count:
            raise ValueError(
                f"base action {realization.base_action} out of range for "
                f"{self.spec.base_action_count} actions")
        reward, terminated = self._advance(realization)
        self.steps += 1
        truncated = not terminated and self.steps >= self.spec.max_episode_steps
        if terminated or truncated:
            self._active = False
        return StepResult(self.observation(), reward, terminated, truncated)

    @property
    def active(self) -> bool:
        return self._active

    def observation(self) -> np.ndarray:
        raise NotImplementedError

    def _reset(self, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def _advance(self, realization: ActionRealization):
        raise NotImplementedError


class CartPole(Env):
    """Cart-pole balancing. Action 0 pushes left, action 1 pushes right."""

    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    total_mass = masspole + masscart
    length = 0.5  # half the pole length
    polemass_length = masspole * length
    force_mag = 10.0
    tau = 0.02
    theta_threshold_radians = 12 * 2 * math.pi / 360
    x_threshold = 2.4

    def __init__(self, max_episode_steps: int = 500, reward_threshold: float = 475.0):
        super().__init__()
        self.spec = EnvSpec(4, 2, reward_threshold, max_episode_steps)
        self.state = (0.0, 0.0, 0.0, 0.0)

    def _reset(self, rng):
        self.state = tuple(float(v) for v in rng.uniform(-0.05, 0.05, size=4))

    def observation(self):
        return np.array(self.state)

    def _advance(self, realization):
        x, x_dot, theta, theta_dot = self.state
        force = self.force_mag if realization.base_action == 1 else -self.force_mag
        if realization.magnitude == 0.0:
            force = 0.0
        elif realization.magnitude != 1.0:
            force = force * realization.magnitude
        costheta = math.cos(theta)
        sintheta = math.sin(theta)
        temp = (force + self.polemass_length * theta_dot * theta_dot * sintheta) / self.total_mass
        thetaacc = (self.gravity * sintheta - costheta * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * costheta * costheta / self.total_mass))
        xacc = temp - self.polemass_length * thetaacc * costheta / self.total_mass
        x = x + self.tau * x_dot
        x_dot = x_dot + self.tau * xacc
        theta = theta + self.tau * theta_dot
        theta_dot = theta_dot + self.tau * thetaacc
        self.state = (x, x_dot, theta, theta_dot)
        terminated = (x < -self.x_threshold or x > self.x_threshold
                      or theta < -self.theta_threshold_radians
                      or theta > self.theta_threshold_radians)
        return 1.0, terminated


def normalize_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    out = math.fmod(theta + math.pi, 2.0 * math.pi)
    if out <= 0.0:
        out += 2.0 * math.pi
    return out - math.pi


class Pendulum(Env):
    """Torque-limited pendulum swing-up with a discrete torque set.

    theta = 0 is upright. The observation is (cos theta, sin theta, theta_dot).
    """

    max_speed = 8.0
    max_torque = 2.0
    dt = 0.05
    g = 10.0
    m = 1.0
    l = 1.0

    def __init__(self, torques: Optional[Sequence[float]] = None,
                 max_episode_steps: int = 200, reward_threshold: float = -200.0):
        super().__init__()
        if torques is None:
            torques = (-self.max_torque, 0.0, self.max_torque)
        self.torques = tuple(float(u) for u in torques)
        if any(abs(u) > self.max_torque for u in self.torques):
            raise ValueError(f"torques must lie within +-{self.max_torque}")
        self.spec = EnvSpec(3, len(self.torques), reward_threshold, max_episode_steps)
        self.state = (0.0, 0.0)

    def _reset(self, rng):
        theta, theta_dot = rng.uniform([-math.pi, -1.0], [math.pi, 1.0])
        self.state = (float(theta), float(theta_dot))

    def observation(self):
        theta, theta_dot = self.state
        return np.array([math.cos(theta), math.sin(theta), theta_dot])

    def _advance(self, realization):
        theta, theta_dot = self.state
        u = self.torques[realization.base_action]
        if realization.magnitude == 0.0:
            u = 0.0
        elif realization.magnitude != 1.0:
            u = u * realization.magnitude
        cost = normalize_angle(theta) ** 2 + 0.1 * theta_dot ** 2 + 0.001 * u ** 2
        new_theta_dot = theta_dot + (
            3.0 * self.g / (2.0 * self.l) * math.sin(theta) + 3.0 / (self.m * self.l ** 2) * u
        ) * self.dt
        new_theta_dot = min(max(new_theta_dot, -self.max_speed), self.max_speed)
        new_theta = theta + new_theta_dot * self.dt
        self.state = (new_theta, new_theta_dot)
        return -cost, False


class ChainMDP(Env):
    """Deterministic corridor of ``n`` states with one-hot observations.

    Action 0 moves left (blocked by the wall at state 0), action 1 moves
    right. The rightmost state is the goal: any action taken there pays 1 and
    ends the episode. All other transitions pay 0. Episodes start in state
    ``n // 2``.

    Magnitude 0 is a no-op: the agent stays put and collects nothing, even on
    the goal. Any positive magnitude acts like the full action.
    """

    def __init__(self, n: int = 5, max_episode_steps: int = 50):
        super().__init__()
        if n < 2:
            raise ValueError("chain needs at least 2 states")
        self.n = n
        self.spec = EnvSpec(n, 2, 1.0, max_episode_steps)
        self.position = n // 2

    @property
    def n_states(self) -> int:
        return self.n

    def state_key(self, observation) -> int:
        return int(np.argmax(observation))

    def _reset(self, rng):
        self.position = self.n // 2

    def observation(self):
        obs = np.zeros(self.n)
        obs[self.position] = 1.0
        return obs

    def transition(self, state: int, action: int):
        """(next_state, reward, terminal) for a full-magnitude action."""
        if state == self.n - 1:
            return state, 1.0, True
        if action == 1:
            return state + 1, 0.0, False
        return max(state - 1, 0), 0.0, False

    def _advance(self, realization):
        if realization.magnitude == 0.0:
            return 0.0, False
        nxt, reward, terminal = self.transition(self.position, realization.base_action)
        self.position = nxt
        return reward, terminal


def chain_optimal_q(chain: ChainMDP, gamma: float, tol: float = 1e-12,
                    max_sweeps: int = 1_000_000) -> np.ndarray:
    """Optimal Q table of ``chain`` by value iteration to sup-norm change < ``tol``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    n, n_actions = chain.n, chain.spec.base_action_count
    q = np.zeros((n, n_actions))
    for _ in range(max_sweeps):
        new = np.empty_like(q)
        for s in range(n):
            for a in range(n_actions):
                s2, r, terminal = chain.transition(s, a)
                new[s, a] = r if terminal else r + gamma * q[s2].max()
        delta = np.max(np.abs(new - q))
        q = new
        if delta < tol:
            return q
    raise RuntimeError(f"value iteration did not converge within {max_sweeps} sweeps")


ENVIRONMENTS = {
    "cartpole": CartPole,
    "pendulum": Pendulum,
    "chain": ChainMDP,
}


def make_env(key: str, **kwargs) -> Env:
    try:
        cls = ENVIRONMENTS[key]
    except KeyError:
        raise ValueError(f"unknown environment {key!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls(**kwargs)

"""Deterministic toy constrained environments, trajectories, and rollouts.

Two desk-scale environments with per-step binary costs:

* ``ChainRun`` -- a 1-D runner. Action a in [-1, 1] maps to speed
  v = (a+1)/2; reward is v and a step costs 1 whenever v > 0.5. The
  constrained optimum is analytic (run at v=1 on as many steps as the
  budget allows, v=0.5 otherwise).
* ``GridCircle`` -- a 2-D agent rewarded for circling the origin
  counter-clockwise while staying inside the radial band [0.5, 1.5].

Both expose normalized time tau = t/T as the last state component so that
learners see a bounded clock.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, ContractError

ActionSource = Callable[[np.ndarray, int], "np.ndarray | float"]

CHAIN_RUN = "ChainRun"
GRID_CIRCLE = "GridCircle"


@dataclass(frozen=True)
class EnvSpec:
    name: str
    episode_length: int
    state_dim: int
    action_dim: int
    discount: float = 1.0
    cost_max_per_step: float = 1.0

    def __post_init__(self) -> None:
        if self.episode_length < 2:
            raise ConfigError(f"episode_length must be >= 2, got {self.episode_length}")
        if self.discount != 1.0:
            raise ConfigError("discount is pinned to 1.0 (undiscounted returns)")


def chainrun_spec(episode_length: int = 32) -> EnvSpec:
    return EnvSpec(CHAIN_RUN, episode_length, state_dim=2, action_dim=1)


def gridcircle_spec(episode_length: int = 64) -> EnvSpec:
    return EnvSpec(GRID_CIRCLE, episode_length, state_dim=3, action_dim=2)


@dataclass(frozen=True)
class Step:
    state: np.ndarray
    action: np.ndarray
    reward: float
    cost: float


@dataclass
class Trajectory:
    """Fixed-length episode with prefix sums for O(1) segment returns.

    ``reward_prefix[k]`` is the exact sum of the first k rewards, so the
    segment return over [t, gamma] is ``reward_prefix[gamma+1] - reward_prefix[t]``.
    """

    states: np.ndarray        # (T, state_dim)
    actions: np.ndarray       # (T, action_dim)
    rewards: np.ndarray       # (T,)
    costs: np.ndarray         # (T,)
    reward_prefix: np.ndarray = field(repr=False)  # (T+1,)
    cost_prefix: np.ndarray = field(repr=False)    # (T+1,)

    @classmethod
    def from_arrays(cls, states, actions, rewards, costs) -> "Trajectory":
        rewards = np.asarray(rewards, dtype=np.float64)
        costs = np.asarray(costs, dtype=np.float64)
        rp = np.concatenate(([0.0], np.cumsum(rewards)))
        cp = np.concatenate(([0.0], np.cumsum(costs)))
        return cls(
            states=np.asarray(states, dtype=np.float64),
            actions=np.asarray(actions, dtype=np.float64),
            rewards=rewards,
            costs=costs,
            reward_prefix=rp,
            cost_prefix=cp,
        )

    @property
    def horizon(self) -> int:
        return self.rewards.shape[0]

    @property
    def total_reward(self) -> float:
        return float(self.reward_prefix[-1])

    @property
    def total_cost(self) -> float:
        return float(self.cost_prefix[-1])

    def step(self, i: int) -> Step:
        return Step(self.states[i], self.actions[i], float(self.rewards[i]), float(self.costs[i]))

    def segment_return(self, t: int, gamma: int) -> tuple[float, float]:
        """Exact (reward, cost) return of the inclusive segment [t, gamma]."""
        if not (0 <= t <= gamma < self.horizon):
            raise ContractError(f"segment indices out of range: t={t}, gamma={gamma}, T={self.horizon}")
        r = float(self.reward_prefix[gamma + 1] - self.reward_prefix[t])
        c = float(self.cost_prefix[gamma + 1] - self.cost_prefix[t])
        return r, c


class ChainRunEnv:
    """1-D runner; state is (position x, normalized time tau)."""

    def __init__(self, spec: EnvSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed
        self.clamp_warnings = 0

    def reset(self) -> np.ndarray:
        return np.array([0.0, 0.0])

    def step(self, state, action, t: int):
        T = self.spec.episode_length
        if t >= T:
            raise ContractError(f"step at t={t} past horizon T={T}")
        a = np.atleast_1d(np.asarray(action, dtype=np.float64))
        if np.any(np.abs(a) > 1.0):
            self.clamp_warnings += 1
            a = np.clip(a, -1.0, 1.0)
        v = (a[0] + 1.0) / 2.0
        x = state[0] + v
        reward = v
        cost = 1.0 if v > 0.5 else 0.0
        next_state = np.array([x, (t + 1) / T])
        return next_state, float(reward), cost, t + 1 == T


class GridCircleEnv:
    """2-D circler; state is (x, y, normalized time tau).

    Reward is the counter-clockwise tangential progress (x*a_y - y*a_x)
    scaled by 1/max(|p|, 0.5); a step costs 1 when the next position leaves
    the radial band [0.5, 1.5].
    """

    def __init__(self, spec: EnvSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed
        self.clamp_warnings = 0

    def reset(self) -> np.ndarray:
        return np.array([1.0, 0.0, 0.0])

    def step(self, state, action, t: int):
        T = self.spec.episode_length
        if t >= T:
            raise ContractError(f"step at t={t} past horizon T={T}")
        a = np.asarray(action, dtype=np.float64)
        if np.any(np.abs(a) > 1.0):
            self.clamp_warnings += 1
            a = np.clip(a, -1.0, 1.0)
        x, y = state[0], state[1]
        nx, ny = x + 0.1 * a[0], y + 0.1 * a[1]
        reward = (x * a[1] - y * a[0]) / max(np.hypot(x, y), 0.5)
        radius = np.hypot(nx, ny)
        cost = 1.0 if (radius > 1.5 or radius < 0.5) else 0.0
        next_state = np.array([nx, ny, (t + 1) / T])
        return next_state, float(reward), cost, t + 1 == T


_ENV_CLASSES = {CHAIN_RUN: ChainRunEnv, GRID_CIRCLE: GridCircleEnv}


def make_env(spec: EnvSpec, seed: int = 0):
    """Build an environment from its spec; unknown names are config errors."""
    if spec.name not in _ENV_CLASSES:
        known = ", ".join(sorted(_ENV_CLASSES))
        raise ConfigError(f"unknown environment {spec.name!r} (known: {known})")
    return _ENV_CLASSES[spec.name](spec, seed)


def spec_by_name(name: str, episode_length: int) -> EnvSpec:
    if name == CHAIN_RUN:
        return chainrun_spec(episode_length)
    if name == GRID_CIRCLE:
        return gridcircle_spec(episode_length)
    raise ConfigError(f"unknown environment {name!r}")


def rollout(env, actor: ActionSource, T: "int | None" = None) -> Trajectory:
    """Run ``actor`` for T steps and return the trajectory with prefix sums."""
    if T is None:
        T = env.spec.episode_length
    state = env.reset()
    d, adim = env.spec.state_dim, env.spec.action_dim
    states = np.empty((T, d))
    actions = np.empty((T, adim))
    rewards = np.empty(T)
    costs = np.empty(T)
    for t in range(T):
        action = np.atleast_1d(np.asarray(actor(state, t), dtype=np.float64))
        states[t] = state
        next_state, r, c, _done = env.step(state, action, t)
        actions[t] = np.clip(action, -1.0, 1.0)
        rewards[t] = r
        costs[t] = c
        state = next_state
    return Trajectory.from_arrays(states, actions, rewards, costs)

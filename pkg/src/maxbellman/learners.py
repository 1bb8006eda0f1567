"""Tabular Q-learning and Max-Q, exploration schedules, and the max-Bellman TD target."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .mdp_core import QTable, as_values

Q_LEARNING = "q-learning"
MAX_Q = "max-q"
RULES = (Q_LEARNING, MAX_Q)


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"schedule values must lie in [0, 1], got {self.value}")

    def __call__(self, episode: int) -> float:
        return self.value


@dataclass(frozen=True)
class LinearDecay:
    """Linear interpolation from ``start`` to ``end`` over ``over`` episodes, then ``end``."""

    start: float
    end: float
    over: int

    def __post_init__(self):
        if not (0.0 <= self.start <= 1.0 and 0.0 <= self.end <= 1.0):
            raise ValueError("schedule values must lie in [0, 1]")
        if self.over < 1:
            raise ValueError("over must be at least 1 episode")

    def __call__(self, episode: int) -> float:
        if episode >= self.over:
            return self.end
        return self.start + (self.end - self.start) * (episode / self.over)


Schedule = Union[Constant, LinearDecay]


@dataclass(frozen=True)
class LearnerConfig:
    rule: str
    alpha: float = 0.001
    gamma: float = 0.99
    epsilon_schedule: Schedule = field(default_factory=lambda: LinearDecay(0.2, 0.0, 50_000))
    episodes: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}; expected one of {', '.join(RULES)}")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.episodes < 1:
            raise ValueError("episodes must be at least 1")


@dataclass(frozen=True, eq=False)
class EpisodeLog:
    """Per-episode statistics stored column-wise (one entry per episode)."""

    cumulative_return: np.ndarray
    max_reward: np.ndarray
    steps: np.ndarray

    def __len__(self):
        return len(self.cumulative_return)

    def __eq__(self, other):
        if not isinstance(other, EpisodeLog):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("cumulative_return", "max_reward", "steps")
        )


# ---------------------------------------------------------------- single updates


def _checked_copy(q, s, a, s_next) -> np.ndarray:
    v = np.array(as_values(q))
    n_states, n_actions = v.shape
    if not (0 <= s < n_states and 0 <= s_next < n_states and 0 <= a < n_actions):
        raise IndexError(f"(s={s}, a={a}, s_next={s_next}) out of range for table {v.shape}")
    return v


def q_learning_target(r: float, gamma: float, max_next: float, terminal: bool) -> float:
    return r if terminal else r + gamma * max_next


def max_q_target(r: float, gamma: float, max_next: float, terminal: bool) -> float:
    return r if terminal else max(r, gamma * max_next)


def q_learning_update(q, s: int, a: int, r: float, s_next: int, alpha: float, gamma: float, terminal: bool) -> QTable:
    v = _checked_copy(q, s, a, s_next)
    target = q_learning_target(r, gamma, float(v[s_next].max()), terminal)
    v[s, a] = v[s, a] + alpha * (target - v[s, a])
    return QTable(v)


def max_q_update(q, s: int, a: int, r: float, s_next: int, alpha: float, gamma: float, terminal: bool) -> QTable:
    v = _checked_copy(q, s, a, s_next)
    target = max_q_target(r, gamma, float(v[s_next].max()), terminal)
    v[s, a] = v[s, a] + alpha * (target - v[s, a])
    return QTable(v)


def max_bellman_td_target(r: float, gamma: float, critic_values: Sequence[float], terminal: bool = False) -> float:
    """``max(r, gamma * min(critics))``, or ``r`` on a terminal transition.

    The min over two target critics is the clipped double-Q estimate; the
    outer max replaces the usual sum.
    """
    if terminal:
        return r
    c1, c2 = critic_values
    return max(r, gamma * min(c1, c2))


# ---------------------------------------------------------------- training


def train(env, config: LearnerConfig, initial_q: Union[QTable, np.ndarray, None] = None):
    """Run epsilon-greedy episodes and return ``(QTable, EpisodeLog)``.

    Exploration picks a uniform action (any of them) with probability
    epsilon; otherwise the greedy action, ties going to the lowest index.
    The transition that ends an episode is terminal (no bootstrap).
    All randomness comes from ``random.Random(config.seed)``.
    """
    n_obs, n_actions = env.n_observations, env.n_actions
    if initial_q is None:
        q = [[0.0] * n_actions for _ in range(n_obs)]
    else:
        init = as_values(initial_q)
        if init.shape != (n_obs, n_actions):
            raise ValueError(f"initial Q-table shape {init.shape} does not match {(n_obs, n_actions)}")
        q = init.tolist()
    rng = random.Random(config.seed)
    alpha, gamma = config.alpha, config.gamma
    max_q = config.rule == MAX_Q
    schedule = config.epsilon_schedule
    episodes = config.episodes
    returns = np.empty(episodes)
    maxima = np.empty(episodes)
    steps = np.empty(episodes, dtype=np.int64)

    def check(obs):
        if not 0 <= obs < n_obs:
            raise IndexError(f"observation {obs} outside the Q-table range [0, {n_obs})")
        return obs

    for ep in range(episodes):
        eps = schedule(ep)
        s = check(env.reset())
        total, best, t = 0.0, float("-inf"), 0
        done = False
        while not done:
            row = q[s]
            if rng.random() < eps:
                a = rng.randrange(n_actions)
            else:
                a, b = 0, row[0]
                for i in range(1, n_actions):
                    if row[i] > b:
                        a, b = i, row[i]
            out = env.step(a)
            r, done = out.reward, out.done
            s2 = check(out.observation)
            if done:
                target = r
            elif max_q:
                target = max(r, gamma * max(q[s2]))
            else:
                target = r + gamma * max(q[s2])
            row[a] += alpha * (target - row[a])
            total += r
            if r > best:
                best = r
            t += 1
            s = s2
        returns[ep], maxima[ep], steps[ep] = total, best, t
    return QTable(np.array(q)), EpisodeLog(returns, maxima, steps)


@dataclass(frozen=True)
class Rollout:
    actions: tuple[int, ...]
    observations: tuple[int, ...]
    rewards: tuple[float, ...]

    @property
    def cumulative_return(self) -> float:
        total = 0.0
        for r in self.rewards:
            total += r
        return total

    @property
    def max_reward(self) -> float:
        return max(self.rewards)


def greedy_rollout(env, q: Union[QTable, np.ndarray]) -> Rollout:
    """One episode following argmax actions (lowest index on ties)."""
    v = as_values(q)
    obs = env.reset()
    observations, actions, rewards = [obs], [], []
    done = False
    while not done:
        a = int(np.argmax(v[obs]))
        out = env.step(a)
        obs, done = out.observation, out.done
        actions.append(a)
        observations.append(obs)
        rewards.append(out.reward)
    return Rollout(tuple(actions), tuple(observations), tuple(rewards))

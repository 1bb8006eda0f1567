"""Brute-force ground truth for the expected-max objective.

``enumerate_deterministic`` searches every action sequence of a deterministic
environment; ``backward_induction_max`` and ``policy_expected_max`` solve
finite-horizon problems on tabular MDPs exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mdp_core import Policy, QTable, TabularMdp

DEFAULT_BUDGET = 2**26
NEG_INF = float("-inf")


@dataclass(frozen=True)
class TrajectoryStats:
    best_cumulative_return: float
    best_max_discounted_reward: float
    best_max_raw_reward: float
    cumulative_actions: tuple[int, ...]
    discounted_actions: tuple[int, ...]
    raw_actions: tuple[int, ...]


@dataclass(frozen=True)
class SequenceScore:
    cumulative_return: float
    max_discounted_reward: float
    max_raw_reward: float
    rewards: tuple[float, ...]


def score_sequence(env, actions: Sequence[int], gamma: float) -> SequenceScore:
    """Replay ``actions`` from reset and score the rewards in time order."""
    env.reset()
    rewards = []
    for a in actions:
        out = env.step(a)
        rewards.append(out.reward)
        if out.done:
            break
    total = 0.0
    for r in rewards:
        total += r
    disc = max((gamma**t * r for t, r in enumerate(rewards)), default=NEG_INF)
    raw = max(rewards, default=NEG_INF)
    return SequenceScore(total, disc, raw, tuple(rewards))


def enumerate_deterministic(
    env, horizon: int, gamma: float = 0.99, budget: int = DEFAULT_BUDGET, memoize: bool = True
) -> TrajectoryStats:
    """Exact optima over all ``n_actions ** horizon`` action sequences.

    Depth-first search with rollback when the environment offers
    ``snapshot``/``restore`` and re-simulation from ``reset`` otherwise.
    A hashable snapshot also lets identical hidden states share one subtree
    search, which leaves the optima unchanged.  Reported values come from
    replaying each argmax sequence.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    n_actions = env.n_actions
    if n_actions**horizon > budget:
        raise ValueError(
            f"{n_actions}^{horizon} action sequences exceed the enumeration budget of {budget}; "
            "reduce the horizon or raise the budget"
        )
    can_rollback = hasattr(env, "snapshot") and hasattr(env, "restore")
    memo: dict = {}
    prefix: list[int] = []

    def replay_prefix():
        env.reset()
        for a in prefix:
            env.step(a)

    def search(depth):
        # returns ((sum, seq), (disc, seq), (raw, seq)) for the rest of the episode
        if depth == horizon:
            return (0.0, ()), (NEG_INF, ()), (NEG_INF, ())
        key = None
        if can_rollback and memoize:
            key = env.snapshot()
            hit = memo.get(key)
            if hit is not None:
                return hit
        best_sum = best_disc = best_raw = None
        snap = env.snapshot() if can_rollback else None
        for a in range(n_actions):
            if a and can_rollback:
                env.restore(snap)
            elif a:
                replay_prefix()
            out = env.step(a)
            r = out.reward
            if out.done or depth + 1 == horizon:
                child = (0.0, ()), (NEG_INF, ()), (NEG_INF, ())
            else:
                prefix.append(a)
                child = search(depth + 1)
                prefix.pop()
            s = (r + child[0][0], (a, *child[0][1]))
            d = (max(r, gamma * child[1][0]), (a, *child[1][1]))
            m = (max(r, child[2][0]), (a, *child[2][1]))
            if best_sum is None or s[0] > best_sum[0]:
                best_sum = s
            if best_disc is None or d[0] > best_disc[0]:
                best_disc = d
            if best_raw is None or m[0] > best_raw[0]:
                best_raw = m
        result = (best_sum, best_disc, best_raw)
        if key is not None:
            memo[key] = result
        return result

    env.reset()
    (_, cum_seq), (_, disc_seq), (_, raw_seq) = search(0)
    cum = score_sequence(env, cum_seq, gamma)
    disc = score_sequence(env, disc_seq, gamma)
    raw = score_sequence(env, raw_seq, gamma)
    return TrajectoryStats(
        best_cumulative_return=cum.cumulative_return,
        best_max_discounted_reward=disc.max_discounted_reward,
        best_max_raw_reward=raw.max_raw_reward,
        cumulative_actions=cum_seq,
        discounted_actions=disc_seq,
        raw_actions=raw_seq,
    )


def backward_induction_max(mdp: TabularMdp, horizon: int, expectation: str = "inside") -> list[QTable]:
    """Finite-horizon expected-max tables ``[Q_1, ..., Q_horizon]`` (index k-1 = k steps left).

    ``Q_1 = r`` because nothing follows the last step.  With
    ``expectation="inside"`` (default) the recursion is
    ``Q_{k+1} = max(r, gamma * E_{s'}[max_a' Q_k(s', a')])``, the same
    ordering as the infinite-horizon optimality backup.  ``"outside"`` uses
    ``E_{s'}[max(r, gamma * max_a' Q_k(s', a'))]`` instead, which is never
    smaller and coincides with it whenever transitions are deterministic.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if expectation not in ("inside", "outside"):
        raise ValueError("expectation must be 'inside' or 'outside'")
    r, g = mdp.reward, mdp.gamma
    q = r.copy()
    out = [QTable(q)]
    for _ in range(horizon - 1):
        cont = g * q.max(axis=1)
        if expectation == "inside":
            q = np.maximum(r, mdp.expect(cont))
        else:
            q = mdp.expect_max_with_reward(cont)
        out.append(QTable(q))
    return out


def backward_induction_policy(mdp: TabularMdp, policy: Policy, horizon: int) -> list[QTable]:
    """Policy-restricted counterpart: ``Q_{k+1} = max(r, gamma * E_{s', a'~policy}[Q_k])``."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    probs = policy.matrix(mdp.n_states, mdp.n_actions)
    q = mdp.reward.copy()
    out = [QTable(q)]
    for _ in range(horizon - 1):
        q = np.maximum(mdp.reward, mdp.gamma * mdp.expect((probs * q).sum(axis=1)))
        out.append(QTable(q))
    return out


def policy_expected_max(
    mdp: TabularMdp, policy: Policy, horizon: int, start: int, budget: int = DEFAULT_BUDGET
) -> float:
    """Exact E[max_t gamma^t r_t] over ``horizon`` steps from ``start`` by path enumeration.

    The first action is drawn from the policy too.  Only branches with
    non-zero probability are expanded.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if not 0 <= start < mdp.n_states:
        raise ValueError(f"start state {start} out of range")
    probs = policy.matrix(mdp.n_states, mdp.n_actions)
    moves = [
        [(a, float(probs[s, a]), mdp.successors(s, a)) for a in np.flatnonzero(probs[s])]
        for s in range(mdp.n_states)
    ]
    widest = max(sum(len(nxt) for _, _, nxt in row) for row in moves)
    if widest > 1 and widest**horizon > budget:
        raise ValueError(
            f"up to {widest}^{horizon} paths exceed the enumeration budget of {budget}; reduce the horizon"
        )
    g = mdp.gamma
    r = mdp.reward

    def expand(s, t, disc, best):
        total = 0.0
        for a, pa, nxt in moves[s]:
            here = max(best, disc * r[s, a])
            if t + 1 == horizon:
                total += pa * here
                continue
            for s2, ps in nxt:
                total += pa * ps * expand(s2, t + 1, disc * g, here)
        return total

    return expand(start, 0, 1.0, NEG_INF)

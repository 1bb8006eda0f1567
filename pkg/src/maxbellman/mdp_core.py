"""Finite MDPs, action-value tables and policies.

Transitions are stored either as a dense ``(S, A, S)`` array or, for large
deterministic expansions, as a scipy CSR matrix with one row per
``(state, action)`` pair (row index ``s * A + a``).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import scipy.sparse as sp

ROW_SUM_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TabularMdp:
    transition: Union[np.ndarray, sp.csr_matrix]
    reward: np.ndarray
    gamma: float

    def __post_init__(self):
        reward = _frozen(self.reward)
        if reward.ndim != 2:
            raise ValueError(f"reward must be 2-D (states x actions), got shape {reward.shape}")
        n_states, n_actions = reward.shape
        if n_states < 1 or n_actions < 1:
            raise ValueError("an MDP needs at least one state and one action")
        if not np.all(np.isfinite(reward)):
            raise ValueError("reward entries must be finite")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")

        if sp.issparse(self.transition):
            p = sp.csr_matrix(self.transition, dtype=float)
            if p.shape != (n_states * n_actions, n_states):
                raise ValueError(
                    f"sparse transition must have shape {(n_states * n_actions, n_states)}, got {p.shape}"
                )
            p.sum_duplicates()
            if p.nnz and p.data.min() < 0:
                raise ValueError("transition probabilities must be non-negative")
            sums = np.asarray(p.sum(axis=1)).ravel()
        else:
            p = _frozen(self.transition)
            if p.shape != (n_states, n_actions, n_states):
                raise ValueError(
                    f"transition must have shape {(n_states, n_actions, n_states)}, got {p.shape}"
                )
            if np.any(p < 0):
                raise ValueError("transition probabilities must be non-negative")
            sums = p.sum(axis=2).ravel()
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            s, a = divmod(int(bad[0]), n_actions)
            raise ValueError(f"transition row (s={s}, a={a}) sums to {sums[bad[0]]!r}, not 1")

        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return self.reward.shape[0]

    @property
    def n_actions(self) -> int:
        return self.reward.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.transition)

    def expect(self, values: np.ndarray) -> np.ndarray:
        """E[values[s'] | s, a] as an ``(S, A)`` array."""
        if self.is_sparse:
            return (self.transition @ values).reshape(self.n_states, self.n_actions)
        return self.transition @ values

    def expect_max_with_reward(self, continuation: np.ndarray) -> np.ndarray:
        """E_{s'}[max(r(s, a), continuation[s'])] as an ``(S, A)`` array."""
        r = self.reward
        if self.is_sparse:
            p = self.transition
            rows = np.repeat(np.arange(p.shape[0]), np.diff(p.indptr))
            terms = p.data * np.maximum(r.ravel()[rows], continuation[p.indices])
            out = np.bincount(rows, weights=terms, minlength=p.shape[0])
            return out.reshape(r.shape)
        return np.einsum("ijk,ijk->ij", self.transition, np.maximum(r[:, :, None], continuation[None, None, :]))

    def dense_transition(self) -> np.ndarray:
        if self.is_sparse:
            return self.transition.toarray().reshape(self.n_states, self.n_actions, self.n_states)
        return self.transition

    def successors(self, state: int, action: int) -> list[tuple[int, float]]:
        """Non-zero (next_state, probability) pairs for one (state, action)."""
        if self.is_sparse:
            row = state * self.n_actions + action
            lo, hi = self.transition.indptr[row], self.transition.indptr[row + 1]
            return list(zip(self.transition.indices[lo:hi].tolist(), self.transition.data[lo:hi].tolist()))
        probs = self.transition[state, action]
        return [(int(s), float(probs[s])) for s in np.flatnonzero(probs)]


@dataclass(frozen=True, eq=False)
class QTable:
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2:
            raise ValueError(f"Q-table must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("Q-table entries must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "QTable":
        return cls(np.zeros((n_states, n_actions)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, QTable):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.shape, self.values.tobytes()))


def as_values(q: Union[QTable, np.ndarray]) -> np.ndarray:
    return q.values if isinstance(q, QTable) else np.asarray(q, dtype=float)


@dataclass(frozen=True)
class DeterministicPolicy:
    actions: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))

    def matrix(self, n_states: int, n_actions: int) -> np.ndarray:
        if len(self.actions) != n_states:
            raise ValueError(f"policy covers {len(self.actions)} states, MDP has {n_states}")
        acts = np.asarray(self.actions, dtype=int)
        if acts.size and (acts.min() < 0 or acts.max() >= n_actions):
            raise ValueError(f"policy actions must lie in [0, {n_actions})")
        out = np.zeros((n_states, n_actions))
        out[np.arange(n_states), acts] = 1.0
        return out


@dataclass(frozen=True, eq=False)
class StochasticPolicy:
    probabilities: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probabilities)
        if p.ndim != 2:
            raise ValueError("stochastic policy must be a (states x actions) table")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise ValueError("stochastic policy rows must be non-negative and sum to 1")
        object.__setattr__(self, "probabilities", p)

    def matrix(self, n_states: int, n_actions: int) -> np.ndarray:
        if self.probabilities.shape != (n_states, n_actions):
            raise ValueError(
                f"policy shape {self.probabilities.shape} does not match MDP {(n_states, n_actions)}"
            )
        return self.probabilities


@dataclass(frozen=True, eq=False)
class EpsilonGreedyPolicy:
    """Uniform over all actions with probability epsilon, otherwise greedy."""

    q: QTable
    epsilon: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")

    def matrix(self, n_states: int, n_actions: int) -> np.ndarray:
        if self.q.shape != (n_states, n_actions):
            raise ValueError(f"Q-table shape {self.q.shape} does not match MDP {(n_states, n_actions)}")
        greedy = greedy_policy(self.q).matrix(n_states, n_actions)
        return (1.0 - self.epsilon) * greedy + self.epsilon / n_actions


Policy = Union[DeterministicPolicy, StochasticPolicy, EpsilonGreedyPolicy]


def greedy_policy(q: Union[QTable, np.ndarray]) -> DeterministicPolicy:
    # np.argmax returns the first maximum, i.e. the lowest action index on ties
    return DeterministicPolicy(tuple(np.argmax(as_values(q), axis=1).tolist()))


def uniform_policy(n_states: int, n_actions: int) -> StochasticPolicy:
    return StochasticPolicy(np.full((n_states, n_actions), 1.0 / n_actions))


def random_policy(n_states: int, n_actions: int, rng: np.random.Generator) -> StochasticPolicy:
    p = rng.random((n_states, n_actions)) + 1e-3
    return StochasticPolicy(p / p.sum(axis=1, keepdims=True))


def sup_norm_distance(q1: Union[QTable, np.ndarray], q2: Union[QTable, np.ndarray]) -> float:
    a, b = as_values(q1), as_values(q2)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(a - b)))


# ---------------------------------------------------------------- text format


def format_mdp(mdp: TabularMdp, sparse: bool | None = None) -> str:
    """Serialize to ``mdp <S> <A> <gamma>`` followed by one line per (s, a).

    Dense lines list every next-state probability.  With ``sparse=True``
    (the default for sparse MDPs) the probabilities are written as
    ``next:prob`` pairs instead.
    """
    if sparse is None:
        sparse = mdp.is_sparse
    lines = [f"mdp {mdp.n_states} {mdp.n_actions} {mdp.gamma!r}"]
    dense = None if sparse else mdp.dense_transition()
    for s in range(mdp.n_states):
        for a in range(mdp.n_actions):
            head = f"{s} {a} {float(mdp.reward[s, a])!r}"
            if sparse:
                body = " ".join(f"{t}:{p!r}" for t, p in mdp.successors(s, a))
            else:
                body = " ".join(repr(float(p)) for p in dense[s, a])
            lines.append(f"{head} {body}")
    return "\n".join(lines) + "\n"


def parse_mdp(text: str) -> TabularMdp:
    lines = [(i, ln.split()) for i, ln in enumerate(text.splitlines(), start=1)]
    lines = [(i, toks) for i, toks in lines if toks and not toks[0].startswith("#")]
    if not lines:
        raise ValueError("empty MDP text")
    lineno, head = lines[0]
    if len(head) != 4 or head[0] != "mdp":
        raise ValueError(f"line {lineno}: expected 'mdp <n_states> <n_actions> <gamma>'")
    try:
        n_states, n_actions, gamma = int(head[1]), int(head[2]), float(head[3])
    except ValueError as exc:
        raise ValueError(f"line {lineno}: {exc}") from None
    if n_states < 1 or n_actions < 1:
        raise ValueError(f"line {lineno}: state and action counts must be positive")

    reward = np.zeros((n_states, n_actions))
    rows, cols, vals = [], [], []
    seen = np.zeros((n_states, n_actions), dtype=bool)
    for lineno, toks in lines[1:]:
        try:
            s, a, r = int(toks[0]), int(toks[1]), float(toks[2])
            if not (0 <= s < n_states and 0 <= a < n_actions):
                raise ValueError(f"state/action ({s}, {a}) out of range")
            if seen[s, a]:
                raise ValueError(f"duplicate entry for ({s}, {a})")
            rest = toks[3:]
            if rest and ":" in rest[0]:
                pairs = [tok.split(":") for tok in rest]
                targets = [int(t) for t, _ in pairs]
                probs = [float(p) for _, p in pairs]
                if any(not 0 <= t < n_states for t in targets):
                    raise ValueError("next state out of range")
            else:
                if len(rest) != n_states:
                    raise ValueError(f"expected {n_states} probabilities, got {len(rest)}")
                targets = list(range(n_states))
                probs = [float(p) for p in rest]
        except (ValueError, IndexError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        seen[s, a] = True
        reward[s, a] = r
        rows.extend([s * n_actions + a] * len(targets))
        cols.extend(targets)
        vals.extend(probs)
    if not seen.all():
        s, a = np.argwhere(~seen)[0]
        raise ValueError(f"missing line for state {s}, action {a}")

    p = sp.csr_matrix((vals, (rows, cols)), shape=(n_states * n_actions, n_states))
    if n_states * n_actions * n_states <= 4_000_000:
        return TabularMdp(p.toarray().reshape(n_states, n_actions, n_states), reward, gamma)
    return TabularMdp(p, reward, gamma)


def load_mdp(path: Union[str, Path]) -> TabularMdp:
    return parse_mdp(Path(path).read_text())


def save_mdp(mdp: TabularMdp, path: Union[str, Path]) -> None:
    Path(path).write_text(format_mdp(mdp))

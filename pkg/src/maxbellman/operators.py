"""Max-Bellman and standard Bellman backups plus a fixed-point solver.

All four operators are pure synchronous backups: each application reads the
whole previous table and returns a new one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .mdp_core import Policy, QTable, TabularMdp, as_values, sup_norm_distance

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000


def _check(q: np.ndarray, mdp: TabularMdp) -> None:
    if q.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"Q-table shape {q.shape} does not match MDP {(mdp.n_states, mdp.n_actions)}")


def _policy_continuation(q: np.ndarray, policy: Policy, mdp: TabularMdp) -> np.ndarray:
    """E_{s', a' ~ policy}[Q(s', a')] as an (S, A) array."""
    probs = policy.matrix(mdp.n_states, mdp.n_actions)
    return mdp.expect((probs * q).sum(axis=1))


def _greedy_continuation(q: np.ndarray, mdp: TabularMdp) -> np.ndarray:
    return mdp.expect(q.max(axis=1))


def apply_max_eval(q: Union[QTable, np.ndarray], policy: Policy, mdp: TabularMdp) -> QTable:
    v = as_values(q)
    _check(v, mdp)
    return QTable(np.maximum(mdp.reward, mdp.gamma * _policy_continuation(v, policy, mdp)))


def apply_max_optimality(q: Union[QTable, np.ndarray], mdp: TabularMdp) -> QTable:
    v = as_values(q)
    _check(v, mdp)
    return QTable(np.maximum(mdp.reward, mdp.gamma * _greedy_continuation(v, mdp)))


def apply_standard_eval(q: Union[QTable, np.ndarray], policy: Policy, mdp: TabularMdp) -> QTable:
    v = as_values(q)
    _check(v, mdp)
    return QTable(mdp.reward + mdp.gamma * _policy_continuation(v, policy, mdp))


def apply_standard_optimality(q: Union[QTable, np.ndarray], mdp: TabularMdp) -> QTable:
    v = as_values(q)
    _check(v, mdp)
    return QTable(mdp.reward + mdp.gamma * _greedy_continuation(v, mdp))


@dataclass(frozen=True)
class OperatorKind:
    """Which backup to apply; evaluation kinds carry their policy."""

    name: str
    policy: Optional[Policy] = None

    NAMES = ("max-eval", "max-opt", "std-eval", "std-opt")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise ValueError(f"unknown operator {self.name!r}; expected one of {', '.join(self.NAMES)}")
        if self.name.endswith("eval") and self.policy is None:
            raise ValueError(f"operator {self.name!r} needs a policy")

    @classmethod
    def max_eval(cls, policy: Policy) -> "OperatorKind":
        return cls("max-eval", policy)

    @classmethod
    def max_opt(cls) -> "OperatorKind":
        return cls("max-opt")

    @classmethod
    def std_eval(cls, policy: Policy) -> "OperatorKind":
        return cls("std-eval", policy)

    @classmethod
    def std_opt(cls) -> "OperatorKind":
        return cls("std-opt")

    def apply(self, q: Union[QTable, np.ndarray], mdp: TabularMdp) -> QTable:
        if self.name == "max-eval":
            return apply_max_eval(q, self.policy, mdp)
        if self.name == "max-opt":
            return apply_max_optimality(q, mdp)
        if self.name == "std-eval":
            return apply_standard_eval(q, self.policy, mdp)
        return apply_standard_optimality(q, mdp)


@dataclass(frozen=True)
class FixedPointResult:
    q: QTable
    iterations: int
    residual: float
    converged: bool
    residuals: tuple[float, ...] = ()


def solve_fixed_point(
    kind: OperatorKind,
    mdp: TabularMdp,
    q0: Union[QTable, np.ndarray, None] = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FixedPointResult:
    """Iterate ``kind`` from ``q0`` (zeros by default) until the sup-norm step drops below ``tol``.

    Stops at the first iteration whose change is below ``tol`` or is exactly
    zero; ``converged`` is False if ``max_iter`` applications were not enough.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    q = QTable.zeros(mdp.n_states, mdp.n_actions) if q0 is None else QTable(as_values(q0))
    _check(q.values, mdp)
    residuals = []
    for it in range(1, max_iter + 1):
        nxt = kind.apply(q, mdp)
        res = sup_norm_distance(nxt, q)
        residuals.append(res)
        q = nxt
        if res < tol:
            return FixedPointResult(q, it, res, True, tuple(residuals))
    return FixedPointResult(q, max_iter, residuals[-1], False, tuple(residuals))

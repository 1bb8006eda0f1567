"""Gold-mining gridworld, its exact Markov expansion, and MDP fixtures.

Each goldmine pays its value on the first entry only, and the agent only
observes its cell index.  That makes the raw observation non-Markovian:
the same cell can be worth a lot or nothing depending on the history.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp

from .mdp_core import TabularMdp

UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3
ACTION_NAMES = ("up", "down", "left", "right")
ACTION_LETTERS = "UDLR"
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))

MAX_MARKOV_MINES = 20


@dataclass(frozen=True)
class GridLayout:
    rows: int
    cols: int
    cell_rewards: tuple[tuple[float, ...], ...]
    start: tuple[int, int]
    horizon: int
    step_penalty: float = -1.0

    def __post_init__(self):
        cells = tuple(tuple(float(v) for v in row) for row in self.cell_rewards)
        object.__setattr__(self, "cell_rewards", cells)
        object.__setattr__(self, "start", (int(self.start[0]), int(self.start[1])))
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid needs at least one row and one column")
        if len(cells) != self.rows or any(len(row) != self.cols for row in cells):
            raise ValueError(f"cell_rewards must be {self.rows} rows of {self.cols} values")
        if not all(np.isfinite(v) for row in cells for v in row) or not np.isfinite(self.step_penalty):
            raise ValueError("cell rewards and step penalty must be finite")
        r, c = self.start
        if not (0 <= r < self.rows and 0 <= c < self.cols):
            raise ValueError(f"start {self.start} is outside the {self.rows}x{self.cols} grid")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not self.mine_cells:
            raise ValueError("layout needs at least one goldmine (non-zero cell)")

    @property
    def mine_cells(self) -> tuple[tuple[int, int], ...]:
        """Goldmine coordinates in row-major order; the order fixes mask bits."""
        return tuple(
            (r, c) for r in range(self.rows) for c in range(self.cols) if self.cell_rewards[r][c] != 0
        )

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def cell_index(self, row: int, col: int) -> int:
        return row * self.cols + col

    def move(self, row: int, col: int, action: int) -> tuple[int, int]:
        dr, dc = MOVES[action]
        r, c = row + dr, col + dc
        if 0 <= r < self.rows and 0 <= c < self.cols:
            return r, c
        return row, col

    def with_horizon(self, horizon: int) -> "GridLayout":
        return GridLayout(self.rows, self.cols, self.cell_rewards, self.start, horizon, self.step_penalty)


# ---------------------------------------------------------------- layout text


def load_layout(text: str) -> GridLayout:
    """Parse ``grid <rows> <cols> <start_row> <start_col> <horizon> <step_penalty>`` plus one line per row.

    Row 0 is the first grid line (the top of the grid).  Blank lines and
    ``#`` comments are ignored.
    """
    lines = [(i, ln.split("#", 1)[0].split()) for i, ln in enumerate(text.splitlines(), start=1)]
    lines = [(i, toks) for i, toks in lines if toks]
    if not lines:
        raise ValueError("line 1: empty layout")
    lineno, head = lines[0]
    if len(head) != 7 or head[0] != "grid":
        raise ValueError(
            f"line {lineno}: expected 'grid <rows> <cols> <start_row> <start_col> <horizon> <step_penalty>'"
        )
    try:
        rows, cols, sr, sc, horizon = (int(t) for t in head[1:6])
        penalty = float(head[6])
    except ValueError as exc:
        raise ValueError(f"line {lineno}: {exc}") from None
    body = lines[1:]
    if len(body) != rows:
        where = body[rows][0] if len(body) > rows else (body[-1][0] + 1 if body else lineno + 1)
        raise ValueError(f"line {where}: expected {rows} grid rows, found {len(body)}")
    cells = []
    for lineno, toks in body:
        if len(toks) != cols:
            raise ValueError(f"line {lineno}: expected {cols} values, found {len(toks)}")
        try:
            cells.append(tuple(float(t) for t in toks))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    try:
        return GridLayout(rows, cols, tuple(cells), (sr, sc), horizon, penalty)
    except ValueError as exc:
        raise ValueError(f"line {lines[0][0]}: {exc}") from None


def _number(v: float) -> str:
    # short form when it reads back exactly, otherwise the full repr
    short = f"{v:g}"
    return short if float(short) == v else repr(v)


def format_layout(layout: GridLayout) -> str:
    sr, sc = layout.start
    head = f"grid {layout.rows} {layout.cols} {sr} {sc} {layout.horizon} {_number(layout.step_penalty)}"
    rows = [" ".join(_number(v) for v in row) for row in layout.cell_rewards]
    return "\n".join([head, *rows]) + "\n"


def read_layout(path: Union[str, Path]) -> GridLayout:
    return load_layout(Path(path).read_text())


def default_gold_layout() -> GridLayout:
    """The shipped 3x12 gold-mining grid (start bottom-left, 11 steps, -1 per empty step)."""
    text = resources.files("maxbellman").joinpath("data").joinpath("gold_default.layout").read_text()
    return load_layout(text)


def resolve_layout(spec: str) -> GridLayout:
    """``"default"`` names the shipped grid; anything else is a layout file path."""
    if spec == "default":
        return default_gold_layout()
    path = Path(spec)
    if not path.is_file():
        raise FileNotFoundError(f"layout file not found: {path}")
    return read_layout(path)


# ---------------------------------------------------------------- simulator


@dataclass(frozen=True)
class StepOutcome:
    observation: int
    reward: float
    done: bool


class GoldMiningEnv:
    """Deterministic gridworld whose goldmines deplete after one visit.

    The observation is ``row * cols + col``; the depletion state is hidden.
    """

    n_actions = 4

    def __init__(self, layout: GridLayout):
        self.layout = layout
        self._mine_bit = {cell: 1 << i for i, cell in enumerate(layout.mine_cells)}
        self.reset()

    @property
    def n_observations(self) -> int:
        return self.layout.n_cells

    @property
    def position(self) -> tuple[int, int]:
        return self._pos

    @property
    def mined_mask(self) -> int:
        return self._mask

    @property
    def steps_taken(self) -> int:
        return self._steps

    def is_mined(self, row: int, col: int) -> bool:
        bit = self._mine_bit.get((row, col))
        return bit is not None and bool(self._mask & bit)

    def reset(self) -> int:
        self._pos = self.layout.start
        self._mask = 0
        self._steps = 0
        return self.layout.cell_index(*self._pos)

    def step(self, action: int) -> StepOutcome:
        if self._steps >= self.layout.horizon:
            raise RuntimeError(f"episode finished after {self.layout.horizon} steps; call reset()")
        if not 0 <= action < 4:
            raise ValueError(f"action must be 0-3, got {action}")
        r, c = self.layout.move(*self._pos, action)
        bit = self._mine_bit.get((r, c))
        if bit is not None and not self._mask & bit:
            reward = self.layout.cell_rewards[r][c]
            self._mask |= bit
        else:
            reward = self.layout.step_penalty
        self._pos = (r, c)
        self._steps += 1
        return StepOutcome(self.layout.cell_index(r, c), reward, self._steps == self.layout.horizon)

    def snapshot(self) -> tuple[int, int, int, int]:
        """Full hidden state; hashable, so search code may memoize on it."""
        return (*self._pos, self._mask, self._steps)

    def restore(self, snap: tuple[int, int, int, int]) -> None:
        r, c, self._mask, self._steps = snap
        self._pos = (r, c)


def rollout(env, actions: Sequence[int]) -> list[StepOutcome]:
    env.reset()
    return [env.step(a) for a in actions]


# ---------------------------------------------------------------- Markov expansion


def markov_state(layout: GridLayout, row: int, col: int, mined_mask: int) -> int:
    """Index of (position, depletion mask) in the full expansion from :func:`markovize`."""
    return layout.cell_index(row, col) * (1 << len(layout.mine_cells)) + mined_mask


def _grid_tables(layout: GridLayout):
    """Per-cell next cell, mine bit index (or -1) and mine value for each action."""
    n = layout.n_cells
    nxt = np.zeros((n, 4), dtype=np.int64)
    for r in range(layout.rows):
        for c in range(layout.cols):
            for a in range(4):
                nxt[layout.cell_index(r, c), a] = layout.cell_index(*layout.move(r, c, a))
    bit = np.full(n, -1, dtype=np.int64)
    value = np.zeros(n)
    for i, (r, c) in enumerate(layout.mine_cells):
        bit[layout.cell_index(r, c)] = i
        value[layout.cell_index(r, c)] = layout.cell_rewards[r][c]
    return nxt, bit, value


def markovize(layout: GridLayout, gamma: float = 0.99, max_mines: int = MAX_MARKOV_MINES) -> TabularMdp:
    """Exact MDP over (position, depletion mask) with deterministic transitions.

    State ``cell * 2**m + mask`` (see :func:`markov_state`); ``rows*cols*2**m`` states.
    """
    m = len(layout.mine_cells)
    if m > max_mines:
        raise ValueError(
            f"layout has {m} goldmines; the full expansion allows at most {max_mines} "
            "(use markovize_reachable for a horizon-limited expansion)"
        )
    n_masks = 1 << m
    nxt_cell, bit, value = _grid_tables(layout)
    masks = np.arange(n_masks, dtype=np.int64)
    n_states = layout.n_cells * n_masks
    next_state = np.empty((n_states, 4), dtype=np.int64)
    reward = np.empty((n_states, 4))
    for cell in range(layout.n_cells):
        block = slice(cell * n_masks, (cell + 1) * n_masks)
        for a in range(4):
            dest = nxt_cell[cell, a]
            b = bit[dest]
            if b < 0:
                next_state[block, a] = dest * n_masks + masks
                reward[block, a] = layout.step_penalty
            else:
                fresh = (masks >> b) & 1 == 0
                next_state[block, a] = dest * n_masks + (masks | (1 << b))
                reward[block, a] = np.where(fresh, value[dest], layout.step_penalty)
    return TabularMdp(_deterministic_csr(next_state, n_states), reward, gamma)


@dataclass(frozen=True, eq=False)
class ReachableMdp:
    """Markov expansion restricted to states reachable from the start.

    ``states[i]`` is ``(row, col, mask)`` for MDP state ``i``; state 0 is the
    start.  Transitions from states first reached at depth ``horizon`` that
    would leave the set go to an absorbing zero-reward sink (the last state),
    so every quantity over the first ``horizon`` steps from the start is exact.
    """

    mdp: TabularMdp
    states: tuple[tuple[int, int, int], ...]
    index: dict
    horizon: int
    start: int = 0

    @property
    def sink(self) -> int:
        return self.mdp.n_states - 1


def markovize_reachable(layout: GridLayout, horizon: int | None = None, gamma: float = 0.99) -> ReachableMdp:
    horizon = layout.horizon if horizon is None else horizon
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    nxt_cell, bit, value = _grid_tables(layout)
    start = (layout.cell_index(*layout.start), 0)
    index = {start: 0}
    order = [start]
    depth = [0]
    edges = []
    queue = deque([0])
    while queue:
        i = queue.popleft()
        cell, mask = order[i]
        row_next, row_rew = [], []
        for a in range(4):
            dest = int(nxt_cell[cell, a])
            b = int(bit[dest])
            if b >= 0 and not (mask >> b) & 1:
                key, rew = (dest, mask | (1 << b)), float(value[dest])
            else:
                key, rew = (dest, mask), layout.step_penalty
            j = index.get(key)
            if j is None and depth[i] < horizon:
                j = index[key] = len(order)
                order.append(key)
                depth.append(depth[i] + 1)
                queue.append(j)
            row_next.append(-1 if j is None else j)
            row_rew.append(rew)
        edges.append((row_next, row_rew))
    sink = len(order)
    n_states = sink + 1
    next_state = np.full((n_states, 4), sink, dtype=np.int64)
    reward = np.zeros((n_states, 4))
    for i, (row_next, row_rew) in enumerate(edges):
        next_state[i] = [sink if j < 0 else j for j in row_next]
        reward[i] = row_rew
    states = tuple((*divmod(cell, layout.cols), mask) for cell, mask in order)
    mdp = TabularMdp(_deterministic_csr(next_state, n_states), reward, gamma)
    return ReachableMdp(mdp, states, {s: i for i, s in enumerate(states)}, horizon)


def _deterministic_csr(next_state: np.ndarray, n_states: int) -> sp.csr_matrix:
    n_rows = next_state.size
    return sp.csr_matrix(
        (np.ones(n_rows), next_state.ravel(), np.arange(n_rows + 1)), shape=(n_rows, n_states)
    )


# ---------------------------------------------------------------- MDP fixtures


def random_mdp(n_states: int, n_actions: int, gamma: float, seed: int) -> TabularMdp:
    """Rows are normalized uniform positives; rewards uniform in [-1, 1]."""
    if n_states < 1 or n_actions < 1:
        raise ValueError("sizes must be at least 1")
    rng = np.random.default_rng(seed)
    p = rng.random((n_states, n_actions, n_states)) + 1e-9
    p /= p.sum(axis=2, keepdims=True)
    reward = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    return TabularMdp(p, reward, gamma)


def chain_mdp(length: int, rewards: Sequence[float], gamma: float) -> TabularMdp:
    """Single-action chain s0 -> s1 -> ... with the last state looping on itself."""
    if length < 1:
        raise ValueError("length must be at least 1")
    if len(rewards) != length:
        raise ValueError(f"need {length} rewards, got {len(rewards)}")
    p = np.zeros((length, 1, length))
    for s in range(length):
        p[s, 0, min(s + 1, length - 1)] = 1.0
    return TabularMdp(p, np.asarray(rewards, dtype=float).reshape(length, 1), gamma)

"""Multi-seed training runs, bucketed learning curves and their CSV files."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Union

import numpy as np

from .envs import ACTION_LETTERS, GoldMiningEnv, GridLayout, resolve_layout
from .learners import RULES, LearnerConfig, LinearDecay, Rollout, greedy_rollout, train
from .mdp_core import QTable

DEFAULT_CADENCE = 500
THREADS_ENV = "MAXDP_THREADS"
CURVE_COLUMNS = ("algorithm", "episode", "mean_return", "std_return", "mean_max_reward", "std_max_reward")
QTABLE_COLUMNS = ("seed", "state", "row", "col", "q_up", "q_down", "q_left", "q_right")


@dataclass(frozen=True)
class ExperimentConfig:
    layout: str = "default"
    rules: tuple[str, ...] = RULES
    alpha: float = 0.001
    gamma: float = 0.99
    schedule: LinearDecay = field(default_factory=lambda: LinearDecay(0.2, 0.0, 50_000))
    episodes: int = 100_000
    seeds: tuple[int, ...] = tuple(range(10))
    cadence: int = DEFAULT_CADENCE
    out_dir: str = "results"

    def __post_init__(self):
        if not self.rules:
            raise ValueError("at least one learner rule is required")
        for rule in self.rules:
            if rule not in RULES:
                raise ValueError(f"unknown rule {rule!r}; expected one of {', '.join(RULES)}")
        if len(set(self.rules)) != len(self.rules):
            raise ValueError("learner rules must be distinct")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if self.episodes < 1:
            raise ValueError("episodes must be at least 1")
        if self.cadence < 1:
            raise ValueError("cadence must be at least 1")
        # validate the numeric hyperparameters once, up front
        LearnerConfig(self.rules[0], self.alpha, self.gamma, self.schedule, self.episodes)

    @property
    def n_seeds(self) -> int:
        return len(self.seeds)

    @property
    def n_buckets(self) -> int:
        return math.ceil(self.episodes / self.cadence)

    def learner(self, rule: str, seed: int) -> LearnerConfig:
        return LearnerConfig(rule, self.alpha, self.gamma, self.schedule, self.episodes, seed)


def _parse_seeds(value: str) -> tuple[int, ...]:
    # a bare count means seeds 0..n-1; a comma list names them explicitly
    if "," in value:
        return tuple(int(v) for v in value.split(",") if v.strip())
    n = int(value)
    if n < 1:
        raise ValueError("seeds must be at least 1")
    return tuple(range(n))


_CONFIG_KEYS = {
    "env.layout", "learner.rule", "learner.alpha", "learner.gamma",
    "schedule.start", "schedule.end", "schedule.over",
    "episodes", "seeds", "cadence", "out_dir",
}


def parse_config(text: str) -> ExperimentConfig:
    """Read flat ``key = value`` lines; ``#`` starts a comment, unknown keys are errors."""
    raw: dict[str, tuple[int, str]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = (lineno, value)

    base = ExperimentConfig()
    kwargs = {}
    schedule = {"start": base.schedule.start, "end": base.schedule.end, "over": base.schedule.over}
    for key, (lineno, value) in raw.items():
        try:
            if key == "env.layout":
                kwargs["layout"] = value
            elif key == "learner.rule":
                kwargs["rules"] = tuple(v.strip() for v in value.split(",") if v.strip())
            elif key == "learner.alpha":
                kwargs["alpha"] = float(value)
            elif key == "learner.gamma":
                kwargs["gamma"] = float(value)
            elif key == "schedule.over":
                schedule["over"] = int(value)
            elif key.startswith("schedule."):
                schedule[key.split(".", 1)[1]] = float(value)
            elif key == "episodes":
                kwargs["episodes"] = int(value)
            elif key == "seeds":
                kwargs["seeds"] = _parse_seeds(value)
            elif key == "cadence":
                kwargs["cadence"] = int(value)
            elif key == "out_dir":
                kwargs["out_dir"] = value
        except ValueError as exc:
            raise ValueError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    kwargs["schedule"] = LinearDecay(**schedule)
    return ExperimentConfig(**kwargs)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        return parse_config(path.read_text())
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


# ---------------------------------------------------------------- running


@dataclass(frozen=True, eq=False)
class Curves:
    """Across-seed statistics per episode bucket; ``episode`` is the bucket's last episode."""

    episode: np.ndarray
    mean_return: np.ndarray
    std_return: np.ndarray
    mean_max_reward: np.ndarray
    std_max_reward: np.ndarray

    def __len__(self):
        return len(self.episode)

    def __eq__(self, other):
        if not isinstance(other, Curves):
            return NotImplemented
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in CURVE_COLUMNS[1:])


@dataclass(frozen=True)
class SeedResult:
    seed: int
    bucket_returns: np.ndarray
    bucket_max_rewards: np.ndarray
    q: QTable
    rollout: Rollout


@dataclass(frozen=True, eq=False)
class RunSummary:
    config: ExperimentConfig
    curves: dict[str, Curves]
    rollouts: dict[str, dict[int, Rollout]]
    qtables: dict[str, dict[int, QTable]]

    def final(self, rule: str) -> tuple[float, float]:
        """Mean greedy-rollout return and max reward across seeds."""
        rolls = [self.rollouts[rule][s] for s in sorted(self.rollouts[rule])]
        return (
            float(np.mean([r.cumulative_return for r in rolls])),
            float(np.mean([r.max_reward for r in rolls])),
        )


def bucket_means(values: np.ndarray, cadence: int) -> np.ndarray:
    """Mean of consecutive ``cadence``-sized chunks; a shorter last chunk is kept."""
    starts = np.arange(0, len(values), cadence)
    return np.add.reduceat(values, starts) / np.diff(np.append(starts, len(values)))


def _run_seed(layout: GridLayout, config: ExperimentConfig, rule: str, seed: int) -> SeedResult:
    env = GoldMiningEnv(layout)
    q, log = train(env, config.learner(rule, seed))
    return SeedResult(
        seed,
        bucket_means(log.cumulative_return, config.cadence),
        bucket_means(log.max_reward, config.cadence),
        q,
        greedy_rollout(env, q),
    )


def _worker_count(n_jobs: int) -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        limit = os.cpu_count() or 1
    else:
        try:
            limit = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        if limit < 1:
            raise ValueError(f"{THREADS_ENV} must be at least 1")
    return max(1, min(limit, n_jobs))


def aggregate(config: ExperimentConfig, results: list[SeedResult]) -> Curves:
    """Reduce per-seed buckets in seed order so the result ignores completion order."""
    results = sorted(results, key=lambda r: r.seed)
    returns = np.stack([r.bucket_returns for r in results])
    maxima = np.stack([r.bucket_max_rewards for r in results])
    episodes = np.minimum(np.arange(1, config.n_buckets + 1) * config.cadence, config.episodes)
    curves = Curves(episodes, returns.mean(0), returns.std(0), maxima.mean(0), maxima.std(0))
    for name in CURVE_COLUMNS[2:]:
        col = getattr(curves, name)
        if not np.all(np.isfinite(col)):
            bad = int(np.flatnonzero(~np.isfinite(col))[0])
            raise ValueError(f"non-finite {name} at bucket ending episode {episodes[bad]}")
    return curves


def run_experiment(config: ExperimentConfig, write: bool = True) -> RunSummary:
    """Train every (rule, seed) pair, aggregate, and write the output files.

    Seeds run in worker processes, at most ``MAXDP_THREADS`` at a time
    (default: CPU count); with a single worker everything runs in-process.
    """
    layout = resolve_layout(config.layout)
    jobs = [(rule, seed) for rule in config.rules for seed in config.seeds]
    workers = _worker_count(len(jobs))
    if workers == 1:
        results = [_run_seed(layout, config, rule, seed) for rule, seed in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_seed, layout, config, rule, seed) for rule, seed in jobs]
            results = [f.result() for f in futures]

    by_rule: dict[str, list[SeedResult]] = {rule: [] for rule in config.rules}
    for (rule, _), res in zip(jobs, results):
        by_rule[rule].append(res)
    summary = RunSummary(
        config,
        {rule: aggregate(config, res) for rule, res in by_rule.items()},
        {rule: {r.seed: r.rollout for r in sorted(res, key=lambda r: r.seed)} for rule, res in by_rule.items()},
        {rule: {r.seed: r.q for r in sorted(res, key=lambda r: r.seed)} for rule, res in by_rule.items()},
    )
    if write:
        write_summary(summary, layout)
    return summary


# ---------------------------------------------------------------- files


def write_curves(curves: dict[str, Curves], path: Union[str, Path]) -> None:
    # repr keeps every float bit-exact on reload
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for rule, c in curves.items():
            for i in range(len(c)):
                w.writerow([
                    rule, int(c.episode[i]), repr(float(c.mean_return[i])), repr(float(c.std_return[i])),
                    repr(float(c.mean_max_reward[i])), repr(float(c.std_max_reward[i])),
                ])


def load_curves(path: Union[str, Path]) -> dict[str, Curves]:
    rows: dict[str, list[list[str]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CURVE_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            rows.setdefault(row[0], []).append(row[1:])
    out = {}
    for rule, body in rows.items():
        cols = list(zip(*body))
        out[rule] = Curves(np.array(cols[0], dtype=np.int64), *(np.array(c, dtype=float) for c in cols[1:]))
    return out


def format_rollout(layout: GridLayout, rollout: Rollout) -> str:
    cells = " ".join(f"({o // layout.cols},{o % layout.cols})" for o in rollout.observations)
    actions = "".join(ACTION_LETTERS[a] for a in rollout.actions)
    rewards = " ".join(f"{r:g}" for r in rollout.rewards)
    return (
        f"actions={actions} return={rollout.cumulative_return!r} max_reward={rollout.max_reward!r}\n"
        f"  cells: {cells}\n  rewards: {rewards}"
    )


def write_policy(layout: GridLayout, rollouts: dict[int, Rollout], path: Union[str, Path]) -> None:
    lines = [f"seed {seed}: {format_rollout(layout, rollouts[seed])}" for seed in sorted(rollouts)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_qtables(layout: GridLayout, qtables: dict[int, QTable], path: Union[str, Path]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(QTABLE_COLUMNS)
        for seed in sorted(qtables):
            for state, row in enumerate(qtables[seed].values):
                r, c = divmod(state, layout.cols)
                w.writerow([seed, state, r, c, *(repr(float(v)) for v in row)])


def load_qtables(path: Union[str, Path]) -> dict[int, QTable]:
    rows: dict[int, list[list[float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != QTABLE_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in reader:
            rows.setdefault(int(row[0]), []).append([float(v) for v in row[4:]])
    return {seed: QTable(np.array(v)) for seed, v in rows.items()}


def write_summary(summary: RunSummary, layout: GridLayout) -> Path:
    out = Path(summary.config.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    write_curves(summary.curves, out / "curves.csv")
    for rule in summary.config.rules:
        write_policy(layout, summary.rollouts[rule], out / f"policy_{rule}.txt")
        write_qtables(layout, summary.qtables[rule], out / f"qtable_{rule}.csv")
    return out


def with_seed_offset(config: ExperimentConfig, offset: int) -> ExperimentConfig:
    return replace(config, seeds=tuple(s + offset for s in config.seeds))

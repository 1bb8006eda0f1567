"""Command-line entry point: ``run``, ``solve``, ``oracle`` and ``markovize``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .envs import MAX_MARKOV_MINES, GoldMiningEnv, markovize, markovize_reachable, resolve_layout
from .experiments import load_config, run_experiment, with_seed_offset
from .mdp_core import DeterministicPolicy, load_mdp, random_policy, save_mdp, uniform_policy
from .operators import DEFAULT_MAX_ITER, DEFAULT_TOL, OperatorKind, solve_fixed_point
from .oracle import DEFAULT_BUDGET, enumerate_deterministic


def _cmd_run(args) -> int:
    config = with_seed_offset(load_config(args.config), args.seed)
    if args.out_dir:
        config = replace(config, out_dir=args.out_dir)
    summary = run_experiment(config)
    for rule in config.rules:
        ret, top = summary.final(rule)
        last = summary.curves[rule]
        print(
            f"{rule}: final greedy return {ret!r}, max reward {top!r}; "
            f"last bucket mean return {float(last.mean_return[-1])!r}, mean max reward {float(last.mean_max_reward[-1])!r}"
        )
    print(f"wrote {config.out_dir}")
    return 0


def _policy_for(spec: str, mdp, seed: int):
    if spec == "uniform":
        return uniform_policy(mdp.n_states, mdp.n_actions)
    if spec == "random":
        return random_policy(mdp.n_states, mdp.n_actions, np.random.default_rng(seed))
    try:
        actions = [int(v) for v in spec.split(",")]
    except ValueError:
        raise ValueError(f"--policy must be 'uniform', 'random' or a comma list of actions, got {spec!r}") from None
    if len(actions) != mdp.n_states:
        raise ValueError(f"--policy lists {len(actions)} actions for {mdp.n_states} states")
    return DeterministicPolicy(np.array(actions))


def _cmd_solve(args) -> int:
    mdp = load_mdp(args.mdp_file)
    policy = _policy_for(args.policy, mdp, args.seed) if args.operator.endswith("eval") else None
    result = solve_fixed_point(OperatorKind(args.operator, policy), mdp, tol=args.tol, max_iter=args.max_iter)
    print(f"operator = {args.operator}")
    print(f"converged = {result.converged}")
    print(f"iterations = {result.iterations}")
    print(f"residual = {result.residual!r}")
    for s, row in enumerate(result.q.values):
        print(f"Q[{s}] = " + " ".join(repr(float(v)) for v in row))
    if not result.converged:
        print(f"error: no convergence within {args.max_iter} iterations", file=sys.stderr)
        return 3
    return 0


def _cmd_oracle(args) -> int:
    layout = resolve_layout(args.layout)
    horizon = layout.horizon if args.horizon is None else args.horizon
    stats = enumerate_deterministic(
        GoldMiningEnv(layout.with_horizon(horizon)), horizon, gamma=args.gamma, budget=args.budget
    )
    letters = "UDLR"
    print(f"best_cumulative_return = {stats.best_cumulative_return!r}")
    print(f"best_max_discounted_reward = {stats.best_max_discounted_reward!r}")
    print(f"best_max_raw_reward = {stats.best_max_raw_reward!r}")
    print("cumulative_actions = " + "".join(letters[a] for a in stats.cumulative_actions))
    print("discounted_actions = " + "".join(letters[a] for a in stats.discounted_actions))
    print("raw_actions = " + "".join(letters[a] for a in stats.raw_actions))
    return 0


def _cmd_markovize(args) -> int:
    layout = resolve_layout(args.layout)
    if args.horizon is None:
        n_mines = len(layout.mine_cells)
        if n_mines > MAX_MARKOV_MINES:
            raise ValueError(
                f"layout has {n_mines} goldmines, more than the {MAX_MARKOV_MINES} a full expansion allows; "
                "pass --horizon to keep only reachable states"
            )
        mdp = markovize(layout, gamma=args.gamma)
        print(f"states = {mdp.n_states} (full position x mined-mask expansion)")
    else:
        reach = markovize_reachable(layout, args.horizon, gamma=args.gamma)
        mdp = reach.mdp
        print(f"states = {mdp.n_states} (reachable within {args.horizon} steps, sink = {reach.sink})")
    save_mdp(mdp, args.output)
    print(f"wrote {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maxbellman", description="Max-Bellman operators, oracles and learners.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=0, help="base random seed (default 0)")
        return p

    p = add("run", "train learners over several seeds and write curves")
    p.add_argument("config", help="key=value experiment config file")
    p.add_argument("--out-dir", help="override out_dir from the config")
    p.set_defaults(func=_cmd_run)

    p = add("solve", "iterate an operator to its fixed point on an MDP file")
    p.add_argument("mdp_file")
    p.add_argument("--operator", choices=OperatorKind.NAMES, default="max-opt")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--policy", default="uniform", help="for eval operators: uniform, random, or a comma list of actions")
    p.set_defaults(func=_cmd_solve)

    p = add("oracle", "enumerate every action sequence of a gridworld")
    p.add_argument("layout", help="layout file or 'default'")
    p.add_argument("--horizon", type=int, help="steps to enumerate (default: the layout's horizon)")
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="maximum number of action sequences")
    p.set_defaults(func=_cmd_oracle)

    p = add("markovize", "expand a gridworld into a Markov MDP file")
    p.add_argument("layout", help="layout file or 'default'")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--horizon", type=int, help="keep only states reachable within this many steps")
    p.add_argument("--gamma", type=float, default=0.99)
    p.set_defaults(func=_cmd_markovize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Max-Bellman operators, finite-horizon oracles, tabular learners and the gold-mining gridworld."""

from .envs import (
    GoldMiningEnv,
    GridLayout,
    StepOutcome,
    chain_mdp,
    default_gold_layout,
    load_layout,
    markovize,
    markovize_reachable,
    random_mdp,
)
from .experiments import ExperimentConfig, RunSummary, load_config, parse_config, run_experiment
from .learners import (
    Constant,
    EpisodeLog,
    LearnerConfig,
    LinearDecay,
    greedy_rollout,
    max_bellman_td_target,
    max_q_update,
    q_learning_update,
    train,
)
from .mdp_core import (
    DeterministicPolicy,
    EpsilonGreedyPolicy,
    QTable,
    StochasticPolicy,
    TabularMdp,
    greedy_policy,
    load_mdp,
    parse_mdp,
    save_mdp,
    sup_norm_distance,
)
from .operators import (
    FixedPointResult,
    OperatorKind,
    apply_max_eval,
    apply_max_optimality,
    apply_standard_eval,
    apply_standard_optimality,
    solve_fixed_point,
)
from .oracle import (
    TrajectoryStats,
    backward_induction_max,
    backward_induction_policy,
    enumerate_deterministic,
    policy_expected_max,
)

__version__ = "0.1.0"

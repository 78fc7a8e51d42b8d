"""Hybrid sampling evolution strategy with a Q-learned switch controller."""

from .benchmarks import Problem, evaluate, make_problem, problem_from_key
from .controller import QhsesConfig, run_qhses
from .hses import HsesConfig, RunTrace, run_hses, run_hses_from_iteration, sweep_switch_points
from .rl_agent import Policy, QTable, RawState, StateIndex, compute_state, discretize
from .stats import rank_sum_test, summarize
from .training import TrainingConfig, load_policy, save_policy, train_policy

__version__ = "0.1.0"

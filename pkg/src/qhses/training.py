"""Offline training of the switch controller.

For each training function a bank of ``T`` trajectories is built, one per
candidate switch iteration ``10, 20, ..., 10*T``. Trajectory ``m`` stays for
``m - 1`` decision steps and switches at step ``m``; its states come from the
best-so-far curve averaged over ``R`` seeded HSES runs and its only nonzero
reward is the terminal one. Q-values are learned by sweeping the fixed bank,
per-function tables are reduced to per-state votes, and the votes to a policy.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .benchmarks import Problem, problem_from_key
from .hses import DECISION_STEP, HORIZON, HsesConfig, sweep_switch_points
from .rl_agent import (
    N_ACTIONS,
    STAY,
    SWITCH,
    TERMINAL,
    TIE,
    MetadataError,
    Policy,
    QTable,
    RawState,
    StateIndex,
    Transition,
    compute_state,
    dimension_scale,
    discretize,
    sweep,
)

SCHEMA_VERSION = 1


class PolicyFileError(ValueError):
    pass


@dataclass
class TrainingConfig:
    gamma: float = 1.0
    alpha: float = 1e-4
    step: int = DECISION_STEP
    horizon: int = HORIZON
    max_epochs: int = 100_000
    replications: int = 11
    functions: list = field(default_factory=list)
    dimension: int = 10
    seed_base: int = 0
    literal_reward: bool = False  # reward +log f instead of -log f
    average: str = "log"  # "log" or "linear" averaging over replications

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.average not in ("log", "linear"):
            raise ValueError("average must be 'log' or 'linear'")

    @property
    def switch_points(self) -> list[int]:
        return [self.step * m for m in range(1, self.horizon + 1)]

    def seeds(self) -> list[int]:
        return [self.seed_base + r for r in range(self.replications)]


@dataclass
class Trajectory:
    steps: list
    switch_iteration: int
    function_id: str
    averaged_curve: np.ndarray  # averaged best-so-far at iterations 0..switch_iteration
    raw_states: list
    state_indices: list

    def to_dict(self) -> dict:
        return {
            "function_id": self.function_id,
            "switch_iteration": self.switch_iteration,
            "averaged_curve": self.averaged_curve.tolist(),
            "steps": [
                {
                    "s1": r.s1,
                    "s2": r.s2,
                    "bin1": si.bin1,
                    "bin2": si.bin2,
                    "state": si.flat,
                    "action": tr.action,
                    "reward": tr.reward,
                    "next_state": None if tr.next_state is TERMINAL else tr.next_state.flat,
                }
                for r, si, tr in zip(self.raw_states, self.state_indices, self.steps)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        raws, idxs, steps = [], [], []
        for st in d["steps"]:
            raws.append(RawState(st["s1"], st["s2"]))
            si = StateIndex(st["bin1"], st["bin2"])
            idxs.append(si)
            nxt = TERMINAL if st["next_state"] is None else StateIndex.from_flat(st["next_state"])
            steps.append(Transition(si, st["action"], st["reward"], nxt))
        return cls(steps, d["switch_iteration"], d["function_id"], np.asarray(d["averaged_curve"]), raws, idxs)


def _sweep_job(args):
    problem, hses_config, seed, points = args
    traces = sweep_switch_points(problem, hses_config, seed, points)
    return {s: (tr.curve[: s + 1].copy(), tr.best_value) for s, tr in traces.items()}


def _map(fn, jobs, workers: int):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(j) for j in jobs]


def build_trajectories(problem: Problem, config: TrainingConfig, hses_config: HsesConfig | None = None,
                       seeds=None, workers: int = 1) -> list[Trajectory]:
    """The ``T`` trajectories for one training function."""
    hses_config = hses_config or HsesConfig()
    seeds = list(config.seeds() if seeds is None else seeds)
    if not seeds:
        raise ValueError("at least one seed per switch point is required")
    points = config.switch_points
    try:
        runs = _map(_sweep_job, [(problem, hses_config, s, points) for s in seeds], workers)
    except Exception as exc:
        raise RuntimeError(f"trajectory bank for {problem.id} failed: {exc}") from exc

    bank = []
    for m, switch in enumerate(points, start=1):
        curves = np.array([run[switch][0] for run in runs])
        finals = np.array([run[switch][1] for run in runs])
        if config.average == "log":
            avg = np.exp(np.mean(np.log(np.maximum(curves, 1e-300)), axis=0))
            log_final = float(np.mean(np.log(finals)))
        else:
            avg = curves.mean(axis=0)
            log_final = math.log(float(np.mean(finals)))
        reward = log_final if config.literal_reward else -log_final

        raws = [compute_state(avg, t, config.step) for t in range(1, m + 1)]
        idxs = [discretize(r, problem.dimension) for r in raws]
        steps = []
        for t in range(m):
            if t < m - 1:
                steps.append(Transition(idxs[t], STAY, 0.0, idxs[t + 1]))
            else:
                steps.append(Transition(idxs[t], SWITCH, reward, TERMINAL))
        bank.append(Trajectory(steps, switch, problem.id, avg, raws, idxs))
    return bank


def train_on_function(trajectories: list[Trajectory], config: TrainingConfig,
                      dimension: int | None = None) -> tuple[QTable, np.ndarray]:
    """Sweep the bank ``max_epochs`` times (trajectories in order, steps in time order).

    Returns the table and the per-epoch change-rate series.
    """
    if not trajectories:
        raise ValueError("empty trajectory bank")
    dim = config.dimension if dimension is None else dimension
    table = QTable.zeros(scale=dimension_scale(dim))
    transitions = [tr for traj in trajectories for tr in traj.steps]
    rates = sweep(table, transitions, config.alpha, config.gamma, config.max_epochs)
    return table, rates


@dataclass
class MetaQTable:
    votes: np.ndarray
    function_ids: list
    s1_edges: tuple
    s2_edges: tuple
    scale: float
    q_tables: dict = field(default_factory=dict)


def aggregate_meta_q(tables: list[QTable], function_ids: list | None = None) -> MetaQTable:
    """Per state, one vote per function for the action with the strictly larger value."""
    if not tables:
        raise ValueError("no tables to aggregate")
    meta = tables[0].metadata
    for t in tables[1:]:
        if t.metadata != meta:
            raise MetadataError("Q-tables have different bin metadata")
    function_ids = list(function_ids) if function_ids is not None else [str(i) for i in range(len(tables))]
    n_states = tables[0].values.shape[0]
    votes = np.zeros((n_states, N_ACTIONS), dtype=np.int64)
    for t in tables:
        q0, q1 = t.values[:, STAY], t.values[:, SWITCH]
        votes[:, SWITCH] += q1 > q0
        votes[:, STAY] += q1 < q0
    return MetaQTable(votes, function_ids, tables[0].s1_edges, tables[0].s2_edges, tables[0].scale,
                      {fid: t.values.copy() for fid, t in zip(function_ids, tables)})


def extract_policy(meta: MetaQTable, training: dict | None = None) -> Policy:
    v0, v1 = meta.votes[:, STAY], meta.votes[:, SWITCH]
    prefs = np.where(v1 > v0, SWITCH, np.where(v0 > v1, STAY, TIE))
    return Policy(prefs.astype(int), meta.votes.copy(), tuple(meta.s1_edges), tuple(meta.s2_edges),
                  float(meta.scale), list(meta.function_ids), dict(meta.q_tables), dict(training or {}))


def policy_to_dict(policy: Policy) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "bins": {"s1_edges": list(policy.s1_edges), "s2_edges": list(policy.s2_edges),
                 "s2_scale": policy.scale},
        "n_states": int(policy.preferences.shape[0]),
        "n_actions": N_ACTIONS,
        "votes": policy.votes.tolist(),
        "preferences": ["tie" if p == TIE else int(p) for p in policy.preferences],
        "function_ids": list(policy.function_ids),
        "q_tables": {fid: np.asarray(v).tolist() for fid, v in policy.q_tables.items()},
        "training": policy.training,
    }


def policy_from_dict(d: dict) -> Policy:
    if not isinstance(d, dict) or "schema_version" not in d:
        raise PolicyFileError("not a policy document")
    if d["schema_version"] != SCHEMA_VERSION:
        raise PolicyFileError(f"unsupported policy schema version {d['schema_version']!r}")
    try:
        prefs = np.array([TIE if p == "tie" else int(p) for p in d["preferences"]], dtype=int)
        votes = np.asarray(d["votes"], dtype=np.int64).reshape(len(prefs), N_ACTIONS)
        bins = d["bins"]
        return Policy(prefs, votes, tuple(bins["s1_edges"]), tuple(bins["s2_edges"]), float(bins["s2_scale"]),
                      list(d["function_ids"]), {k: np.asarray(v, dtype=float) for k, v in d["q_tables"].items()},
                      dict(d["training"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise PolicyFileError(f"malformed policy document: {exc}") from None


def dumps_policy(policy: Policy) -> str:
    return json.dumps(policy_to_dict(policy), sort_keys=True, indent=2) + "\n"


def save_policy(policy: Policy, path) -> None:
    Path(path).write_text(dumps_policy(policy))


def load_policy(path) -> Policy:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise PolicyFileError(f"{path}: invalid JSON: {exc}") from None
    return policy_from_dict(doc)


def save_bank(bank: list[Trajectory], path) -> None:
    Path(path).write_text(json.dumps([t.to_dict() for t in bank], sort_keys=True, indent=1) + "\n")


def load_bank(path) -> list[Trajectory]:
    return [Trajectory.from_dict(d) for d in json.loads(Path(path).read_text())]


def write_convergence_csv(rates: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "change_rate"])
        for e, r in enumerate(rates, start=1):
            w.writerow([e, repr(float(r))])


def read_convergence_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([float(r["change_rate"]) for r in csv.DictReader(fh)])


@dataclass
class TrainingResult:
    policy: Policy
    banks: dict
    tables: dict
    rates: dict


def train_policy(config: TrainingConfig, hses_config: HsesConfig | None = None, workers: int = 1,
                 banks: dict | None = None) -> TrainingResult:
    """Build banks for every training function, train, vote and extract the policy.

    ``config.functions`` holds problem keys; their dimension field must match
    ``config.dimension``. Pre-built ``banks`` (keyed like the functions) are reused.
    """
    if not config.functions:
        raise ValueError("no training functions configured")
    hses_config = hses_config or HsesConfig()
    banks = dict(banks or {})
    tables, rates = {}, {}
    for key in config.functions:
        problem = problem_from_key(key)
        if problem.dimension != config.dimension:
            raise ValueError(f"{key}: dimension {problem.dimension} != configured {config.dimension}")
        if key not in banks:
            banks[key] = build_trajectories(problem, config, hses_config, workers=workers)
        tables[key], rates[key] = train_on_function(banks[key], config)
    meta = aggregate_meta_q([tables[k] for k in config.functions], config.functions)
    training = {
        "gamma": config.gamma,
        "alpha": config.alpha,
        "max_epochs": config.max_epochs,
        "replications": config.replications,
        "step": config.step,
        "horizon": config.horizon,
        "dimension": config.dimension,
        "seed_base": config.seed_base,
        "literal_reward": config.literal_reward,
        "average": config.average,
        "hses": {"max_nfe": hses_config.budget(config.dimension), "population_size": hses_config.population_size,
                 "final_phase_reserve": hses_config.final_phase_reserve,
                 "detect_threshold": hses_config.detect_threshold, "cma": asdict(hses_config.cma)},
    }
    return TrainingResult(extract_policy(meta, training), banks, tables, rates)


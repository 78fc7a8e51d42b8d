"""State features, discretisation and tabular Q-values for the switch controller.

The controller observes two progress ratios of the best-so-far curve of the
univariate phase, taken every ``step`` (10) iterations:

``s1`` -- relative log-improvement over the last two decision steps
``s2`` -- relative log-descent since the initial population

Each is binned into six right-closed intervals, giving 36 states. Actions are
``0`` (keep sampling) and ``1`` (switch to CMA-ES).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

S1_EDGES = (0.005, 0.05, 0.09, 0.5, 1.0)
S2_EDGES = (0.2, 0.5, 0.8, 1.2, 3.0)
N_BINS = 6
N_STATES = N_BINS * N_BINS
N_ACTIONS = 2
STAY, SWITCH = 0, 1
TIE = -1

F_FLOOR = 1e-12
LOG_FLOOR = 1e-12


class MetadataError(ValueError):
    """Tables or policies with incompatible bin layouts."""


def dimension_scale(dimension: int) -> float:
    """Factor applied to the ``s2`` bin edges for large problems."""
    if dimension >= 100:
        return 0.025
    if dimension >= 50:
        return 0.05
    return 1.0


@dataclass(frozen=True)
class RawState:
    s1: float
    s2: float


@dataclass(frozen=True)
class StateIndex:
    bin1: int = 0
    bin2: int = 0
    terminal: bool = False

    @property
    def flat(self) -> int | None:
        return None if self.terminal else N_BINS * self.bin1 + self.bin2

    @classmethod
    def from_flat(cls, flat: int) -> "StateIndex":
        return cls(*divmod(int(flat), N_BINS))


TERMINAL = StateIndex(terminal=True)


def _flat(state) -> int | None:
    if state is None:
        return None
    if isinstance(state, StateIndex):
        return state.flat
    return int(state)


def compute_state(curve, t: int, step: int = 10, log_base: float | None = None) -> RawState:
    """Progress features after ``t`` decision steps of the best-so-far ``curve``.

    ``curve[k]`` is the best objective after ``k`` iterations (``curve[0]`` is
    the initial population). Values are floored at 1e-12 before taking logs,
    log magnitudes in denominators likewise, and negative ratios are reported
    as zero. The ratios do not depend on ``log_base``.
    """
    if t < 1:
        raise ValueError("decision step t must be >= 1")
    if len(curve) <= step * t:
        raise ValueError(f"curve needs entries up to index {step * t}, has {len(curve)}")

    if log_base is None:
        def log(v):
            return math.log(max(float(v), F_FLOOR))
    else:
        def log(v):
            return math.log(max(float(v), F_FLOOR), log_base)

    def ratio(a, b):
        la, lb = log(a), log(b)
        r = (la - lb) / max(abs(la), LOG_FLOOR)
        return r if r > 0.0 else 0.0

    prev = curve[0] if t == 1 else curve[step * (t - 2)]
    now = curve[step * t]
    return RawState(ratio(prev, now), ratio(curve[0], now))


def bin_edges(dimension: int):
    scale = dimension_scale(dimension)
    return np.asarray(S1_EDGES), np.asarray(S2_EDGES) * scale


def discretize(raw: RawState, dimension: int) -> StateIndex:
    """Map features to one of the 36 cells; every interval is right-closed."""
    e1, e2 = bin_edges(dimension)
    b1 = int(np.searchsorted(e1, raw.s1, side="left"))
    b2 = int(np.searchsorted(e2, raw.s2, side="left"))
    return StateIndex(b1, b2)


@dataclass
class QTable:
    values: np.ndarray
    visits: np.ndarray
    s1_edges: tuple = S1_EDGES
    s2_edges: tuple = S2_EDGES
    scale: float = 1.0

    @classmethod
    def zeros(cls, n_states: int = N_STATES, n_actions: int = N_ACTIONS, scale: float = 1.0) -> "QTable":
        return cls(np.zeros((n_states, n_actions)), np.zeros((n_states, n_actions), dtype=np.int64),
                   scale=scale)

    @property
    def metadata(self):
        return (self.values.shape, tuple(self.s1_edges), tuple(self.s2_edges), float(self.scale))

    def copy(self) -> "QTable":
        return QTable(self.values.copy(), self.visits.copy(), self.s1_edges, self.s2_edges, self.scale)

    def to_dict(self) -> dict:
        return {
            "s1_edges": list(self.s1_edges),
            "s2_edges": list(self.s2_edges),
            "s2_scale": self.scale,
            "values": self.values.tolist(),
            "visits": self.visits.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QTable":
        return cls(np.asarray(d["values"], dtype=float), np.asarray(d["visits"], dtype=np.int64),
                   tuple(d["s1_edges"]), tuple(d["s2_edges"]), float(d["s2_scale"]))


@dataclass(frozen=True)
class Transition:
    state: object  # StateIndex or flat int
    action: int
    reward: float
    next_state: object  # StateIndex, flat int, or None / TERMINAL

    def __post_init__(self):
        if _flat(self.next_state) is not None and self.reward != 0.0:
            raise ValueError("non-terminal transitions carry zero reward")


def q_update(table: QTable, tr: Transition, alpha: float | None, gamma: float) -> QTable:
    """One Q-learning backup, in place. ``alpha=None`` uses 1 / visit count."""
    s, a, s_next = _flat(tr.state), int(tr.action), _flat(tr.next_state)
    table.visits[s, a] += 1
    if alpha is None:
        alpha = 1.0 / table.visits[s, a]
    future = 0.0 if s_next is None else table.values[s_next].max()
    table.values[s, a] = (1 - alpha) * table.values[s, a] + alpha * (gamma * future + tr.reward)
    return table


def greedy_action(values: np.ndarray, rng: np.random.Generator) -> int:
    best = np.flatnonzero(values == values.max())
    return int(best[0]) if len(best) == 1 else int(rng.choice(best))


def epsilon_greedy(table: QTable, state, epsilon: float, rng: np.random.Generator) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    if rng.random() < epsilon:
        return int(rng.integers(table.values.shape[1]))
    return greedy_action(table.values[_flat(state)], rng)


def q_change_rate(previous: QTable, current: QTable) -> float:
    """Squared Frobenius norm of the difference of two tables."""
    if previous.metadata != current.metadata:
        raise MetadataError("Q-tables have different bin metadata")
    d = current.values - previous.values
    return float(np.sum(d * d))


@numba.njit(cache=True)
def _sweep_kernel(Q, visits, states, actions, rewards, next_states, alpha, gamma, epochs, rates):
    n_tr = states.shape[0]
    n_s, n_a = Q.shape
    prev = Q.copy()
    for e in range(epochs):
        for i in range(n_tr):
            s = states[i]
            a = actions[i]
            nxt = next_states[i]
            future = 0.0
            if nxt >= 0:
                future = Q[nxt, 0]
                for b in range(1, n_a):
                    if Q[nxt, b] > future:
                        future = Q[nxt, b]
            Q[s, a] = (1 - alpha) * Q[s, a] + alpha * (gamma * future + rewards[i])
            visits[s, a] += 1
        acc = 0.0
        for s in range(n_s):
            for a in range(n_a):
                d = Q[s, a] - prev[s, a]
                acc += d * d
                prev[s, a] = Q[s, a]
        rates[e] = acc


def sweep(table: QTable, transitions, alpha: float, gamma: float, epochs: int) -> np.ndarray:
    """Apply ``q_update`` to ``transitions`` in order, ``epochs`` times, in place.

    Returns the per-epoch change rate (squared Frobenius norm between
    consecutive epochs). Same arithmetic as repeated :func:`q_update` calls.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    states = np.array([_flat(t.state) for t in transitions], dtype=np.int64)
    actions = np.array([t.action for t in transitions], dtype=np.int64)
    rewards = np.array([t.reward for t in transitions], dtype=float)
    nxt = [_flat(t.next_state) for t in transitions]
    next_states = np.array([-1 if s is None else s for s in nxt], dtype=np.int64)
    rates = np.zeros(int(epochs))
    if epochs > 0 and len(transitions):
        _sweep_kernel(table.values, table.visits, states, actions, rewards, next_states,
                      float(alpha), float(gamma), int(epochs), rates)
    return rates


@dataclass
class Policy:
    """Per-state preference reduced from meta-Q votes; ``TIE`` means pick at random."""

    preferences: np.ndarray
    votes: np.ndarray
    s1_edges: tuple = S1_EDGES
    s2_edges: tuple = S2_EDGES
    scale: float = 1.0
    function_ids: list = field(default_factory=list)
    q_tables: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)

    @classmethod
    def constant(cls, action: int, scale: float = 1.0) -> "Policy":
        """A policy that always answers ``action`` (``TIE`` for a coin flip)."""
        return cls(np.full(N_STATES, action, dtype=int), np.zeros((N_STATES, N_ACTIONS), dtype=np.int64),
                   scale=scale)


def select_action(policy: Policy, state, rng: np.random.Generator) -> int:
    pref = int(policy.preferences[_flat(state)])
    if pref == TIE:
        return int(rng.integers(N_ACTIONS))
    return pref

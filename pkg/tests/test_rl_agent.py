import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qhses.rl_agent import (
    N_STATES,
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
    bin_edges,
    compute_state,
    dimension_scale,
    discretize,
    epsilon_greedy,
    q_change_rate,
    q_update,
    select_action,
    sweep,
)


class TestComputeState:
    def test_constant_curve(self):
        assert compute_state(np.full(201, 7.0), 3) == RawState(0.0, 0.0)

    def test_first_step(self):
        curve = np.full(21, 100.0)
        curve[10:] = 10.0
        s = compute_state(curve, 1)
        assert s.s1 == pytest.approx(0.5) and s.s2 == pytest.approx(0.5)

    def test_later_step_uses_two_step_window(self):
        curve = np.geomspace(1e6, 1e2, 41)
        s = compute_state(curve, 3)
        lo, hi = math.log(curve[10]), math.log(curve[30])
        assert s.s1 == pytest.approx((lo - hi) / lo, rel=1e-12)
        assert s.s2 == pytest.approx((math.log(1e6) - hi) / math.log(1e6), rel=1e-12)

    def test_log_base_invariance(self):
        curve = np.sort(np.random.default_rng(0).uniform(2, 1e5, 101))[::-1]
        a = compute_state(curve, 5)
        b = compute_state(curve, 5, log_base=10)
        assert a.s1 == pytest.approx(b.s1, rel=1e-12) and a.s2 == pytest.approx(b.s2, rel=1e-12)

    def test_values_below_one_stay_finite(self):
        curve = np.array([1.0] + [1e-20] * 20)
        s = compute_state(curve, 2)
        assert np.isfinite(s.s1) and np.isfinite(s.s2) and s.s1 >= 0 and s.s2 >= 0

    def test_short_curve(self):
        with pytest.raises(ValueError):
            compute_state(np.ones(10), 1)
        with pytest.raises(ValueError):
            compute_state(np.ones(30), 0)


class TestDiscretize:
    def test_edges_are_right_closed(self):
        for i, e in enumerate((0.005, 0.05, 0.09, 0.5, 1.0)):
            assert discretize(RawState(e, 0.0), 10).bin1 == i
            assert discretize(RawState(np.nextafter(e, 2), 0.0), 10).bin1 == i + 1

    @pytest.mark.parametrize("dim,scale", [(10, 1.0), (30, 1.0), (50, 0.05), (99, 0.05), (100, 0.025)])
    def test_s2_scaling(self, dim, scale):
        assert dimension_scale(dim) == scale
        _, e2 = bin_edges(dim)
        for i, e in enumerate(e2):
            assert discretize(RawState(0.0, e), dim).bin2 == i

    def test_extremes(self):
        assert discretize(RawState(0.0, 0.0), 10) == StateIndex(0, 0)
        assert discretize(RawState(50.0, 50.0), 10) == StateIndex(5, 5)

    def test_flat_round_trip(self):
        for f in range(N_STATES):
            assert StateIndex.from_flat(f).flat == f
        assert TERMINAL.flat is None

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 10), st.floats(0, 10), st.integers(2, 200))
    def test_total(self, s1, s2, dim):
        idx = discretize(RawState(s1, s2), dim)
        assert 0 <= idx.flat < N_STATES


class TestQUpdate:
    def test_zero_fixed_point(self):
        t = QTable.zeros()
        q_update(t, Transition(3, 1, 0.0, None), 0.5, 1.0)
        q_update(t, Transition(3, 0, 0.0, 4), 0.5, 1.0)
        assert not t.values.any()

    def test_terminal_update(self):
        t = QTable.zeros()
        q_update(t, Transition(0, SWITCH, -2.0, TERMINAL), 0.25, 1.0)
        assert t.values[0, 1] == -0.5

    def test_bootstrap(self):
        t = QTable.zeros()
        t.values[5] = [1.0, 3.0]
        q_update(t, Transition(2, STAY, 0.0, 5), 0.5, 0.9)
        assert t.values[2, 0] == pytest.approx(0.5 * 0.9 * 3.0)

    def test_visit_count_alpha(self):
        t = QTable.zeros()
        for r in (-1.0, -3.0, -5.0):
            q_update(t, Transition(0, 1, r, None), None, 1.0)
        # 1/visits step size is the running mean
        assert t.values[0, 1] == pytest.approx(-3.0)
        assert t.visits[0, 1] == 3

    def test_nonterminal_reward_rejected(self):
        with pytest.raises(ValueError):
            Transition(0, 0, 1.0, 3)


class TestActionSelection:
    def test_epsilon_zero_greedy(self):
        t = QTable.zeros()
        t.values[7] = [0.0, 1.0]
        rng = np.random.default_rng(0)
        assert all(epsilon_greedy(t, 7, 0.0, rng) == 1 for _ in range(50))

    def test_epsilon_frequency(self):
        t = QTable.zeros()
        t.values[7] = [0.0, 1.0]
        rng = np.random.default_rng(1)
        picks = np.array([epsilon_greedy(t, 7, 0.3, rng) for _ in range(20_000)])
        # greedy w.p. 0.7 plus half the random draws
        assert abs(np.mean(picks == 0) - 0.15) < 0.01

    def test_bad_epsilon(self):
        with pytest.raises(ValueError):
            epsilon_greedy(QTable.zeros(), 0, 1.5, np.random.default_rng(0))

    def test_select_action(self):
        rng = np.random.default_rng(2)
        assert select_action(Policy.constant(SWITCH), 4, rng) == SWITCH
        assert select_action(Policy.constant(STAY), StateIndex(1, 1), rng) == STAY
        draws = [select_action(Policy.constant(TIE), 0, rng) for _ in range(4000)]
        assert abs(np.mean(draws) - 0.5) < 0.03


class TestChangeRate:
    def test_matches_double_loop(self):
        rng = np.random.default_rng(3)
        a, b = QTable.zeros(), QTable.zeros()
        a.values[:] = rng.normal(size=a.values.shape)
        b.values[:] = rng.normal(size=b.values.shape)
        ref = sum((b.values[i, j] - a.values[i, j]) ** 2 for i in range(N_STATES) for j in range(2))
        assert q_change_rate(a, b) == pytest.approx(ref, rel=1e-12)
        assert q_change_rate(a, a) == 0.0

    def test_metadata_mismatch(self):
        with pytest.raises(MetadataError):
            q_change_rate(QTable.zeros(), QTable.zeros(scale=0.05))


def random_transitions(rng, count):
    out = []
    for _ in range(count):
        s = int(rng.integers(N_STATES))
        if rng.random() < 0.3:
            out.append(Transition(s, SWITCH, float(rng.normal()), None))
        else:
            out.append(Transition(s, STAY, 0.0, int(rng.integers(N_STATES))))
    return out


def test_sweep_matches_python_updates():
    rng = np.random.default_rng(4)
    trs = random_transitions(rng, 40)
    fast, slow = QTable.zeros(), QTable.zeros()
    rates = sweep(fast, trs, 0.3, 0.95, 5)
    ref = []
    for _ in range(5):
        prev = slow.copy()
        for tr in trs:
            q_update(slow, tr, 0.3, 0.95)
        ref.append(q_change_rate(prev, slow))
    np.testing.assert_array_equal(fast.values, slow.values)
    np.testing.assert_array_equal(fast.visits, slow.visits)
    np.testing.assert_allclose(rates, ref, rtol=1e-12)


def test_sweep_rejects_bad_alpha():
    with pytest.raises(ValueError):
        sweep(QTable.zeros(), [], 0.0, 1.0, 3)


def value_iteration(model, n_states, gamma, tol=1e-13):
    """Brute-force Bellman optimality iteration over a deterministic model.

    ``model[(s, a)] = (next_state or None, reward)``.
    """
    Q = np.zeros((n_states, 2))
    while True:
        new = Q.copy()
        for (s, a), (nxt, r) in model.items():
            new[s, a] = r + (0.0 if nxt is None else gamma * Q[nxt].max())
        if np.max(np.abs(new - Q)) < tol:
            return new
        Q = new


def mdp_transitions(model):
    return [Transition(s, a, r, nxt) for (s, a), (nxt, r) in sorted(model.items())]


# rewards arrive only on exit, as in the switch-control problem
CHAIN = {**{(s, 0): (s + 1, 0.0) for s in range(4)}, (4, 0): (None, -1.0),
         **{(s, 1): (None, -5.0 + s) for s in range(5)}}
FORK = {(0, 0): (1, 0.0), (0, 1): (2, 0.0), (1, 0): (None, 3.0), (1, 1): (None, 1.0),
        (2, 0): (None, -2.0), (2, 1): (None, 2.5)}
CYCLE = {(0, 0): (1, 0.0), (1, 0): (2, 0.0), (2, 0): (0, 0.0),
         (0, 1): (None, 1.0), (1, 1): (None, 2.0), (2, 1): (None, 4.0)}


@pytest.mark.parametrize("model,n,gamma", [(CHAIN, 5, 1.0), (FORK, 3, 1.0), (CYCLE, 3, 0.9)])
def test_value_iteration_oracle(model, n, gamma):
    oracle = value_iteration(model, n, gamma)
    table = QTable.zeros(n_states=n)
    sweep(table, mdp_transitions(model), 0.5, gamma, 400)
    np.testing.assert_allclose(table.values, oracle, atol=1e-6, rtol=0)

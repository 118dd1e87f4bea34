from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subgoal_rs.envs.gridworld import GridworldScenario, gridworld_mdp
from subgoal_rs.mdp import (
    DiscreteMdp,
    MdpFormatError,
    OracleFailure,
    Trajectory,
    greedy_policy,
    load_mdp,
    parse_mdp,
    q_backup,
    random_mdp,
    value_iteration,
)

FIXTURES = Path(__file__).parent / "fixtures"

# Frozen from exhaustive enumeration of the 8 deterministic policies of
# stochastic4.mdp, each solved exactly with a linear system.
STOCHASTIC4_V = [1.359792449833219, 1.5486525123100547, 1.5057976385873884, 0.0]
STOCHASTIC4_ARGMAX = {0: {0}, 1: {1}, 2: {1}}


def chain_mdp(gamma=0.9):
    # state 0 (A) -> 1 (G, terminal) with reward 1
    p = np.zeros((2, 1, 2))
    r = np.zeros_like(p)
    p[0, 0, 1] = 1.0
    r[0, 0, 1] = 1.0
    p[1, 0, 1] = 1.0
    return DiscreteMdp(p, r, gamma, frozenset({1}))


def test_two_state_chain():
    v = value_iteration(chain_mdp())
    assert v[0] == pytest.approx(1.0)
    assert v[1] == 0.0


def test_gridworld_two_steps_from_goal():
    sc = GridworldScenario(5, 5, (0, 0), (4, 4), ((1, 0),))
    v = value_iteration(gridworld_mdp(sc, 0.9))
    assert v[sc.index((4, 2))] == pytest.approx(0.9, abs=1e-7)
    assert v[sc.index((3, 4))] == pytest.approx(1.0, abs=1e-7)


def test_stochastic_fixture_matches_enumeration_oracle():
    v = value_iteration(load_mdp(FIXTURES / "stochastic4.mdp"), 1e-12)
    np.testing.assert_allclose(v, STOCHASTIC4_V, atol=1e-10)


def test_residual_below_tolerance():
    mdp = load_mdp(FIXTURES / "stochastic4.mdp")
    v = value_iteration(mdp, 1e-6)
    residual = np.abs(q_backup(mdp, v).max(axis=1) - v)[:3].max()
    assert residual < 1e-6


def test_residual_never_increases():
    mdp = random_mdp(np.random.default_rng(3), 20, 3)
    v = np.zeros(mdp.n_states)
    residuals = []
    for _ in range(60):
        new = q_backup(mdp, v).max(axis=1)
        new[list(mdp.terminal)] = 0.0
        residuals.append(np.abs(new - v).max())
        v = new
    assert all(b <= a + 1e-15 for a, b in zip(residuals, residuals[1:]))


def test_iteration_cap_raises():
    p = np.ones((1, 1, 1))
    r = np.ones_like(p)
    with pytest.raises(OracleFailure):
        value_iteration(DiscreteMdp(p, r, 1.0), 1e-8, max_sweeps=50)


def test_greedy_left_of_goal_is_right():
    sc = GridworldScenario(5, 5, (0, 0), (4, 4), ((1, 0),))
    mdp = gridworld_mdp(sc, 0.9)
    pol = greedy_policy(mdp, value_iteration(mdp, 1e-12))
    assert pol[sc.index((3, 4))] == {3}


def test_greedy_keeps_symmetric_ties():
    mdp = load_mdp(FIXTURES / "two_goals.mdp")
    pol = greedy_policy(mdp, value_iteration(mdp, 1e-12))
    assert pol[2] == {0, 1}
    assert pol[1] == {0}
    assert pol[3] == {1}


def test_greedy_fixture_matches_enumeration():
    mdp = load_mdp(FIXTURES / "stochastic4.mdp")
    pol = greedy_policy(mdp, np.array(STOCHASTIC4_V))
    assert {s: set(a) for s, a in pol.items()} == STOCHASTIC4_ARGMAX


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), c=st.floats(-100, 100))
def test_greedy_invariant_to_constant_shift(seed, c):
    mdp = random_mdp(np.random.default_rng(seed), 8, 3, n_terminal=0, gamma=0.9)
    v = value_iteration(mdp, 1e-12)
    assert greedy_policy(mdp, v) == greedy_policy(mdp, v + c)


def test_bad_probabilities_rejected():
    p = np.full((2, 1, 2), 0.4)
    with pytest.raises(ValueError, match="sums to"):
        DiscreteMdp(p, np.zeros_like(p), 0.9)


def test_terminal_must_self_loop():
    p = np.zeros((2, 1, 2))
    p[:, 0, 0] = 1.0
    with pytest.raises(ValueError, match="terminal"):
        DiscreteMdp(p, np.zeros_like(p), 0.9, frozenset({1}))


def test_parse_reports_line_numbers():
    with pytest.raises(MdpFormatError, match="line 3"):
        parse_mdp("states 2\nactions 1\nbogus 1\n")
    with pytest.raises(MdpFormatError, match="line 4"):
        parse_mdp("states 2\nactions 1\ngamma 0.9\nt 0 0 5 1.0 0\n")


def test_gridworld_round_trips_into_mdp():
    sc = GridworldScenario(4, 3, (0, 0), (3, 2), ((1, 1),), walls=((2, 1),))
    mdp = gridworld_mdp(sc, 0.9)
    from subgoal_rs.envs.gridworld import step_grid
    for s in mdp.nonterminal_states():
        for a in range(4):
            nxt, r, _ = step_grid(sc, sc.cell(s), a)
            s2 = sc.index(nxt)
            assert mdp.transition[s, a, s2] == 1.0
            assert mdp.reward[s, a, s2] == r


def test_trajectory_chains():
    traj = Trajectory()
    traj.append(0, 1, 0.0, 1)
    traj.append(1, 0, 1.0, 2)
    assert [s.index for s in traj.steps] == [0, 1]
    assert traj.states() == [0, 1, 2]
    with pytest.raises(ValueError):
        traj.append(5, 0, 0.0, 6)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subgoal_rs.envs.social import (
    FEATURE_DIM,
    AgentState,
    JointState,
    SocialNavEnv,
    SocialNavScenario,
    Termination,
    behind_angle,
    behind_predicate,
    min_separation,
    reward_for,
    social_reward,
    step_social,
    wrap_angle,
)


def agent(px, py, vx=0.0, vy=0.0, gx=5.0, gy=5.0, radius=0.3, heading=0.0):
    return AgentState(px, py, vx, vy, radius, gx, gy, 1.0, heading)


def test_min_separation_examples():
    assert min_separation((0, 0), (1, 0), (2, 0), (-1, 0), (0.3, 0.3), 1.0) == pytest.approx(-0.6)
    assert min_separation((0, 0), (0.5, 0.5), (1, 0), (0.5, 0.5), (0.3, 0.3), 0.25) == \
        pytest.approx(0.4)
    with pytest.raises(ValueError):
        min_separation((0, 0), (0, 0), (1, 0), (0, 0), 0.3, 0.0)


def sampled_min_separation(p_r, v_r, p_h, v_h, radii, dt, n=10_000):
    tau = np.linspace(0.0, dt, n)[:, None]
    gap = (np.asarray(p_r) - np.asarray(p_h)) + tau * (np.asarray(v_r) - np.asarray(v_h))
    return float(np.min(np.hypot(gap[:, 0], gap[:, 1]))) - radii


def test_min_separation_matches_dense_sampling():
    rng = np.random.default_rng(11)
    for _ in range(300):
        p_r, p_h = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2)
        v_r, v_h = rng.uniform(-1.5, 1.5, 2), rng.uniform(-1.5, 1.5, 2)
        dt = float(rng.uniform(0.05, 1.0))
        exact = min_separation(p_r, v_r, p_h, v_h, 0.6, dt)
        assert exact == pytest.approx(sampled_min_separation(p_r, v_r, p_h, v_h, 0.6, dt),
                                      abs=1e-4)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8), st.floats(0.01, 1.0))
def test_min_separation_is_symmetric(xs, dt):
    p_r, v_r, p_h, v_h = xs[0:2], xs[2:4], xs[4:6], xs[6:8]
    a = min_separation(p_r, v_r, p_h, v_h, (0.3, 0.2), dt)
    b = min_separation(p_h, v_h, p_r, v_r, (0.2, 0.3), dt)
    assert a == pytest.approx(b, abs=1e-12)


def test_reward_table():
    assert reward_for(-0.01, False) == -0.25
    assert reward_for(-0.01, True) == -0.25
    assert reward_for(0.1, False) == pytest.approx(-0.15)
    assert reward_for(0.1, True) == pytest.approx(-0.15)
    assert reward_for(0.2, True) == 1.0
    assert reward_for(3.0, False) == 0.0


def test_social_reward_goal_and_collision():
    robot = agent(0.0, 0.0, gx=0.25, gy=0.0)
    far = agent(5.0, 5.0)
    assert social_reward(JointState(robot, far), (1.0, 0.0), 0.25) == 1.0
    near = agent(0.7, 0.0, vx=-1.0)
    assert social_reward(JointState(robot, near), (1.0, 0.0), 0.25) == -0.25


@pytest.mark.parametrize("offset,expected,angle", [
    ((-1.0, 0.0), True, 180.0),
    ((1.0, 0.0), False, 0.0),
    ((-1.0, 1.0), True, 135.0),
    ((-1.0, -1.0), True, 225.0),
    ((0.0, 1.0), False, 90.0),
])
def test_behind_examples(offset, expected, angle):
    human = agent(2.0, 3.0, vx=1.0)
    robot = agent(2.0 + offset[0], 3.0 + offset[1])
    joint = JointState(robot, human)
    assert behind_angle(joint) == pytest.approx(angle)
    assert behind_predicate(joint, (135.0, 225.0)) is expected


def test_behind_false_for_stationary_human():
    joint = JointState(agent(-1.0, 0.0), agent(0.0, 0.0))
    assert behind_angle(joint) is None
    assert not behind_predicate(joint)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4),
       st.floats(-2 * math.pi, 2 * math.pi), st.floats(0.05, 3.0),
       st.floats(-10, 10), st.floats(-10, 10), st.floats(0.1, 10.0))
def test_behind_invariances(pos, heading, speed, tx, ty, scale):
    hv = (speed * math.cos(heading), speed * math.sin(heading))
    base = JointState(agent(pos[0], pos[1]), agent(pos[2], pos[3], *hv))
    moved = JointState(agent(pos[0] + tx, pos[1] + ty),
                       agent(pos[2] + tx, pos[3] + ty, *hv))
    faster = JointState(agent(pos[0], pos[1]), agent(pos[2], pos[3], hv[0] * scale, hv[1] * scale))
    # skip coincident agents and the window edges, where rounding decides the answer
    ang = behind_angle(base)
    if math.hypot(pos[0] - pos[2], pos[1] - pos[3]) < 1e-3 or ang is None or min(abs(ang - 135.0), abs(ang - 225.0)) < 1e-4:
        return
    assert behind_predicate(moved) == behind_predicate(base)
    assert behind_predicate(faster) == behind_predicate(base)


def test_features_have_fourteen_entries():
    joint = SocialNavScenario().initial_state()
    f = joint.features()
    assert f.shape == (FEATURE_DIM,) == (14,)
    assert list(f[9:]) == joint.human.observable()


def test_agent_state_validation():
    with pytest.raises(ValueError):
        AgentState(0, 0, 0, 0, 0.0, 1, 1, 1.0, 0.0)
    with pytest.raises(ValueError):
        AgentState(0, 0, 0, 0, 0.3, 1, 1, 0.0, 0.0)
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


def test_step_reaches_goal():
    sc = SocialNavScenario(robot_start=(0.0, 0.0), robot_goal=(0.5, 0.0),
                           human_start=(5.0, 5.0), human_goal=(6.0, 6.0))
    res = step_social(sc, sc.initial_state(), (0.9, 0.0))
    assert res.termination is Termination.GOAL
    assert res.reward == 1.0


def test_step_head_on_collision():
    sc = SocialNavScenario(robot_start=(0.0, 0.0), robot_goal=(3.0, 0.0),
                           human_start=(0.7, 0.0), human_goal=(-3.0, 0.0))
    res = step_social(sc, sc.initial_state(), (0.9, 0.0))
    assert res.termination is Termination.COLLISION
    assert res.reward == -0.25


def test_collision_wins_over_goal():
    sc = SocialNavScenario(robot_start=(0.0, 0.0), robot_goal=(0.2, 0.0),
                           human_start=(0.5, 0.0), human_goal=(-3.0, 0.0))
    res = step_social(sc, sc.initial_state(), (0.5, 0.0))
    assert res.termination is Termination.COLLISION


def test_timeout_after_max_steps():
    sc = SocialNavScenario()
    env = SocialNavEnv(sc)
    joint = env.reset()
    for t in range(sc.max_steps):
        joint, r, done, info = env.step((0.0, joint.robot.heading))
        if done:
            break
    assert t == sc.max_steps - 1
    assert info["timeout"] and not info["goal"] and not info["collision"]


def test_subgoal_latches_once():
    sc = SocialNavScenario(robot_start=(0.0, 0.0), robot_goal=(-5.0, 0.0),
                           human_start=(1.0, 0.0), human_goal=(9.0, 0.0))
    env = SocialNavEnv(sc)
    env.reset()
    hits = []
    for _ in range(4):
        _, _, done, info = env.step((0.0, env.joint.robot.heading))
        hits.append(info["subgoal"])
    assert hits == [True, False, False, False]
    assert env.subgoal_achieved


def test_heading_noise_is_seeded():
    sc = SocialNavScenario(human_heading_noise=0.3)
    runs = []
    for _ in range(2):
        env = SocialNavEnv(sc, np.random.default_rng(5))
        env.reset()
        runs.append([env.step((0.0, 0.0))[0].human.px for _ in range(5)])
    assert runs[0] == runs[1]

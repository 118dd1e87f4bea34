import numpy as np
import pytest

from subgoal_rs.envs.gridworld import GridworldScenario
from subgoal_rs.envs.social import SocialNavScenario
from subgoal_rs.harness import (
    ConfigError,
    EpisodeMetrics,
    EvalSummary,
    ExperimentConfig,
    RunSummary,
    TabularPolicy,
    alpha_v_schedule,
    comparison_table,
    config_from_dict,
    emit_learning_curve,
    episodes_to_threshold,
    evaluate_frozen,
    learning_curve,
    read_metrics,
    run_learning,
    sign_test,
    trailing_mean,
    write_metrics,
)

GRID = GridworldScenario(4, 4, (0, 0), (3, 3), ((1, 1),), max_steps=30)


def ep(reward, success=True):
    return EpisodeMetrics(success, False, not success, 5, reward)


def summary(rewards, seed=0):
    return RunSummary("q-learn", seed, [ep(r) for r in rewards])


def test_curve_single_seed_has_zero_error():
    rows = learning_curve([summary([0.0, 1.0, 0.5])])
    assert [r["total_reward_se"] for r in rows] == [0.0, 0.0, 0.0]
    assert [r["total_reward_mean"] for r in rows] == [0.0, 1.0, 0.5]


def test_curve_constant_reward():
    rows = learning_curve([summary([0.1] * 4, s) for s in range(3)], window=2)
    assert all(r["total_reward_mean"] == pytest.approx(0.1) for r in rows)
    assert all(r["total_reward_se"] == pytest.approx(0.0, abs=1e-15) for r in rows)


def test_curve_standard_error_across_seeds():
    rows = learning_curve([summary([0.0]), summary([1.0])])
    assert rows[0]["total_reward_mean"] == 0.5
    assert rows[0]["total_reward_se"] == pytest.approx(0.5)


def test_trailing_mean():
    x = [1.0, 2.0, 3.0, 4.0]
    assert np.array_equal(trailing_mean(x, 1), x)
    np.testing.assert_allclose(trailing_mean(x, 2), [1.0, 1.5, 2.5, 3.5])
    with pytest.raises(ValueError):
        trailing_mean(x, 0)


def test_curve_file_has_a_header(tmp_path):
    path = emit_learning_curve([summary([0.2, 0.4])], 1, tmp_path / "c.csv")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("episode,n_seeds,total_reward_mean,total_reward_se")
    assert len(lines) == 3


def test_rates_partition_the_batch():
    eps = [ep(1.0), ep(0.0, success=False),
           EpisodeMetrics(False, True, False, 3, -0.25)]
    s = EvalSummary.from_episodes(eps)
    assert s.success_rate + s.collision_rate + s.timeout_rate == pytest.approx(1.0)
    with pytest.raises(ValueError):
        EpisodeMetrics(True, True, False, 1, 0.0)


def test_comparison_keeps_the_given_order():
    a = EvalSummary(1, 0.5, 0.0, 0.5, 10.0, 0.19)
    b = EvalSummary(1, 0.1, 0.0, 0.9, 12.0, 0.04)
    rows = comparison_table([("nrs", b), ("dta", a)])
    assert rows[0] == ["method", "success_rate", "nav_time", "collision_rate", "total_reward"]
    assert [r[0] for r in rows[1:]] == ["nrs", "dta"]


@pytest.mark.parametrize("returns,hold,expected", [
    ([0, 1, 1, 1], 2, 2),
    ([1, 0, 1, 1, 1], 3, 3),
    ([0, 0, 0], 1, 4),
    ([1, 0, 1, 1], None, 3),
    ([1, 1, 0], None, 4),
    ([0, 1], 5, 3),
])
def test_episodes_to_threshold(returns, hold, expected):
    assert episodes_to_threshold(returns, 0.9, hold) == expected


def test_sign_test():
    wins, losses, p = sign_test([1, 2, 3, 4, 5, 6], [2, 3, 4, 5, 6, 6])
    assert (wins, losses) == (5, 0)
    assert p == pytest.approx(0.5 ** 5)
    assert sign_test([1], [1]) == (0, 0, 1.0)


def test_config_validation_and_round_trip():
    cfg = ExperimentConfig("dta", GRID, episodes=5, seeds=(3, 4), alpha_v_end=0.0,
                           alpha_v_episodes=2)
    assert config_from_dict(cfg.to_dict()) == cfg
    social = ExperimentConfig("nrs", SocialNavScenario(), hidden=(8, 8))
    assert config_from_dict(social.to_dict()) == social
    with pytest.raises(ConfigError):
        ExperimentConfig("ppo", GRID)
    with pytest.raises(ConfigError):
        ExperimentConfig("dta", GRID, seeds=())
    with pytest.raises(ConfigError):
        config_from_dict({**cfg.to_dict(), "mystery": 1})


def test_alpha_v_schedule():
    assert alpha_v_schedule(ExperimentConfig("dta", GRID)) is None
    sched = alpha_v_schedule(ExperimentConfig("dta", GRID, alpha_v_end=0.0, alpha_v_episodes=11))
    assert sched(0) == 0.1 and sched(10) == 0.0 and sched(100) == 0.0
    assert alpha_v_schedule(ExperimentConfig("q-learn", GRID, alpha_v_end=0.0)) is None


def test_metrics_csv_round_trip(tmp_path):
    eps = [EpisodeMetrics(True, False, False, 7, 1.0, 0.53, 0.1, 0.59),
           EpisodeMetrics(False, False, True, 30, 0.0)]
    write_metrics(tmp_path / "m.csv", eps)
    back = read_metrics(tmp_path / "m.csv")
    assert back[0] == eps[0]
    assert back[1].timeout and np.isnan(back[1].greedy_return)


def test_gridworld_learning_is_deterministic(tmp_path):
    cfg = ExperimentConfig("dta", GRID, episodes=20, seeds=(0, 1), eval_episodes=3)
    first, second = run_learning(cfg), run_learning(cfg)
    for a, b in zip(first, second):
        write_metrics(tmp_path / "a.csv", a.summary.episodes)
        write_metrics(tmp_path / "b.csv", b.summary.episodes)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert np.array_equal(a.policy.q, b.policy.q)
    assert [len(r.summary.episodes) for r in first] == [20, 20]


def test_frozen_evaluation_of_perfect_and_idle_policies():
    cfg = ExperimentConfig("q-learn", GRID, episodes=1, seeds=(0,), augment_state=False)
    right_then_up = np.zeros((16, 4))
    for s in range(16):
        right_then_up[s, 3 if s % 4 < 3 else 0] = 1.0
    good = evaluate_frozen(cfg, [TabularPolicy(right_then_up)], 5, [0])
    assert good.success_rate == 1.0 and good.nav_time == 6.0
    stuck = np.zeros((16, 4))
    stuck[:, 2] = 1.0
    idle = evaluate_frozen(cfg, [TabularPolicy(stuck)], 5, [0])
    assert (idle.success_rate, idle.collision_rate, idle.timeout_rate) == (0.0, 0.0, 1.0)


def test_short_cadrl_run_logs_every_episode():
    cfg = ExperimentConfig("base-cadrl", SocialNavScenario(), episodes=10, seeds=(0,),
                           eval_episodes=2, hidden=(16,), demo_episodes=20, demo_epochs=2)
    (result,) = run_learning(cfg)
    assert len(result.summary.episodes) == 10
    assert result.summary.evaluation.n_episodes == 2

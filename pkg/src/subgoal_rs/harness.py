"""Seeded learning runs, frozen-policy evaluation and CSV reporting."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from subgoal_rs.aggregation import DtaShaper, SubgoalSeries
from subgoal_rs.envs.gridworld import GridworldEnv, GridworldScenario
from subgoal_rs.envs.social import FEATURE_DIM, SocialNavEnv, SocialNavScenario, behind_predicate
from subgoal_rs.learners.cadrl import (
    ActionSet,
    CadrlAgent,
    ReplayBuffer,
    generate_demos,
    initialize_from_demos,
)
from subgoal_rs.learners.network import ValueNetwork
from subgoal_rs.learners.tabular import LinearSchedule, TabularLearner, run_tabular_episode
from subgoal_rs.shaping import NrsShaper, NullShaper

METHODS = ("dta", "nrs", "base-cadrl", "q-learn", "sarsa")
SHAPED = ("dta", "nrs")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    method: str
    scenario: GridworldScenario | SocialNavScenario
    episodes: int = 300
    seeds: tuple[int, ...] = tuple(range(10))
    eval_episodes: int = 500
    gamma: float = 0.9
    alpha: float = 0.5
    alpha_v: float = 0.1
    alpha_v_end: float | None = None
    alpha_v_episodes: int | None = None
    gamma_v: float | None = None
    eps_start: float = 0.5
    eps_end: float = 0.4
    eta: float = 1.0
    tabular_rule: str = "q"
    augment_state: bool = True
    lr: float = 1e-3
    momentum: float = 0.9
    hidden: tuple[int, ...] = (100, 100, 100)
    n_speeds: int = 5
    n_headings: int = 7
    batch_size: int = 64
    updates_per_step: int = 1
    buffer_size: int = 10_000
    demo_episodes: int = 300
    demo_noise: float = 0.3
    demo_epochs: int = 20
    demo_lr: float = 0.01
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.episodes < 1 or self.eval_episodes < 0:
            raise ConfigError("episodes must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must be in (0, 1]")
        for name in ("eps_start", "eps_end", "demo_noise"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        grid = self.is_gridworld
        if self.method == "base-cadrl" and grid:
            raise ConfigError("base-cadrl needs a social scenario")
        if self.method in ("q-learn", "sarsa") and not grid:
            raise ConfigError(f"{self.method} needs a gridworld scenario")
        if self.alpha_v_episodes is not None and self.alpha_v_episodes < 1:
            raise ConfigError("alpha_v_episodes must be positive")
        if self.tabular_rule not in ("q", "sarsa"):
            raise ConfigError("tabular_rule must be 'q' or 'sarsa'")

    @property
    def is_gridworld(self) -> bool:
        return isinstance(self.scenario, GridworldScenario)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "scenario"}
        out["scenario"] = asdict(self.scenario)
        out["scenario_kind"] = "gridworld" if self.is_gridworld else "social"
        return out


def config_from_dict(data: dict) -> ExperimentConfig:
    """Inverse of :meth:`ExperimentConfig.to_dict`."""
    data = dict(data)
    kind = data.pop("scenario_kind")
    cls = GridworldScenario if kind == "gridworld" else SocialNavScenario
    scenario = cls(**data.pop("scenario"))
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return ExperimentConfig(scenario=scenario, **data)


@dataclass
class EpisodeMetrics:
    success: bool
    collision: bool
    timeout: bool
    nav_time: int
    total_reward: float
    discounted_return: float = 0.0
    shaping_total: float = 0.0
    greedy_return: float = float("nan")

    def __post_init__(self):
        if self.success and self.collision:
            raise ValueError("an episode cannot both succeed and collide")


@dataclass
class EvalSummary:
    n_episodes: int
    success_rate: float
    collision_rate: float
    timeout_rate: float
    nav_time: float
    total_reward: float

    @classmethod
    def from_episodes(cls, episodes: Sequence[EpisodeMetrics]) -> "EvalSummary":
        n = len(episodes)
        if n == 0:
            raise ValueError("no episodes to aggregate")
        return cls(n,
                   sum(e.success for e in episodes) / n,
                   sum(e.collision for e in episodes) / n,
                   sum(e.timeout for e in episodes) / n,
                   float(np.mean([e.nav_time for e in episodes])),
                   float(np.mean([e.total_reward for e in episodes])))


@dataclass
class RunSummary:
    method: str
    seed: int
    episodes: list[EpisodeMetrics]
    evaluation: EvalSummary | None = None
    eval_episodes: list[EpisodeMetrics] = field(default_factory=list)

    def recompute_evaluation(self) -> EvalSummary:
        return EvalSummary.from_episodes(self.eval_episodes)


# -- policies ---------------------------------------------------------------

@dataclass
class TabularPolicy:
    q: np.ndarray

    def save(self, path: Path) -> None:
        rows = [["state", *(f"q{a}" for a in range(self.q.shape[1]))]]
        rows += [[s, *map(repr, map(float, row))] for s, row in enumerate(self.q)]
        write_rows(path, rows)

    @classmethod
    def load(cls, path: Path) -> "TabularPolicy":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        return cls(np.array([[float(v) for v in r[1:]] for r in rows]))


@dataclass
class CadrlPolicy:
    net: ValueNetwork
    abstract_values: np.ndarray | None = None

    def save(self, path: Path) -> None:
        self.net.save(path)
        if self.abstract_values is not None:
            write_rows(_values_path(path), [["z", "value"]] + [
                [z, repr(float(v))] for z, v in enumerate(self.abstract_values)])

    @classmethod
    def load(cls, path: Path) -> "CadrlPolicy":
        values = None
        vp = _values_path(path)
        if vp.exists():
            with open(vp, newline="") as fh:
                values = np.array([float(r[1]) for r in list(csv.reader(fh))[1:]])
        return cls(ValueNetwork.load(path), values)


def _values_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_abstract.csv")


# -- construction helpers ---------------------------------------------------

def step_discount(config: ExperimentConfig) -> float:
    """Per-step discount: ``gamma`` on the gridworld, ``gamma ** (dt * v_pref)`` socially."""
    if config.is_gridworld:
        return config.gamma
    sc = config.scenario
    return config.gamma ** (sc.dt * sc.robot_v_pref)


def subgoal_predicates(scenario) -> list:
    if isinstance(scenario, GridworldScenario):
        return scenario.subgoal_predicates()
    window = scenario.subgoal_window
    return [lambda joint: behind_predicate(joint, window)]


def make_shaper(config: ExperimentConfig, abstract_values=None, learn: bool = True):
    g = step_discount(config)
    preds = subgoal_predicates(config.scenario)
    if config.method == "dta":
        shaper = DtaShaper(SubgoalSeries(tuple(preds)), g, config.alpha_v, config.gamma_v,
                           learn=learn)
        if abstract_values is not None:
            shaper.value.values[:] = abstract_values
        return shaper
    if config.method == "nrs":
        return NrsShaper(preds, config.eta, g)
    return NullShaper()


def alpha_v_schedule(config: ExperimentConfig) -> LinearSchedule | None:
    """Per-episode abstract-value step size, or ``None`` when it stays fixed."""
    if config.method != "dta" or config.alpha_v_end is None:
        return None
    return LinearSchedule(config.alpha_v, config.alpha_v_end,
                          config.alpha_v_episodes or config.episodes)


def seed_streams(seed: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]


def greedy_rollout_return(scenario: GridworldScenario, q: np.ndarray, gamma: float,
                          augmented: bool = True) -> float:
    env = GridworldEnv(scenario, augmented)
    env.reset()
    ret = 0.0
    for t in range(scenario.max_steps):
        _, r, done, _ = env.step(int(np.argmax(q[env.observe()])))
        ret += gamma ** t * r
        if done:
            break
    return ret


def _metrics(rec, greedy_return: float = float("nan")) -> EpisodeMetrics:
    return EpisodeMetrics(bool(rec.goal), bool(rec.collision), bool(rec.timeout), rec.steps,
                          rec.total_reward, rec.discounted_return, rec.shaping_total,
                          greedy_return)


# -- learning ---------------------------------------------------------------

@dataclass
class SeedResult:
    summary: RunSummary
    policy: TabularPolicy | CadrlPolicy
    trajectories: list = field(default_factory=list)


def run_seed(config: ExperimentConfig, seed: int, record: bool = False) -> SeedResult:
    """Train one seed and evaluate the frozen policy."""
    explore_rng, env_rng, demo_rng, net_rng, eval_rng = seed_streams(seed)
    schedule = LinearSchedule(config.eps_start, config.eps_end, config.episodes)
    shaper = make_shaper(config)
    value_rate = alpha_v_schedule(config)
    episodes = []
    dumps = []
    if config.is_gridworld:
        sc = config.scenario
        rule = "sarsa" if config.method == "sarsa" else (
            config.tabular_rule if config.method in SHAPED else "q")
        env = GridworldEnv(sc, config.augment_state)
        learner = TabularLearner(env.n_observations, 4, config.alpha, config.gamma, rule)
        for ep in range(config.episodes):
            if value_rate is not None:
                shaper.value.alpha = value_rate(ep)
            rec = run_tabular_episode(env, learner, shaper, schedule(ep), explore_rng,
                                      record=record)
            episodes.append(_metrics(rec, greedy_rollout_return(
                sc, learner.q, config.gamma, config.augment_state)))
            if record:
                dumps.append(rec.rows)
        policy = TabularPolicy(learner.q.copy())
    else:
        agent = build_cadrl_agent(config, explore_rng, demo_rng, net_rng)
        env = SocialNavEnv(config.scenario, env_rng)
        for ep in range(config.episodes):
            if value_rate is not None:
                shaper.value.alpha = value_rate(ep)
            rec = agent.run_episode(env, shaper, schedule(ep), record=record)
            episodes.append(_metrics(rec))
            if record:
                dumps.append(rec.rows)
        values = shaper.value.values.copy() if config.method == "dta" else None
        policy = CadrlPolicy(agent.net.copy(), values)
    summary = RunSummary(config.method, seed, episodes)
    if config.eval_episodes:
        summary.eval_episodes = evaluate_episodes(config, policy, config.eval_episodes, eval_rng)
        summary.evaluation = summary.recompute_evaluation()
    return SeedResult(summary, policy, dumps)


def build_cadrl_agent(config: ExperimentConfig, explore_rng, demo_rng, net_rng) -> CadrlAgent:
    sc = config.scenario
    actions = ActionSet(config.n_speeds, config.n_headings)
    dim = FEATURE_DIM + config.augment_state
    net = ValueNetwork([dim, *config.hidden, 1], net_rng)
    g = step_discount(config)
    if config.demo_episodes:
        demo_env = SocialNavEnv(sc, np.random.default_rng(demo_rng.integers(2**63)))
        demos = generate_demos(demo_env, actions, config.demo_episodes, demo_rng,
                               config.demo_noise, config.augment_state)
        initialize_from_demos(net, demos, g, demo_rng, config.demo_epochs, config.demo_lr,
                              config.momentum, config.batch_size)
    net._velocity = None
    return CadrlAgent(net, explore_rng, actions, config.gamma, config.lr, config.momentum,
                      config.batch_size, config.updates_per_step,
                      ReplayBuffer(config.buffer_size, dim), progress_predicate(config))


def progress_predicate(config: ExperimentConfig):
    """Subgoal test fed to the network input, or ``None`` without state augmentation."""
    if not config.augment_state:
        return None
    return subgoal_predicates(config.scenario)[0]


def evaluate_episodes(config: ExperimentConfig, policy, n_episodes: int,
                      rng: np.random.Generator, record: bool = False,
                      dumps: list | None = None) -> list[EpisodeMetrics]:
    """Roll out ``policy`` with learning off and epsilon 0."""
    out = []
    if config.is_gridworld:
        sc = config.scenario
        env = GridworldEnv(sc, config.augment_state)
        learner = TabularLearner(env.n_observations, 4, config.alpha, config.gamma,
                                 q=policy.q.copy())
        for _ in range(n_episodes):
            rec = run_tabular_episode(env, learner, NullShaper(), 0.0, rng, learn=False,
                                      record=record)
            out.append(_metrics(rec))
            if dumps is not None:
                dumps.append(rec.rows)
        return out
    agent = CadrlAgent(policy.net, rng, ActionSet(config.n_speeds, config.n_headings),
                       config.gamma, progress=progress_predicate(config))
    shaper = make_shaper(config, policy.abstract_values, learn=False)
    env = SocialNavEnv(config.scenario, np.random.default_rng(rng.integers(2**63)))
    for _ in range(n_episodes):
        rec = agent.run_episode(env, shaper, 0.0, learn=False, record=record)
        out.append(_metrics(rec))
        if dumps is not None:
            dumps.append(rec.rows)
    return out


def evaluate_frozen(config: ExperimentConfig, policies: Sequence, n_episodes: int,
                    seeds: Sequence[int]) -> EvalSummary:
    """Pooled metrics of frozen policies, one seed per policy."""
    episodes = []
    for policy, seed in zip(policies, seeds, strict=True):
        episodes += evaluate_episodes(config, policy, n_episodes, seed_streams(seed)[4])
    return EvalSummary.from_episodes(episodes)


def _run_seed_job(args):
    config, seed, record = args
    return run_seed(config, seed, record)


def run_learning(config: ExperimentConfig, record: bool = False) -> list[SeedResult]:
    """Run every seed; results come back in seed order regardless of worker count."""
    jobs = [(config, s, record) for s in config.seeds]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(_run_seed_job, jobs))
    return [_run_seed_job(j) for j in jobs]


# -- statistics -------------------------------------------------------------

def episodes_to_threshold(returns: Sequence[float], threshold: float,
                          hold: int | None = 10) -> int:
    """1-based episode from which ``returns`` stays at or above ``threshold``.

    The level counts as reached once it holds for ``hold`` consecutive
    episodes; ``hold=None`` demands that it holds through the last episode.
    Returns ``len(returns) + 1`` when neither happens.
    """
    n = len(returns)
    need = n if hold is None else hold
    run = 0
    for i, x in enumerate(returns):
        run = run + 1 if x >= threshold else 0
        if run >= need or (hold is None and run and i == n - 1):
            return i + 2 - run
    return n + 1


def sign_test(treatment: Sequence[float], control: Sequence[float]) -> tuple[int, int, float]:
    """One-sided paired sign test for ``treatment < control``. Ties are dropped."""
    wins = sum(t < c for t, c in zip(treatment, control, strict=True))
    losses = sum(t > c for t, c in zip(treatment, control))
    n = wins + losses
    p = 1.0 if n == 0 else float(stats.binomtest(wins, n, 0.5, alternative="greater").pvalue)
    return wins, losses, p


def standard_error(x: np.ndarray, axis: int = 0) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = x.shape[axis]
    if n < 2:
        return np.zeros(np.delete(x.shape, axis))
    return np.std(x, axis=axis, ddof=1) / math.sqrt(n)


def trailing_mean(x: Sequence[float], window: int) -> np.ndarray:
    """Mean of the last ``window`` points at each index (fewer at the start)."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(x, dtype=float)
    if window == 1:
        return x.copy()
    c = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


CURVE_METRICS = ("total_reward", "nav_time", "success", "collision")


def learning_curve(summaries: Sequence[RunSummary], window: int = 1) -> list[dict]:
    if not summaries:
        raise ValueError("need at least one run")
    n = min(len(s.episodes) for s in summaries)
    rows = [{"episode": i + 1, "n_seeds": len(summaries)} for i in range(n)]
    for metric in CURVE_METRICS:
        data = np.array([trailing_mean([float(getattr(e, metric)) for e in s.episodes[:n]],
                                       window) for s in summaries])
        mean = data.mean(axis=0)
        se = standard_error(data)
        for i in range(n):
            rows[i][f"{metric}_mean"] = float(mean[i])
            rows[i][f"{metric}_se"] = float(se[i])
    return rows


def emit_learning_curve(summaries: Sequence[RunSummary], window: int, path: Path) -> Path:
    rows = learning_curve(summaries, window)
    header = list(rows[0])
    write_rows(path, [header] + [[fmt_value(r[h]) for h in header] for r in rows])
    return Path(path)


COMPARISON_COLUMNS = ("method", "success_rate", "nav_time", "collision_rate", "total_reward")


def comparison_table(results: Sequence[tuple[str, EvalSummary]]) -> list[list]:
    """Header plus one row per method, in the order given."""
    rows = [list(COMPARISON_COLUMNS)]
    for method, ev in results:
        rows.append([method, fmt_value(ev.success_rate), fmt_value(ev.nav_time),
                     fmt_value(ev.collision_rate), fmt_value(ev.total_reward)])
    return rows


# -- files ------------------------------------------------------------------

METRIC_COLUMNS = [f.name for f in fields(EpisodeMetrics)]
TRAJECTORY_COLUMNS = ("episode", "step", "robot_x", "robot_y", "robot_vx", "robot_vy",
                      "human_x", "human_y", "human_vx", "human_vy", "reward",
                      "abstract_state", "subgoal_achieved")


def fmt_value(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path: Path, rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue())


def write_metrics(path: Path, episodes: Sequence[EpisodeMetrics]) -> None:
    rows = [["episode", *METRIC_COLUMNS]]
    for i, e in enumerate(episodes, 1):
        rows.append([i, *(fmt_value(getattr(e, c)) for c in METRIC_COLUMNS)])
    write_rows(path, rows)


def read_metrics(path: Path) -> list[EpisodeMetrics]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(EpisodeMetrics(
                success=row["success"] == "1", collision=row["collision"] == "1",
                timeout=row["timeout"] == "1", nav_time=int(row["nav_time"]),
                total_reward=float(row["total_reward"]),
                discounted_return=float(row["discounted_return"]),
                shaping_total=float(row["shaping_total"]),
                greedy_return=float(row["greedy_return"])))
    return out


def write_trajectories(path: Path, episodes: Sequence[list]) -> None:
    rows = [list(TRAJECTORY_COLUMNS)]
    for ep, steps in enumerate(episodes, 1):
        for t, state, r, z, achieved in steps:
            if isinstance(state, tuple):
                robot = [state[0], state[1], 0.0, 0.0]
                human = [""] * 4
            else:
                robot = [state.robot.px, state.robot.py, state.robot.vx, state.robot.vy]
                human = [state.human.px, state.human.py, state.human.vx, state.human.vy]
            rows.append([ep, t, *map(fmt_value, robot), *map(fmt_value, human), fmt_value(float(r)), z,
                         fmt_value(bool(achieved))])
    write_rows(path, rows)


def write_json(path: Path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")

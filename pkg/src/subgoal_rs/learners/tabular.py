"""Tabular Q-learning / SARSA with epsilon-greedy exploration and shaping input."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Q_LEARNING = "q"
SARSA = "sarsa"


@dataclass(frozen=True)
class LinearSchedule:
    """Linear interpolation from ``start`` to ``end`` over ``episodes`` episodes."""

    start: float = 0.5
    end: float = 0.4
    episodes: int = 1

    def __call__(self, episode: int) -> float:
        if self.episodes <= 1:
            return self.end
        frac = min(max(episode / (self.episodes - 1), 0.0), 1.0)
        value = self.start + (self.end - self.start) * frac
        lo, hi = sorted((self.start, self.end))
        return min(max(value, lo), hi)


def select_action_egreedy(q_row: np.ndarray, epsilon: float, rng: np.random.Generator,
                          admissible: np.ndarray | None = None) -> int:
    """Uniform random admissible action with probability ``epsilon``, else greedy.

    Greedy ties go to the lowest index. Draws exactly one uniform number, plus
    one integer when exploring, so the stream stays reproducible.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    actions = np.arange(len(q_row)) if admissible is None else np.asarray(admissible)
    if actions.size == 0:
        raise ValueError("no admissible actions")
    if rng.random() < epsilon:
        return int(actions[rng.integers(actions.size)])
    return int(actions[np.argmax(q_row[actions])])


@dataclass
class TabularLearner:
    n_states: int
    n_actions: int
    alpha: float = 0.5
    gamma: float = 0.9
    rule: str = Q_LEARNING
    q: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.rule not in (Q_LEARNING, SARSA):
            raise ValueError(f"unknown update rule {self.rule!r}")
        if self.q is None:
            self.q = np.zeros((self.n_states, self.n_actions))

    def select(self, state: int, epsilon: float, rng: np.random.Generator) -> int:
        return select_action_egreedy(self.q[state], epsilon, rng)

    def greedy(self, state: int) -> int:
        return int(np.argmax(self.q[state]))

    def update(self, state: int, action: int, reward: float, next_state: int,
               terminal: bool, shaping: float = 0.0, next_action: int | None = None) -> float:
        """One shaped TD update; returns the TD error."""
        if terminal:
            bootstrap = 0.0
        elif self.rule == SARSA:
            if next_action is None:
                raise ValueError("SARSA needs the next action")
            bootstrap = self.q[next_state, next_action]
        else:
            bootstrap = self.q[next_state].max()
        delta = reward + shaping + self.gamma * bootstrap - self.q[state, action]
        self.q[state, action] += self.alpha * delta
        return delta


def tabular_update(learner: TabularLearner, step, shaping: float, terminal: bool,
                   next_action: int | None = None) -> float:
    """Apply a :class:`subgoal_rs.mdp.Step` to ``learner``."""
    return learner.update(step.state, step.action, step.reward, step.next_state, terminal,
                          shaping, next_action)


@dataclass
class EpisodeRecord:
    steps: int
    total_reward: float
    discounted_return: float
    goal: bool
    collision: bool
    timeout: bool
    shaping_total: float = 0.0
    rows: list = field(default_factory=list)


def run_tabular_episode(env, learner: TabularLearner, shaper, epsilon: float,
                        rng: np.random.Generator, learn: bool = True,
                        record: bool = False) -> EpisodeRecord:
    """Play one gridworld episode, updating ``learner`` when ``learn``."""
    cell = env.reset()
    shaper.reset(cell)
    s = env.observe()
    a = learner.select(s, epsilon, rng)
    total = disc = shaping_total = 0.0
    rows = []
    t = 0
    while True:
        cell2, r, done, info = env.step(a)
        s2 = env.observe()
        terminal = info["goal"] or info["collision"]
        f = shaper.step(cell2, r, terminal=terminal, is_goal=info["goal"])
        # SARSA needs a' for its target; Q-learning picks it from the updated table
        sarsa = learner.rule == SARSA
        a2 = learner.select(s2, epsilon, rng) if sarsa and not terminal else None
        if learn:
            learner.update(s, a, r, s2, terminal, f, a2)
        if not sarsa and not done:
            a2 = learner.select(s2, epsilon, rng)
        total += r
        disc += learner.gamma ** t * r
        shaping_total += f
        if record:
            rows.append((t, cell2, r, getattr(shaper, "z", 0), info["subgoal"]))
        t += 1
        if done:
            return EpisodeRecord(t, total, disc, info["goal"], info["collision"],
                                 info["timeout"], shaping_total, rows)
        s, a = s2, a2

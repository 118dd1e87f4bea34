"""Deterministic subgoal gridworld used for exact, oracle-checked experiments."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from subgoal_rs.mdp import DiscreteMdp

UP, DOWN, LEFT, RIGHT = range(4)
ACTION_NAMES = ("up", "down", "left", "right")
_MOVES = {UP: (0, 1), DOWN: (0, -1), LEFT: (-1, 0), RIGHT: (1, 0)}

Cell = tuple[int, int]


@dataclass(frozen=True)
class GridworldScenario:
    width: int = 7
    height: int = 7
    start: Cell = (0, 0)
    goal: Cell = (6, 6)
    subgoals: tuple[Cell, ...] = ((3, 3),)
    step_reward: float = 0.0
    goal_reward: float = 1.0
    max_steps: int = 200
    walls: tuple[Cell, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "start", tuple(self.start))
        object.__setattr__(self, "goal", tuple(self.goal))
        object.__setattr__(self, "subgoals", tuple(tuple(c) for c in self.subgoals))
        object.__setattr__(self, "walls", tuple(tuple(c) for c in self.walls))
        cells = [self.start, self.goal, *self.subgoals]
        for c in cells + list(self.walls):
            if not (0 <= c[0] < self.width and 0 <= c[1] < self.height):
                raise ValueError(f"cell {c} is outside the {self.width}x{self.height} grid")
        if len(set(cells)) != len(cells):
            raise ValueError("start, goal and subgoal cells must be distinct")
        if set(cells) & set(self.walls):
            raise ValueError("start, goal and subgoals cannot be walls")

    @property
    def n_states(self) -> int:
        return self.width * self.height

    def index(self, cell: Cell) -> int:
        return cell[1] * self.width + cell[0]

    def cell(self, index: int) -> Cell:
        return index % self.width, index // self.width

    def subgoal_predicates(self):
        return [lambda s, c=c: s == c for c in self.subgoals]


def step_grid(scenario: GridworldScenario, cell: Cell, action: int) -> tuple[Cell, float, bool]:
    """Move one cell; the border and wall cells block. Returns ``(next_cell, reward, terminal)``."""
    if action not in _MOVES:
        raise ValueError(f"invalid action {action}")
    dx, dy = _MOVES[action]
    nxt = (min(max(cell[0] + dx, 0), scenario.width - 1),
           min(max(cell[1] + dy, 0), scenario.height - 1))
    if nxt in scenario.walls:
        nxt = cell
    if nxt == scenario.goal:
        return nxt, scenario.goal_reward, True
    return nxt, scenario.step_reward, False


@dataclass
class GridworldEnv:
    """Episodic gridworld.

    With ``augmented`` set, :meth:`observe` numbers states by
    ``(achieved, cell)`` so a learner can tell how many subgoals have been
    passed. Without it the observation is just the cell index.
    """

    scenario: GridworldScenario
    augmented: bool = False
    cell: Cell = field(init=False)
    steps: int = field(init=False, default=0)
    achieved: int = field(init=False, default=0)

    n_actions = 4

    @property
    def n_observations(self) -> int:
        n = self.scenario.n_states
        return n * (len(self.scenario.subgoals) + 1) if self.augmented else n

    def observe(self, cell: Cell | None = None) -> int:
        cell = self.cell if cell is None else cell
        s = self.scenario.index(cell)
        return s + self.achieved * self.scenario.n_states if self.augmented else s

    def reset(self) -> Cell:
        self.cell = self.scenario.start
        self.steps = 0
        self.achieved = 0
        return self.cell

    def step(self, action: int) -> tuple[Cell, float, bool, dict]:
        """Returns ``(cell, reward, done, info)``; ``info['subgoal']`` flags an achievement."""
        self.cell, reward, terminal = step_grid(self.scenario, self.cell, action)
        self.steps += 1
        hit = (self.achieved < len(self.scenario.subgoals)
               and self.cell == self.scenario.subgoals[self.achieved])
        if hit:
            self.achieved += 1
        timeout = not terminal and self.steps >= self.scenario.max_steps
        info = {"goal": terminal, "subgoal": hit, "timeout": timeout, "collision": False}
        return self.cell, reward, terminal or timeout, info


def gridworld_mdp(scenario: GridworldScenario, gamma: float) -> DiscreteMdp:
    """Exact tabular model of the gridworld (goal absorbing)."""
    n = scenario.n_states
    p = np.zeros((n, 4, n))
    r = np.zeros_like(p)
    g = scenario.index(scenario.goal)
    for s in range(n):
        if s == g:
            p[s, :, s] = 1.0
            continue
        for a in range(4):
            nxt, rew, _ = step_grid(scenario, scenario.cell(s), a)
            s2 = scenario.index(nxt)
            p[s, a, s2] = 1.0
            r[s, a, s2] = rew
    return DiscreteMdp(p, r, gamma, frozenset({g}))

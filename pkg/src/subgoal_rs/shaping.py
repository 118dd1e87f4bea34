"""Potential-based reward shaping primitives and the naive subgoal potential."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterable

Predicate = Callable[[Any], bool]


def pbrs_reward(phi_s: float, phi_s_next: float, gamma: float) -> float:
    return gamma * phi_s_next - phi_s


def shaped_td_target(r: float, f: float, bootstrap: float, gamma: float) -> float:
    """TD target ``r + F + gamma * bootstrap``; pass ``bootstrap=0`` on terminal transitions."""
    return r + f + gamma * bootstrap


def nrs_potential(state, subgoals: Iterable[Predicate], eta: float) -> float:
    """``eta`` when ``state`` satisfies any subgoal predicate, else 0."""
    return eta if any(sg(state) for sg in subgoals) else 0.0


@dataclass(frozen=True)
class ShapingConfig:
    gamma: float = 0.9
    eta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")


class Potential:
    """A static state potential; terminal states always evaluate to 0."""

    time_varying = False

    def __init__(self, fn: Callable[[Any], float]):
        self._fn = fn

    def __call__(self, state, terminal: bool = False) -> float:
        return 0.0 if terminal else float(self._fn(state))

    def shaping(self, state, next_state, gamma: float, terminal: bool = False) -> float:
        return pbrs_reward(self(state), self(next_state, terminal), gamma)


class NrsShaper:
    """Naive reward shaping with a fixed subgoal potential.

    Exposes the same episode protocol as :class:`subgoal_rs.aggregation.DtaShaper`
    so learners can swap one for the other.
    """

    def __init__(self, subgoals: Iterable[Predicate], eta: float, gamma: float):
        self.subgoals = list(subgoals)
        self.eta = eta
        self.gamma = gamma
        self._phi = 0.0

    def reset(self, state) -> None:
        self._phi = nrs_potential(state, self.subgoals, self.eta)

    def potential(self, state, terminal: bool = False) -> float:
        return 0.0 if terminal else nrs_potential(state, self.subgoals, self.eta)

    def preview(self, next_state, terminal: bool = False, is_goal: bool = False) -> float:
        """Shaping for a hypothetical transition from the current state; no side effects."""
        return pbrs_reward(self._phi, self.potential(next_state, terminal), self.gamma)

    def step(self, next_state, reward: float, terminal: bool = False,
             is_goal: bool = False) -> float:
        phi_next = self.potential(next_state, terminal)
        f = pbrs_reward(self._phi, phi_next, self.gamma)
        self._phi = phi_next
        return f


class NullShaper:
    """No shaping; keeps the learners' code path uniform."""

    def reset(self, state) -> None:
        pass

    def preview(self, next_state, terminal: bool = False, is_goal: bool = False) -> float:
        return 0.0

    def step(self, next_state, reward: float, terminal: bool = False,
             is_goal: bool = False) -> float:
        return 0.0

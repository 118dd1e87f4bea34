"""Subgoal-based dynamic trajectory aggregation (DTA) for SARSA-RS.

Ground states are aggregated on the fly by how many subgoals of a series the
current episode has achieved. A table ``V`` over those abstract states is
learned with SMDP-style multi-step TD updates fired at subgoal/goal events and
used as the shaping potential ``Phi(s) = V(z)``.

Per environment step the order of operations is::

    z' <- abstract state of s'
    if s' reaches the next subgoal or the goal:
        goal:    delta = r_h + gamma_v^k r       - V(z)
        subgoal: delta = r_h + gamma_v^k V(z')   - V(z)
        V(z) += alpha_v delta;  reset the accumulator
    r_h += gamma^t r;  t += 1
    F = gamma V(z') - V(z)          (V(z') taken as 0 on terminal transitions)

so the reward of a subgoal transition opens the next segment. ``k`` counts the
steps since the previous event including the current one; the first segment of
an episode starts from a zero-reward entry step, which keeps ``k >= 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

Predicate = Callable[[Any], bool]

TOTAL = "total"
PARTIAL = "partial"


class ContractViolation(ValueError):
    pass


@dataclass(frozen=True)
class SubgoalSeries:
    """Subgoal predicates ``sg_0 < sg_1 < ... < sg_{n-1}``.

    For a partial order, ``successors`` maps the index of the last achieved
    subgoal (``-1`` before any) to the indices admissible next.
    """

    subgoals: tuple[Predicate, ...]
    ordering: str = TOTAL
    successors: Mapping[int, tuple[int, ...]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "subgoals", tuple(self.subgoals))
        if not self.subgoals:
            raise ContractViolation("a subgoal series needs at least one subgoal")
        if self.ordering not in (TOTAL, PARTIAL):
            raise ContractViolation(f"unknown ordering {self.ordering!r}")
        if self.ordering == PARTIAL and self.successors is None:
            raise ContractViolation("partial ordering requires a successor map")

    def __len__(self):
        return len(self.subgoals)

    @property
    def n_abstract(self) -> int:
        return len(self.subgoals) + 1

    def admissible(self, last: int, achieved: frozenset[int] = frozenset()) -> tuple[int, ...]:
        if self.ordering == TOTAL:
            nxt = last + 1
            return (nxt,) if nxt < len(self.subgoals) else ()
        return tuple(i for i in self.successors.get(last, ()) if i not in achieved)


def abstract_state(achieved: int, n_subgoals: int) -> int:
    """Abstract state index for ``achieved`` completed subgoals (the ``filter`` step)."""
    if not 0 <= achieved <= n_subgoals:
        raise ContractViolation(f"achievement count {achieved} outside [0, {n_subgoals}]")
    return achieved


def check_advance(state, series: SubgoalSeries, current: int) -> bool:
    """Whether ``state`` satisfies the next unachieved subgoal of a total order.

    ``current`` is the number of subgoals achieved so far; only
    ``series.subgoals[current]`` is tested.
    """
    if current >= len(series):
        return False
    return bool(series.subgoals[current](state))


@dataclass(frozen=True)
class RewardAccumulator:
    r_h: float = 0.0
    t: int = 0


def accumulate(acc: RewardAccumulator, r: float, gamma: float) -> RewardAccumulator:
    return RewardAccumulator(acc.r_h + gamma ** acc.t * r, acc.t + 1)


@dataclass
class AbstractValueFunction:
    n_states: int
    alpha: float = 0.1
    gamma: float = 0.9
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.values is None:
            self.values = np.zeros(self.n_states)
        else:
            self.values = np.asarray(self.values, dtype=float).copy()
            if self.values.shape != (self.n_states,):
                raise ContractViolation("value table does not match the abstract state count")

    def __getitem__(self, z: int) -> float:
        return float(self.values[z])


def update_on_subgoal(v: AbstractValueFunction, z: int, z_next: int, r_h: float, k: int,
                      is_goal: bool, reward: float = 0.0) -> float:
    """Apply the event-time TD update to ``v`` in place and return the TD error.

    On the goal the target is ``r_h + gamma_v^k * reward`` with no bootstrap;
    otherwise ``r_h + gamma_v^k * V(z_next)``.
    """
    if k < 1:
        raise ContractViolation("update_on_subgoal needs a segment of at least one step")
    if not is_goal and z_next != z + 1:
        raise ContractViolation(f"no subgoal event between z={z} and z'={z_next}")
    tail = reward if is_goal else v[z_next]
    delta = r_h + v.gamma ** k * tail - v[z]
    v.values[z] += v.alpha * delta
    return delta


def dta_shaping_reward(v: AbstractValueFunction, z: int, z_next: int, gamma: float) -> float:
    return gamma * v[z_next] - v[z]


@dataclass(frozen=True)
class SubgoalEvent:
    z: int
    z_next: int
    k: int
    r_h: float
    is_goal: bool
    delta: float


class DtaShaper:
    """Per-run DTA context: abstract value table plus the per-episode cursor.

    ``step`` must be called once per environment transition with the
    post-transition state; it performs the event-time value update and returns
    the shaping reward for that transition.
    """

    def __init__(self, series: SubgoalSeries, gamma: float, alpha_v: float = 0.1,
                 gamma_v: float | None = None, learn: bool = True):
        self.series = series
        self.gamma = gamma
        self.value = AbstractValueFunction(series.n_abstract, alpha_v,
                                           gamma if gamma_v is None else gamma_v)
        self.learn = learn
        self.events: list[SubgoalEvent] = []
        self.reset()

    def reset(self, state=None) -> None:
        self.achieved = 0
        self._last = -1
        self._done: frozenset[int] = frozenset()
        self.z = abstract_state(0, len(self.series))
        self.acc = accumulate(RewardAccumulator(), 0.0, self.gamma)

    def _advances(self, state) -> int | None:
        """Index of the subgoal ``state`` achieves next, if any."""
        if self.series.ordering == TOTAL:
            return self.achieved if check_advance(state, self.series, self.achieved) else None
        for i in self.series.admissible(self._last, self._done):
            if self.series.subgoals[i](state):
                return i
        return None

    def potential(self, z: int, terminal: bool = False) -> float:
        return 0.0 if terminal else self.value[z]

    def replay_shaping(self, z, z_next, terminal) -> np.ndarray:
        """Shaping of stored ``z -> z_next`` transitions under the current table.

        Replayed experience can be re-shaped with today's potential instead of
        the one in force when it was collected.
        """
        v = self.value.values
        z, z_next = np.asarray(z), np.asarray(z_next)
        return self.gamma * np.where(terminal, 0.0, v[z_next]) - v[z]

    def preview(self, next_state, terminal: bool = False, is_goal: bool = False) -> float:
        """Shaping for a candidate transition under the current table; no side effects."""
        z_next = self.z
        if not terminal and self.achieved < len(self.series) and self._advances(next_state) is not None:
            z_next = self.z + 1
        return self.gamma * self.potential(z_next, terminal) - self.value[self.z]

    def step(self, next_state, reward: float, terminal: bool = False,
             is_goal: bool = False) -> float:
        hit = None
        if not is_goal and self.achieved < len(self.series):
            hit = self._advances(next_state)
        z_next = abstract_state(self.achieved + (hit is not None), len(self.series))
        if is_goal or hit is not None:
            if self.learn:
                delta = update_on_subgoal(self.value, self.z, z_next, self.acc.r_h, self.acc.t,
                                          is_goal, reward)
                self.events.append(SubgoalEvent(self.z, z_next, self.acc.t, self.acc.r_h,
                                                is_goal, delta))
            self.acc = RewardAccumulator()
            if hit is not None:
                self.achieved += 1
                self._last = hit
                self._done = self._done | {hit}
        self.acc = accumulate(self.acc, reward, self.gamma)
        f = self.gamma * self.potential(z_next, terminal) - self.value[self.z]
        self.z = z_next
        return f

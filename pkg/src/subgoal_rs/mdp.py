"""Finite MDPs, trajectory records and a value-iteration oracle.

Fixture grammar (one directive per line, ``#`` starts a comment)::

    states 4
    actions 2
    gamma 0.9
    terminal 3            # zero or more terminal state indices
    t 0 1 2 0.8 0.0       # state action next_state probability reward

Transitions not listed have probability zero. Terminal states get an
implicit zero-reward self loop and must not carry ``t`` lines.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Hashable, Iterable, Sequence

import numpy as np

PROB_TOL = 1e-9
TIE_TOL = 1e-9
MAX_SWEEPS = 100_000


class OracleFailure(RuntimeError):
    """Value iteration did not converge within the sweep cap."""


class MdpFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class DiscreteMdp:
    """Tabular MDP with dense ``transition[s, a, s']`` and ``reward[s, a, s']``."""

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    terminal: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        p = np.asarray(self.transition, dtype=float)
        r = np.asarray(self.reward, dtype=float)
        if p.ndim != 3 or p.shape[0] != p.shape[2] or p.shape != r.shape:
            raise ValueError(f"bad shapes: transition {p.shape}, reward {r.shape}")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError(f"discount must be in (0, 1], got {self.discount}")
        if np.any(p < 0):
            raise ValueError("negative transition probability")
        sums = p.sum(axis=2)
        if np.any(np.abs(sums - 1.0) > PROB_TOL):
            s, a = np.argwhere(np.abs(sums - 1.0) > PROB_TOL)[0]
            raise ValueError(f"transition ({s}, {a}) sums to {sums[s, a]!r}")
        for s in self.terminal:
            if not (p[s, :, s] == 1.0).all() or np.any(r[s] != 0.0):
                raise ValueError(f"terminal state {s} must self-loop with reward 0")
        p.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "terminal", frozenset(int(s) for s in self.terminal))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def nonterminal_states(self) -> list[int]:
        return [s for s in range(self.n_states) if s not in self.terminal]

    def with_reward(self, reward: np.ndarray) -> "DiscreteMdp":
        return DiscreteMdp(self.transition, reward, self.discount, self.terminal)


@dataclass(frozen=True)
class Step:
    state: Hashable
    action: int
    reward: float
    next_state: Hashable
    index: int


@dataclass
class Trajectory:
    steps: list[Step] = field(default_factory=list)
    terminal: bool = False

    def append(self, state, action, reward, next_state) -> Step:
        if self.steps and self.steps[-1].next_state != state:
            raise ValueError("trajectory steps must chain")
        step = Step(state, int(action), float(reward), next_state, len(self.steps))
        self.steps.append(step)
        return step

    def states(self) -> list[Any]:
        if not self.steps:
            return []
        return [s.state for s in self.steps] + [self.steps[-1].next_state]

    def rewards(self) -> list[float]:
        return [s.reward for s in self.steps]

    def __len__(self):
        return len(self.steps)


def q_backup(mdp: DiscreteMdp, values: np.ndarray) -> np.ndarray:
    """One-step lookahead ``Q[s, a] = sum_s' P (R + gamma V(s'))``."""
    v = np.asarray(values, dtype=float).copy()
    if mdp.terminal:
        v[list(mdp.terminal)] = 0.0
    return np.einsum("ijk,ijk->ij", mdp.transition, mdp.reward + mdp.discount * v[None, None, :])


def value_iteration(mdp: DiscreteMdp, tolerance: float = 1e-8,
                    max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Optimal state values with max-norm Bellman residual below ``tolerance``."""
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    v = np.zeros(mdp.n_states)
    for _ in range(max_sweeps):
        new = q_backup(mdp, v).max(axis=1)
        if mdp.terminal:
            new[list(mdp.terminal)] = 0.0
        residual = np.max(np.abs(new - v))
        v = new
        if residual < tolerance:
            # residual of the returned vector is at most gamma * residual
            return v
    raise OracleFailure(f"no convergence after {max_sweeps} sweeps (residual {residual:.3g})")


def greedy_policy(mdp: DiscreteMdp, values: np.ndarray,
                  tie_tol: float = TIE_TOL) -> dict[int, frozenset[int]]:
    """Every action within ``tie_tol`` of the best Q-backup, per non-terminal state."""
    q = q_backup(mdp, values)
    out = {}
    for s in mdp.nonterminal_states():
        best = q[s].max()
        out[s] = frozenset(int(a) for a in np.flatnonzero(q[s] >= best - tie_tol))
    return out


def shaped_reward(mdp: DiscreteMdp, potential: Sequence[float]) -> np.ndarray:
    """``R + F`` with ``F(s, s') = gamma Phi(s') - Phi(s)`` and zero potential at terminals."""
    phi = np.asarray(potential, dtype=float).copy()
    if mdp.terminal:
        phi[list(mdp.terminal)] = 0.0
    f = mdp.discount * phi[None, None, :] - phi[:, None, None]
    r = mdp.reward + f
    for s in mdp.terminal:
        r[s] = 0.0
    return r


def parse_mdp(text: str) -> DiscreteMdp:
    n_states = n_actions = None
    gamma = None
    terminal: set[int] = set()
    triples: list[tuple[int, int, int, int, float, float]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        try:
            if key == "states":
                n_states = int(args[0])
            elif key == "actions":
                n_actions = int(args[0])
            elif key == "gamma":
                gamma = float(args[0])
            elif key == "terminal":
                terminal.update(int(a) for a in args)
            elif key == "t":
                if len(args) != 5:
                    raise MdpFormatError(lineno, "expected: t state action next prob reward")
                s, a, s2 = (int(x) for x in args[:3])
                triples.append((lineno, s, a, s2, float(args[3]), float(args[4])))
            else:
                raise MdpFormatError(lineno, f"unknown directive {key!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, MdpFormatError):
                raise
            raise MdpFormatError(lineno, f"cannot parse {line!r}") from exc
    if n_states is None or n_actions is None or gamma is None:
        raise MdpFormatError(0, "states, actions and gamma are required")
    p = np.zeros((n_states, n_actions, n_states))
    r = np.zeros_like(p)
    for lineno, s, a, s2, prob, rew in triples:
        if not (0 <= s < n_states and 0 <= s2 < n_states and 0 <= a < n_actions):
            raise MdpFormatError(lineno, "index out of range")
        if s in terminal:
            raise MdpFormatError(lineno, f"terminal state {s} cannot have transitions")
        p[s, a, s2] += prob
        r[s, a, s2] = rew
    for s in terminal:
        if not 0 <= s < n_states:
            raise MdpFormatError(0, f"terminal state {s} out of range")
        p[s, :, s] = 1.0
    return DiscreteMdp(p, r, gamma, frozenset(terminal))


def load_mdp(path: str | Path) -> DiscreteMdp:
    return parse_mdp(Path(path).read_text())


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int,
               gamma: float = 0.9, n_terminal: int = 1, branching: int = 3,
               reward_grid: Iterable[float] | None = None) -> DiscreteMdp:
    """Random sparse MDP; rewards drawn from ``reward_grid`` when given (makes ties likely)."""
    p = np.zeros((n_states, n_actions, n_states))
    r = np.zeros_like(p)
    terminal = set(range(n_states - n_terminal, n_states))
    grid = None if reward_grid is None else np.asarray(list(reward_grid), dtype=float)
    for s in range(n_states):
        if s in terminal:
            p[s, :, s] = 1.0
            continue
        for a in range(n_actions):
            k = min(int(rng.integers(1, branching + 1)), n_states)
            succ = rng.choice(n_states, size=k, replace=False)
            w = rng.dirichlet(np.ones(k))
            p[s, a, succ] = w
            p[s, a] /= p[s, a].sum()
            r[s, a, succ] = rng.choice(grid, size=k) if grid is not None else rng.normal(size=k)
    return DiscreteMdp(p, r, gamma, frozenset(terminal))

"""Plain-text scenario files.

One ``key = value`` per line, ``#`` comments. Pairs are written ``x, y``;
lists of pairs are separated by ``;``. The ``kind`` key selects the
environment::

    kind = gridworld
    width = 7
    height = 7
    start = 0, 0
    goal = 6, 6
    subgoals = 3, 3
    walls = 3, 0; 3, 1; 3, 2
    max_steps = 200

    kind = social
    robot_start = -1, -1
    robot_goal = 1, 1
    human_start = 1, -1
    human_goal = -1, 1
    dt = 0.25
    max_steps = 25
    subgoal = behind
    subgoal_window = 135, 225
"""
from __future__ import annotations

from dataclasses import fields
from pathlib import Path

from subgoal_rs.envs.gridworld import GridworldScenario
from subgoal_rs.envs.social import SocialNavScenario

DEFAULT_DIR = Path(__file__).parent / "scenarios"


class ScenarioError(ValueError):
    def __init__(self, message: str, lineno: int | None = None, source: str = "<scenario>"):
        where = source if lineno is None else f"{source}:{lineno}"
        super().__init__(f"{where}: {message}")
        self.lineno = lineno


def _pair(text: str, cast):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'x, y', got {text!r}")
    return cast(parts[0]), cast(parts[1])


def _pairs(text: str) -> tuple:
    return tuple(_pair(p, int) for p in text.split(";") if p.strip())


_GRID_KEYS = {
    "width": int, "height": int, "max_steps": int,
    "step_reward": float, "goal_reward": float,
    "start": lambda v: _pair(v, int), "goal": lambda v: _pair(v, int),
    "subgoals": lambda v: _pairs(v), "walls": lambda v: _pairs(v),
}

_SOCIAL_KEYS = {
    "robot_start": lambda v: _pair(v, float), "robot_goal": lambda v: _pair(v, float),
    "human_start": lambda v: _pair(v, float), "human_goal": lambda v: _pair(v, float),
    "dt": float, "max_steps": int, "robot_radius": float, "human_radius": float,
    "robot_v_pref": float, "human_v_pref": float,
    "subgoal_window": lambda v: _pair(v, float),
    "human_avoid_gain": float, "human_heading_noise": float,
}

SUBGOAL_TYPES = ("behind",)


def parse_scenario(text: str, source: str = "<scenario>"):
    entries: dict[str, tuple[int, str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ScenarioError(f"expected 'key = value', got {line!r}", lineno, source)
        key = key.strip()
        if key in entries:
            raise ScenarioError(f"duplicate key {key!r}", lineno, source)
        entries[key] = (lineno, value.strip())
    if "kind" not in entries:
        raise ScenarioError("missing 'kind' (gridworld or social)", None, source)
    lineno, kind = entries.pop("kind")
    if kind == "gridworld":
        table, cls = _GRID_KEYS, GridworldScenario
    elif kind == "social":
        table, cls = _SOCIAL_KEYS, SocialNavScenario
        if "subgoal" in entries:
            sl, sg = entries.pop("subgoal")
            if sg not in SUBGOAL_TYPES:
                raise ScenarioError(f"unknown subgoal type {sg!r}", sl, source)
    else:
        raise ScenarioError(f"unknown kind {kind!r}", lineno, source)
    kwargs = {}
    for key, (lineno, value) in entries.items():
        if key not in table:
            raise ScenarioError(f"unknown key {key!r} for {kind}", lineno, source)
        try:
            kwargs[key] = table[key](value)
        except ValueError as exc:
            raise ScenarioError(f"bad value for {key}: {exc}", lineno, source) from None
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ScenarioError(str(exc), None, source) from None


def load_scenario(path: str | Path):
    path = Path(path)
    if not path.exists() and (DEFAULT_DIR / path.name).exists():
        path = DEFAULT_DIR / path.name
    return parse_scenario(path.read_text(), str(path))


def format_scenario(scenario) -> str:
    kind = "gridworld" if isinstance(scenario, GridworldScenario) else "social"
    lines = [f"kind = {kind}"]
    for f in fields(scenario):
        v = getattr(scenario, f.name)
        if f.name in ("subgoals", "walls"):
            text = "; ".join(f"{a}, {b}" for a, b in v)
        elif isinstance(v, tuple):
            text = f"{v[0]!r}, {v[1]!r}"
        else:
            text = repr(v)
        lines.append(f"{f.name} = {text}")
    if kind == "social":
        lines.append("subgoal = behind")
    return "\n".join(lines) + "\n"

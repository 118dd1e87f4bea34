"""One robot, one scripted human, CADRL reward.

Actions are ``(speed, heading)`` velocity commands. Both agents move linearly
for ``dt``; the human follows a straight-to-goal policy with a perpendicular
side-step when the robot gets close (a stand-in for ORCA).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

FEATURE_DIM = 14


class Termination(str, enum.Enum):
    NONE = "none"
    GOAL = "goal"
    COLLISION = "collision"
    TIMEOUT = "timeout"


def wrap_angle(a: float) -> float:
    """Map to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2 * math.pi)
    if a <= 0:
        a += 2 * math.pi
    return a - math.pi


@dataclass(frozen=True)
class AgentState:
    px: float
    py: float
    vx: float
    vy: float
    radius: float
    gx: float
    gy: float
    v_pref: float
    heading: float

    def __post_init__(self):
        if self.radius <= 0 or self.v_pref <= 0:
            raise ValueError("radius and v_pref must be positive")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.px, self.py])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy])

    @property
    def goal(self) -> np.ndarray:
        return np.array([self.gx, self.gy])

    def observable(self) -> list[float]:
        return [self.px, self.py, self.vx, self.vy, self.radius]

    def full(self) -> list[float]:
        return self.observable() + [self.gx, self.gy, self.v_pref, self.heading]

    def goal_distance(self) -> float:
        return math.hypot(self.gx - self.px, self.gy - self.py)

    def moved(self, vx: float, vy: float, dt: float, heading: float | None = None) -> "AgentState":
        return replace(self, px=self.px + vx * dt, py=self.py + vy * dt, vx=vx, vy=vy,
                       heading=self.heading if heading is None else wrap_angle(heading))


@dataclass(frozen=True)
class JointState:
    """Robot full state plus the human's observable state."""

    robot: AgentState
    human: AgentState

    def features(self) -> np.ndarray:
        return np.array(self.robot.full() + self.human.observable(), dtype=float)


@dataclass(frozen=True)
class SocialNavScenario:
    robot_start: tuple[float, float] = (-1.0, -1.0)
    robot_goal: tuple[float, float] = (1.0, 1.0)
    human_start: tuple[float, float] = (1.0, -1.0)
    human_goal: tuple[float, float] = (-1.0, 1.0)
    dt: float = 0.25
    max_steps: int = 25
    robot_radius: float = 0.3
    human_radius: float = 0.3
    robot_v_pref: float = 1.0
    human_v_pref: float = 1.0
    subgoal_window: tuple[float, float] = (135.0, 225.0)
    human_avoid_gain: float = 1.0
    human_heading_noise: float = 0.0

    def __post_init__(self):
        for name in ("robot_start", "robot_goal", "human_start", "human_goal", "subgoal_window"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.dt <= 0 or self.max_steps <= 0:
            raise ValueError("dt and max_steps must be positive")
        lo, hi = self.subgoal_window
        if not 0.0 <= lo <= hi <= 360.0:
            raise ValueError(f"bad subgoal window {self.subgoal_window}")

    def initial_state(self) -> JointState:
        rx, ry = self.robot_start
        rgx, rgy = self.robot_goal
        hx, hy = self.human_start
        hgx, hgy = self.human_goal
        robot = AgentState(rx, ry, 0.0, 0.0, self.robot_radius, rgx, rgy, self.robot_v_pref,
                           math.atan2(rgy - ry, rgx - rx))
        human = AgentState(hx, hy, 0.0, 0.0, self.human_radius, hgx, hgy, self.human_v_pref,
                           math.atan2(hgy - hy, hgx - hx))
        return JointState(robot, human)


def min_separation(p_r, v_r, p_h, v_h, radii, dt: float) -> float:
    """Smallest centre distance minus summed radii over ``tau in [0, dt]`` of linear motion."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    d = np.asarray(p_r, dtype=float) - np.asarray(p_h, dtype=float)
    w = np.asarray(v_r, dtype=float) - np.asarray(v_h, dtype=float)
    ww = float(w @ w)
    tau = 0.0 if ww == 0.0 else min(max(-float(d @ w) / ww, 0.0), dt)
    gap = d + tau * w
    r = radii if np.ndim(radii) == 0 else sum(radii)
    return math.hypot(gap[0], gap[1]) - float(r)


def reward_for(d_min: float, reached_goal: bool) -> float:
    if d_min < 0:
        return -0.25
    if d_min < 0.2:
        return -0.1 - d_min / 2
    if reached_goal:
        return 1.0
    return 0.0


def action_velocity(action) -> tuple[float, float]:
    speed, heading = action
    return speed * math.cos(heading), speed * math.sin(heading)


def reached(agent: AgentState) -> bool:
    return agent.goal_distance() <= agent.radius


def social_reward(joint: JointState, action, dt: float,
                  human_velocity: tuple[float, float] | None = None) -> float:
    """Reward for ``action``; the human keeps its observed velocity unless given."""
    vx, vy = action_velocity(action)
    hv = joint.human.velocity if human_velocity is None else human_velocity
    d_min = min_separation(joint.robot.position, (vx, vy), joint.human.position, hv,
                           (joint.robot.radius, joint.human.radius), dt)
    end = joint.robot.moved(vx, vy, dt)
    return reward_for(d_min, reached(end))


def behind_angle(joint: JointState) -> float | None:
    """Angle in [0, 360) from the human's velocity to the human->robot vector, in degrees."""
    hvx, hvy = joint.human.vx, joint.human.vy
    if hvx == 0.0 and hvy == 0.0:
        return None
    rx = joint.robot.px - joint.human.px
    ry = joint.robot.py - joint.human.py
    ang = math.degrees(math.atan2(hvx * ry - hvy * rx, hvx * rx + hvy * ry))
    return ang % 360.0


def behind_predicate(joint: JointState, window=(135.0, 225.0)) -> bool:
    """True when the robot sits behind the moving human (inclusive window bounds)."""
    ang = behind_angle(joint)
    if ang is None:
        return False
    lo, hi = window
    return lo - 1e-9 <= ang <= hi + 1e-9


def propagate(joint: JointState, action, dt: float) -> JointState:
    """Robot executes ``action``, human keeps its current velocity."""
    vx, vy = action_velocity(action)
    heading = action[1] if action[0] > 0 else None
    robot = joint.robot.moved(vx, vy, dt, heading)
    human = joint.human.moved(joint.human.vx, joint.human.vy, dt)
    return JointState(robot, human)


def human_velocity(human: AgentState, robot: AgentState, avoid_gain: float = 1.0,
                   rng: np.random.Generator | None = None, heading_noise: float = 0.0
                   ) -> tuple[float, float]:
    """Scripted human: head for the goal, side-step away from a nearby robot."""
    if reached(human):
        return 0.0, 0.0
    to_goal = human.goal - human.position
    direction = to_goal / np.linalg.norm(to_goal)
    offset = robot.position - human.position
    if np.linalg.norm(offset) < 2 * (robot.radius + human.radius):
        perp = np.array([-direction[1], direction[0]])
        side = -1.0 if perp @ offset > 0 else 1.0
        direction = direction + avoid_gain * side * perp
        direction = direction / np.linalg.norm(direction)
    heading = math.atan2(direction[1], direction[0])
    if heading_noise > 0 and rng is not None:
        heading += rng.normal(0.0, heading_noise)
    return human.v_pref * math.cos(heading), human.v_pref * math.sin(heading)


@dataclass
class StepResult:
    joint: JointState
    reward: float
    termination: Termination
    d_min: float


def step_social(scenario: SocialNavScenario, joint: JointState, action,
                rng: np.random.Generator | None = None) -> StepResult:
    """Advance both agents by ``dt``. Collision is tested before the goal."""
    hvx, hvy = human_velocity(joint.human, joint.robot, scenario.human_avoid_gain, rng,
                              scenario.human_heading_noise)
    vx, vy = action_velocity(action)
    d_min = min_separation(joint.robot.position, (vx, vy), joint.human.position, (hvx, hvy),
                           (joint.robot.radius, joint.human.radius), scenario.dt)
    heading = action[1] if action[0] > 0 else None
    robot = joint.robot.moved(vx, vy, scenario.dt, heading)
    human = joint.human.moved(hvx, hvy, scenario.dt)
    at_goal = reached(robot)
    reward = reward_for(d_min, at_goal)
    if d_min < 0:
        term = Termination.COLLISION
    elif at_goal:
        term = Termination.GOAL
    else:
        term = Termination.NONE
    return StepResult(JointState(robot, human), reward, term, d_min)


@dataclass
class SocialNavEnv:
    scenario: SocialNavScenario
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    joint: JointState = field(init=False)
    steps: int = field(init=False, default=0)
    subgoal_achieved: bool = field(init=False, default=False)

    def reset(self) -> JointState:
        self.joint = self.scenario.initial_state()
        self.steps = 0
        self.subgoal_achieved = False
        return self.joint

    def is_subgoal(self, joint: JointState) -> bool:
        return behind_predicate(joint, self.scenario.subgoal_window)

    def step(self, action) -> tuple[JointState, float, bool, dict]:
        res = step_social(self.scenario, self.joint, action, self.rng)
        self.steps += 1
        term = res.termination
        if term is Termination.NONE and self.steps >= self.scenario.max_steps:
            term = Termination.TIMEOUT
        hit = not self.subgoal_achieved and self.is_subgoal(res.joint)
        self.subgoal_achieved = self.subgoal_achieved or hit
        self.joint = res.joint
        info = {"goal": term is Termination.GOAL, "collision": term is Termination.COLLISION,
                "timeout": term is Termination.TIMEOUT, "subgoal": hit,
                "termination": term, "d_min": res.d_min}
        return res.joint, res.reward, term is not Termination.NONE, info

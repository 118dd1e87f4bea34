"""CADRL-style value-network agent.

Actions are picked by one-step lookahead: every admissible velocity command is
propagated for ``dt`` (the human keeping its observed velocity) and scored by
``r + F + gamma_step * V(s')`` where ``gamma_step = gamma ** (dt * v_pref)``
and ``F`` is the shaping of the active shaper for that candidate transition.

With a ``progress`` predicate the network input gains one entry, the latched
"subgoal already achieved" flag, so values of a shaped learner can depend on
the abstract state the same way the shaping does.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from subgoal_rs.envs.social import (
    FEATURE_DIM,
    JointState,
    SocialNavEnv,
    Termination,
    min_separation,
    propagate,
    reached,
    reward_for,
    wrap_angle,
)
from subgoal_rs.learners.network import ValueNetwork
from subgoal_rs.learners.tabular import EpisodeRecord


class InitializationFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class ActionSet:
    """``n_speeds`` speeds in (0, v_pref) times ``n_headings`` headings in (psi - pi/6, psi + pi/6).

    Candidates violating the rotation limit ``|psi' - psi| < dt * v_pref`` are
    dropped; the zero-speed action (keep heading) is always index 0.
    """

    n_speeds: int = 5
    n_headings: int = 7

    def candidates(self, robot, dt: float) -> list[tuple[float, float]]:
        out = [(0.0, robot.heading)]
        max_turn = dt * robot.v_pref
        speeds = [robot.v_pref * k / (self.n_speeds + 1) for k in range(1, self.n_speeds + 1)]
        for k in range(1, self.n_headings + 1):
            offset = -math.pi / 6 + (math.pi / 3) * k / (self.n_headings + 1)
            if abs(offset) >= max_turn:
                continue
            heading = wrap_angle(robot.heading + offset)
            out.extend((v, heading) for v in speeds)
        return out


def satisfies_constraints(action, robot, dt: float) -> bool:
    speed, heading = action
    if speed == 0.0:
        return True
    turn = abs(wrap_angle(heading - robot.heading))
    return speed < robot.v_pref and turn < math.pi / 6 and turn < dt * robot.v_pref


def encode(joint: JointState, achieved: bool | None = None) -> np.ndarray:
    """Network input: the joint features, plus the achieved flag when one is given."""
    f = joint.features()
    return f if achieved is None else np.append(f, float(achieved))


def lookahead_scores(joint: JointState, net: ValueNetwork, actions, dt: float,
                     gamma_step: float, shaper=None, achieved: bool | None = None,
                     progress=None) -> np.ndarray:
    """Score ``r + F + gamma_step * V(s')`` for every candidate action."""
    robot, human = joint.robot, joint.human
    n = len(actions)
    feats = np.empty((n, FEATURE_DIM + (achieved is not None)))
    rewards = np.empty(n)
    terminal = np.zeros(n, dtype=bool)
    shaping = np.zeros(n)
    radii = (robot.radius, human.radius)
    hx, hy = human.px + human.vx * dt, human.py + human.vy * dt
    human_obs = [hx, hy, human.vx, human.vy, human.radius]
    for i, (speed, heading) in enumerate(actions):
        vx, vy = speed * math.cos(heading), speed * math.sin(heading)
        d_min = min_separation(robot.position, (vx, vy), human.position, human.velocity,
                               radii, dt)
        px, py = robot.px + vx * dt, robot.py + vy * dt
        at_goal = math.hypot(robot.gx - px, robot.gy - py) <= robot.radius
        rewards[i] = reward_for(d_min, at_goal)
        terminal[i] = d_min < 0 or at_goal
        psi = heading if speed > 0 else robot.heading
        feats[i, :FEATURE_DIM] = [px, py, vx, vy, robot.radius, robot.gx, robot.gy,
                                  robot.v_pref, psi, *human_obs]
        nxt = None
        if achieved is not None:
            nxt = propagate(joint, (speed, heading), dt)
            feats[i, FEATURE_DIM] = float(achieved or progress(nxt))
        if shaper is not None:
            nxt = nxt or propagate(joint, (speed, heading), dt)
            shaping[i] = shaper.preview(nxt, terminal=bool(terminal[i]),
                                        is_goal=bool(at_goal and d_min >= 0))
    values = np.where(terminal, 0.0, net(feats))
    return rewards + shaping + gamma_step * values


def cadrl_select_action(joint: JointState, net: ValueNetwork, actions, dt: float,
                        gamma_step: float, shaper=None, achieved: bool | None = None,
                        progress=None):
    """Greedy lookahead action; lowest index wins ties, zero speed if nothing is admissible."""
    actions = [a for a in actions if satisfies_constraints(a, joint.robot, dt)]
    if not actions:
        return (0.0, joint.robot.heading)
    scores = lookahead_scores(joint, net, actions, dt, gamma_step, shaper, achieved, progress)
    return actions[int(np.argmax(scores))]


def demo_action(joint: JointState, actions, avoid_gain: float = 1.0):
    """Scripted demonstrator: closest admissible command to a goal-seeking velocity
    with a perpendicular side-step away from a nearby human."""
    robot, human = joint.robot, joint.human
    to_goal = robot.goal - robot.position
    direction = to_goal / max(np.linalg.norm(to_goal), 1e-12)
    offset = human.position - robot.position
    if np.linalg.norm(offset) < 2 * (robot.radius + human.radius):
        perp = np.array([-direction[1], direction[0]])
        side = -1.0 if perp @ offset > 0 else 1.0
        direction = direction + avoid_gain * side * perp
        direction /= np.linalg.norm(direction)
    want = robot.v_pref * direction
    vels = np.array([[s * math.cos(h), s * math.sin(h)] for s, h in actions])
    return actions[int(np.argmin(np.linalg.norm(vels - want, axis=1)))]


@dataclass
class DemoTrajectory:
    features: np.ndarray
    rewards: np.ndarray
    success: bool


def discounted_returns(rewards, gamma_step: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma_step * acc
        out[i] = acc
    return out


def generate_demos(env: SocialNavEnv, actions: ActionSet, n_episodes: int,
                   rng: np.random.Generator, noise: float = 0.1,
                   with_progress: bool = False) -> list[DemoTrajectory]:
    demos = []
    dt = env.scenario.dt
    for _ in range(n_episodes):
        joint = env.reset()
        feats, rewards = [], []
        while True:
            cands = actions.candidates(joint.robot, dt)
            if rng.random() < noise:
                action = cands[rng.integers(len(cands))]
            else:
                action = demo_action(joint, cands)
            feats.append(encode(joint, env.subgoal_achieved if with_progress else None))
            joint, r, done, info = env.step(action)
            rewards.append(r)
            if done:
                break
        demos.append(DemoTrajectory(np.array(feats), np.array(rewards), bool(info["goal"])))
    return demos


def initialize_from_demos(net: ValueNetwork, demos: list[DemoTrajectory], gamma_step: float,
                          rng: np.random.Generator, epochs: int = 50, lr: float = 0.01,
                          momentum: float = 0.9, batch_size: int = 64) -> ValueNetwork:
    """Regress ``net`` on the discounted returns of the demonstrations."""
    if not any(d.success for d in demos):
        raise InitializationFailed("no demonstration reached the goal")
    x = np.concatenate([d.features for d in demos])
    y = np.concatenate([discounted_returns(d.rewards, gamma_step) for d in demos])
    for _ in range(epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(y), batch_size):
            idx = order[start:start + batch_size]
            net.train_step(x[idx], y[idx], lr, momentum)
    return net


@dataclass
class ReplayBuffer:
    capacity: int = 10_000
    dim: int = FEATURE_DIM
    size: int = field(init=False, default=0)
    _pos: int = field(init=False, default=0)

    def __post_init__(self):
        self.x = np.zeros((self.capacity, self.dim))
        self.x2 = np.zeros((self.capacity, self.dim))
        self.r = np.zeros(self.capacity)
        self.done = np.zeros(self.capacity, dtype=bool)
        self.z = np.zeros(self.capacity, dtype=int)
        self.z2 = np.zeros(self.capacity, dtype=int)

    def add(self, x, r, x2, done, z: int = 0, z2: int = 0) -> None:
        i = self._pos
        self.x[i], self.r[i], self.x2[i], self.done[i] = x, r, x2, done
        self.z[i], self.z2[i] = z, z2
        self._pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, n: int, rng: np.random.Generator):
        """``(x, r, x2, done, z, z2)`` for ``n`` transitions drawn with replacement."""
        idx = rng.integers(self.size, size=n)
        return (self.x[idx], self.r[idx], self.x2[idx], self.done[idx],
                self.z[idx], self.z2[idx])

    def __len__(self):
        return self.size


@dataclass
class CadrlAgent:
    net: ValueNetwork
    rng: np.random.Generator
    actions: ActionSet = field(default_factory=ActionSet)
    gamma: float = 0.9
    lr: float = 1e-3
    momentum: float = 0.9
    batch_size: int = 64
    updates_per_step: int = 1
    buffer: ReplayBuffer = field(default_factory=ReplayBuffer)
    progress: object = None

    def gamma_step(self, joint: JointState, dt: float) -> float:
        return self.gamma ** (dt * joint.robot.v_pref)

    def act(self, joint: JointState, dt: float, epsilon: float, shaper=None,
            achieved: bool = False):
        cands = self.actions.candidates(joint.robot, dt)
        if self.rng.random() < epsilon:
            return cands[self.rng.integers(len(cands))]
        flag = achieved if self.progress is not None else None
        return cadrl_select_action(joint, self.net, cands, dt, self.gamma_step(joint, dt), shaper,
                                   flag, self.progress)

    def train(self, gamma_step: float, reshape=None) -> float | None:
        """Minibatch updates. ``reshape(z, z2, done)`` adds shaping computed at sample time."""
        if len(self.buffer) < self.batch_size:
            return None
        loss = None
        for _ in range(self.updates_per_step):
            x, r, x2, done, z, z2 = self.buffer.sample(self.batch_size, self.rng)
            if reshape is not None:
                r = r + reshape(z, z2, done)
            y = r + gamma_step * np.where(done, 0.0, self.net(x2))
            loss = self.net.train_step(x, y, self.lr, self.momentum)
        return loss

    def run_episode(self, env: SocialNavEnv, shaper, epsilon: float, learn: bool = True,
                    record: bool = False) -> EpisodeRecord:
        dt = env.scenario.dt
        joint = env.reset()
        shaper.reset(joint)
        g = self.gamma_step(joint, dt)
        total = disc = shaping_total = 0.0
        rows = []
        t = 0
        tracked = self.progress is not None
        achieved = False
        # a moving potential is re-applied when a transition is replayed, not frozen in
        reshape = getattr(shaper, "replay_shaping", None)
        while True:
            action = self.act(joint, dt, epsilon, shaper, achieved)
            joint2, r, done, info = env.step(action)
            terminal = info["goal"] or info["collision"]
            z = getattr(shaper, "z", 0)
            f = shaper.step(joint2, r, terminal=terminal, is_goal=info["goal"])
            achieved2 = achieved or bool(tracked and self.progress(joint2))
            if learn:
                self.buffer.add(encode(joint, achieved if tracked else None),
                                r if reshape else r + f,
                                encode(joint2, achieved2 if tracked else None), terminal,
                                z, getattr(shaper, "z", 0))
                self.train(g, reshape)
            total += r
            disc += g ** t * r
            shaping_total += f
            if record:
                rows.append((t, joint2, r, getattr(shaper, "z", 0), env.subgoal_achieved))
            t += 1
            joint, achieved = joint2, achieved2
            if done:
                return EpisodeRecord(t, total, disc, info["goal"], info["collision"],
                                     info["timeout"], shaping_total, rows)

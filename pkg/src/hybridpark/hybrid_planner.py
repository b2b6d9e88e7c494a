"""Follow a collision-free Reeds-Shepp curve whenever one exists; otherwise act
with the learned policy behind the action mask."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from . import reeds_shepp as rs
from .action_mask import MaskComputer, MaskConfig, apply
from .collision import CollisionChecker, CollisionConfig
from .episode_log import EpisodeRecord, StepLog
from .geometry import Pose2D, VehicleParams
from .grid import OccupancyGrid
from .simulator import Action, Observation, ParkingEnv, VehicleState

Policy = Callable[[Observation], Action]


class Source(Enum):
    RS = "RS"
    RL = "RL"


@dataclass(frozen=True)
class PlannerDecision:
    source: Source
    action: Action
    rs_path: rs.RSPath | None = None
    raw_action: Action | None = None  # policy output before masking (RL only)

    def __post_init__(self):
        if (self.source is Source.RS) != (self.rs_path is not None):
            raise ValueError("rs_path must be present exactly when source is RS")


@dataclass(frozen=True)
class PlannerConfig:
    use_rs: bool = True
    safety_margin: float = 0.1
    sample_step: float = 0.1
    dt: float = 0.1


def _as_checker(grid_or_checker, vehicle: VehicleParams, cfg: PlannerConfig) -> CollisionChecker:
    if isinstance(grid_or_checker, CollisionChecker):
        return grid_or_checker
    return CollisionChecker(grid_or_checker, vehicle,
                            CollisionConfig(cfg.safety_margin, cfg.sample_step))


def rs_path_clear(checker: CollisionChecker, path: rs.RSPath, start: Pose2D, r_min: float) -> bool:
    poses = rs.sample_array(path, start, r_min, checker.cfg.sample_step)
    return checker.first_collision(poses[1:]) < 0


def try_rs(state: VehicleState, goal: Pose2D, grid: OccupancyGrid | CollisionChecker,
           vehicle: VehicleParams, cfg: PlannerConfig | None = None) -> rs.RSPath | None:
    """Shortest collision-free Reeds-Shepp path from the current pose, if any."""
    cfg = cfg or PlannerConfig()
    checker = _as_checker(grid, vehicle, cfg)
    r_min = vehicle.min_turn_radius
    for path in rs.sort_by_preference(rs.enumerate_all(state.pose, goal, r_min)):
        if rs_path_clear(checker, path, state.pose, r_min):
            return path
    return None


def _trim(segments: list[rs.RSSegment], travelled: float) -> list[rs.RSSegment]:
    """Drop ``travelled`` metres from the front of the segment list."""
    out = list(segments)
    while out and travelled > 0:
        head = out[0]
        if head.length <= travelled + rs.ZERO_LENGTH:
            travelled -= head.length
            out.pop(0)
        else:
            out[0] = rs.RSSegment(head.steer, head.gear, head.length - travelled)
            travelled = 0.0
    while out and out[0].length <= rs.ZERO_LENGTH:
        out.pop(0)
    return out


def segment_command(seg: rs.RSSegment, vehicle: VehicleParams, dt: float) -> tuple[Action, float]:
    """Constant (v, delta) command covering the next piece of ``seg``; returns (action, travel)."""
    travel = min(vehicle.max_speed * dt, seg.length)
    return Action(seg.gear.value * travel / dt, seg.steer.sign * vehicle.max_steer), travel


class HybridPlanner:
    """Stateful per-episode planner. Call :meth:`reset` when a new scenario starts."""

    def __init__(self, vehicle: VehicleParams, policy: Policy | None,
                 cfg: PlannerConfig | None = None, mask_cfg: MaskConfig | None = None):
        self.vehicle = vehicle
        self.policy = policy
        self.cfg = cfg or PlannerConfig()
        self.mask_cfg = mask_cfg or MaskConfig(dt=self.cfg.dt)
        self.r_min = vehicle.min_turn_radius
        self.checker: CollisionChecker | None = None
        self.masker: MaskComputer | None = None
        self.goal: Pose2D | None = None
        self._tracked: list[rs.RSSegment] = []
        self._tracked_path: rs.RSPath | None = None
        self.last_mask = None

    def reset(self, grid: OccupancyGrid | CollisionChecker, goal: Pose2D) -> None:
        checker = _as_checker(grid, self.vehicle, self.cfg)
        if self.checker is None or self.checker.grid is not checker.grid:
            self.masker = MaskComputer(checker, self.vehicle, self.mask_cfg)
        self.checker = checker
        self.goal = goal
        self._tracked = []
        self._tracked_path = None

    @property
    def tracking(self) -> bool:
        return bool(self._tracked)

    def _remaining_path(self) -> rs.RSPath:
        return rs.RSPath(tuple(self._tracked), self._tracked_path.word)

    def act(self, state: VehicleState, obs: Observation) -> PlannerDecision:
        if self.checker is None:
            raise RuntimeError("call reset() before act()")
        if self.cfg.use_rs:
            if self._tracked and not rs_path_clear(self.checker, self._remaining_path(),
                                                   state.pose, self.r_min):
                self._tracked = []
            if not self._tracked:
                path = try_rs(state, self.goal, self.checker, self.vehicle, self.cfg)
                if path is not None:
                    self._tracked_path = path
                    self._tracked = _trim(list(path.segments), 0.0)
            if self._tracked:
                remaining = self._remaining_path()
                action, travel = segment_command(self._tracked[0], self.vehicle, self.cfg.dt)
                self._tracked = _trim(self._tracked, travel)
                return PlannerDecision(Source.RS, action, remaining)
        if self.policy is None:
            raise RuntimeError("no collision-free RS path and no policy to fall back on")
        raw = self.policy(obs)
        self.last_mask = self.masker.compute(state)
        return PlannerDecision(Source.RL, apply(self.last_mask, raw), raw_action=raw)


def rollout(env: ParkingEnv, planner: HybridPlanner, max_steps: int | None = None,
            on_step=None) -> EpisodeRecord:
    """Run one episode from the env's current (freshly reset) state.

    ``on_step(obs, decision, result)`` is called after every step.
    """
    if env.done:
        raise RuntimeError("environment must be reset before rollout")
    planner.reset(env.planner_checker, env.scenario.target)
    obs = env.observe()
    rec = EpisodeRecord()
    limit = max_steps if max_steps is not None else env.cfg.max_steps
    n = 0
    while not env.done and n < limit:
        decision = planner.act(env.state, obs)
        result = env.step(decision.action)
        n += 1
        p = env.state.pose
        rec.steps.append(StepLog(env.sim_time, p.x, p.y, p.theta, decision.action.velocity,
                                 decision.action.steering, result.reward, result.outcome.value,
                                 decision.source.value))
        if on_step is not None:
            on_step(obs, decision, result)
        obs = result.observation
    rec.outcome = env.outcome.value if env.done else "timeout"
    rec.gear_shifts = env.gear_shifts
    rec.path_length = env.path_length
    rec.sim_time = env.sim_time
    return rec

"""Bird's-eye-view parking environment with a kinematic bicycle model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .collision import CollisionChecker, CollisionConfig
from .geometry import Pose2D, VehicleParams, footprint_polygon, normalize_angle
from .grid import OccupancyGrid

_BOUND_TOL = 1e-9


class Outcome(Enum):
    RUNNING = "running"
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"


class ParkingKind(Enum):
    PARALLEL = "parallel"
    PERPENDICULAR = "perpendicular"


class Difficulty(Enum):
    SIM_NORMAL = "normal"
    SIM_COMPLEX = "complex"
    REAL_WORLD_STYLE = "real"


@dataclass(frozen=True)
class Action:
    velocity: float
    steering: float


@dataclass(frozen=True)
class VehicleState:
    pose: Pose2D
    velocity: float = 0.0
    steering: float = 0.0

    def check(self, vehicle: VehicleParams) -> None:
        if abs(self.velocity) > vehicle.max_speed + _BOUND_TOL:
            raise ValueError(f"|velocity| {abs(self.velocity)} exceeds {vehicle.max_speed}")
        if abs(self.steering) > vehicle.max_steer + _BOUND_TOL:
            raise ValueError(f"|steering| {abs(self.steering)} exceeds {vehicle.max_steer}")


@dataclass(frozen=True, eq=False)
class Scenario:
    grid: OccupancyGrid
    start: Pose2D
    target: Pose2D
    slot_center: Pose2D
    slot_length: float  # along the parked heading
    slot_width: float
    kind: ParkingKind
    difficulty: Difficulty
    seed: int

    def slot_polygon(self) -> np.ndarray:
        hl, hw = self.slot_length / 2, self.slot_width / 2
        local = np.array([[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]])
        return self.slot_center.transform_points(local)

    def footprint_in_slot(self, pose: Pose2D, vehicle: VehicleParams) -> bool:
        corners = footprint_polygon(pose, vehicle)
        c = self.slot_center
        d = corners - np.array([c.x, c.y])
        cs, sn = math.cos(c.theta), math.sin(c.theta)
        along = d[:, 0] * cs + d[:, 1] * sn
        lat = -d[:, 0] * sn + d[:, 1] * cs
        eps = 1e-9
        return bool(np.all(np.abs(along) <= self.slot_length / 2 + eps)
                    and np.all(np.abs(lat) <= self.slot_width / 2 + eps))


@dataclass(frozen=True, eq=False)
class Observation:
    beams: np.ndarray
    target_rel: np.ndarray  # dx, dy, sin(dtheta), cos(dtheta) in the ego frame
    ego: np.ndarray  # velocity, steering

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.beams, self.target_rel, self.ego])

    def __len__(self):
        return len(self.beams) + 6


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    done: bool
    outcome: Outcome


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 0.1
    max_steps: int = 500
    pos_tol: float = 0.3
    ang_tol: float = math.radians(10.0)
    n_beams: int = 72
    max_range: float = 10.0
    progress_weight: float = 1.0
    pos_weight: float = 1.0  # per metre
    ang_weight: float = 0.5  # per radian
    step_penalty: float = 0.01
    shift_penalty: float = 0.05
    collision_penalty: float = 5.0
    success_bonus: float = 10.0
    # physical contact test used to end episodes; planners add their own margin
    contact_margin: float = 0.0


def kinematic_step(state: VehicleState, action: Action, dt: float,
                   vehicle: VehicleParams) -> VehicleState:
    """Advance the bicycle model for ``dt`` at constant (v, delta), integrated exactly."""
    VehicleState(state.pose, action.velocity, action.steering).check(vehicle)
    x, y, th = _arc(state.pose.x, state.pose.y, state.pose.theta,
                    math.tan(action.steering) / vehicle.wheelbase, action.velocity * dt)
    return VehicleState(Pose2D(x, y, th), action.velocity, action.steering)


def _arc(x, y, th, kappa, ds):
    if kappa == 0.0 or abs(kappa * ds) < 1e-12:
        return x + ds * math.cos(th), y + ds * math.sin(th), th + kappa * ds
    th2 = th + kappa * ds
    return (x + (math.sin(th2) - math.sin(th)) / kappa,
            y + (math.cos(th) - math.cos(th2)) / kappa, th2)


def arc_poses(pose: Pose2D, kappa: float, distances) -> np.ndarray:
    """Poses (N, 3) reached by travelling each signed distance along a constant-curvature arc."""
    s = np.asarray(distances, dtype=float)
    th0 = pose.theta
    if kappa == 0.0:
        return np.column_stack([pose.x + s * math.cos(th0), pose.y + s * math.sin(th0),
                                np.full_like(s, th0)])
    th = th0 + kappa * s
    return np.column_stack([pose.x + (np.sin(th) - math.sin(th0)) / kappa,
                            pose.y + (math.cos(th0) - np.cos(th)) / kappa, th])


def swept_poses(pose: Pose2D, action: Action, dt: float, vehicle: VehicleParams,
                step: float) -> np.ndarray:
    """Poses along one control interval, spaced at most ``step`` apart, start included."""
    travel = action.velocity * dt
    n = max(1, math.ceil(abs(travel) / step - 1e-9))
    kappa = math.tan(action.steering) / vehicle.wheelbase
    return arc_poses(pose, kappa, travel * np.arange(n + 1) / n)


def weighted_pose_distance(a: Pose2D, b: Pose2D, cfg: EnvConfig) -> float:
    return (cfg.pos_weight * a.distance_to(b)
            + cfg.ang_weight * abs(normalize_angle(b.theta - a.theta)))


def target_in_ego(pose: Pose2D, target: Pose2D) -> np.ndarray:
    rel = target.relative_to(pose)
    return np.array([rel.x, rel.y, math.sin(rel.theta), math.cos(rel.theta)])


class ParkingEnv:
    """Gym-style environment: ``reset(scenario)`` then ``step(action)`` until done.

    Observations are regenerated from the scenario grid every step, cast from
    the footprint center.
    """

    def __init__(self, vehicle: VehicleParams | None = None, cfg: EnvConfig | None = None,
                 collision_cfg: CollisionConfig | None = None):
        self.vehicle = vehicle or VehicleParams()
        self.cfg = cfg or EnvConfig()
        self.collision_cfg = collision_cfg or CollisionConfig()
        self.scenario: Scenario | None = None
        self._checkers: dict[int, tuple[CollisionChecker, CollisionChecker]] = {}
        self.state: VehicleState | None = None
        self.done = True
        self.outcome = Outcome.RUNNING

    # -- checkers --------------------------------------------------------
    def _checker_pair(self, scenario: Scenario):
        key = id(scenario.grid)
        pair = self._checkers.get(key)
        if pair is None or pair[0].grid is not scenario.grid:
            planner = CollisionChecker(scenario.grid, self.vehicle, self.collision_cfg)
            contact = CollisionChecker(
                scenario.grid, self.vehicle,
                CollisionConfig(self.cfg.contact_margin, self.collision_cfg.sample_step))
            pair = (planner, contact)
            self._checkers = {key: pair}
        return pair

    @property
    def planner_checker(self) -> CollisionChecker:
        return self._checker_pair(self.scenario)[0]

    @property
    def contact_checker(self) -> CollisionChecker:
        return self._checker_pair(self.scenario)[1]

    # -- API -------------------------------------------------------------
    def reset(self, scenario: Scenario) -> Observation:
        planner, _ = self._checker_pair(scenario)
        if planner.pose_collides(scenario.start) or planner.pose_collides(scenario.target):
            raise ValueError("scenario start or target collides with the map")
        if not scenario.footprint_in_slot(scenario.target, self.vehicle):
            raise ValueError("target footprint does not fit inside the slot")
        self.scenario = scenario
        self.state = VehicleState(scenario.start, 0.0, 0.0)
        self.done = False
        self.outcome = Outcome.RUNNING
        self.steps = 0
        self.gear_shifts = 0
        self.path_length = 0.0
        self.last_gear = 0
        self.trajectory: list[Pose2D] = []
        self.rewards: list[float] = []
        self.actions: list[Action] = []
        return self.observe()

    def observe(self) -> Observation:
        pose = self.state.pose
        off = self.vehicle.center_offset
        center = Pose2D(pose.x + off * math.cos(pose.theta),
                        pose.y + off * math.sin(pose.theta), pose.theta)
        grid = self.scenario.grid
        if grid.in_bounds(*grid.world_to_cell(center.x, center.y)):
            beams = self.contact_checker.cast_beams(center, self.cfg.n_beams, self.cfg.max_range)
        else:
            beams = np.zeros(self.cfg.n_beams)
        return Observation(beams, target_in_ego(pose, self.scenario.target),
                           np.array([self.state.velocity, self.state.steering]))

    def is_success(self, pose: Pose2D) -> bool:
        tgt = self.scenario.target
        return (pose.distance_to(tgt) <= self.cfg.pos_tol
                and abs(normalize_angle(pose.theta - tgt.theta)) <= self.cfg.ang_tol
                and self.scenario.footprint_in_slot(pose, self.vehicle))

    def step(self, action: Action) -> StepResult:
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        cfg = self.cfg
        prev = self.state
        new = kinematic_step(prev, action, cfg.dt, self.vehicle)
        swept = swept_poses(prev.pose, action, cfg.dt, self.vehicle, self.collision_cfg.sample_step)
        collided = self.contact_checker.first_collision(swept[1:]) >= 0

        shift = 0
        gear = int(np.sign(action.velocity))
        if gear != 0:
            if self.last_gear != 0 and gear != self.last_gear:
                shift = 1
            self.last_gear = gear
        self.gear_shifts += shift
        self.path_length += abs(action.velocity) * cfg.dt
        self.steps += 1
        self.state = new
        self.trajectory.append(new.pose)
        self.actions.append(action)

        target = self.scenario.target
        progress = (weighted_pose_distance(prev.pose, target, cfg)
                    - weighted_pose_distance(new.pose, target, cfg))
        reward = cfg.progress_weight * progress - cfg.step_penalty - cfg.shift_penalty * shift
        if collided:
            outcome = Outcome.COLLISION
            reward -= cfg.collision_penalty
        elif self.is_success(new.pose):
            outcome = Outcome.SUCCESS
            reward += cfg.success_bonus
        elif self.steps >= cfg.max_steps:
            outcome = Outcome.TIMEOUT
        else:
            outcome = Outcome.RUNNING
        self.outcome = outcome
        self.done = outcome is not Outcome.RUNNING
        self.rewards.append(reward)
        return StepResult(self.observe(), reward, self.done, outcome)

    @property
    def sim_time(self) -> float:
        return self.steps * self.cfg.dt

    # -- rendering -------------------------------------------------------
    def render_frame(self, path, scale: int = 4) -> Path:
        """Write a BEV PNG: grid, slot, target and current footprints, trajectory trace."""
        from PIL import Image, ImageDraw

        if self.scenario is None:
            raise RuntimeError("render_frame() needs an active scenario")
        grid = self.scenario.grid
        palette = np.array([[255, 255, 255], [0, 0, 0], [128, 128, 128]], dtype=np.uint8)
        rgb = palette[grid.cells[::-1]]
        img = Image.fromarray(rgb, "RGB").resize((grid.width * scale, grid.height * scale),
                                                  Image.NEAREST)
        draw = ImageDraw.Draw(img)

        def px(points):
            col, row = grid.world_to_local(points[:, 0], points[:, 1])
            u = np.asarray(col) / grid.resolution * scale
            v = (grid.height - np.asarray(row) / grid.resolution) * scale
            return [(float(a), float(b)) for a, b in zip(u, v)]

        draw.polygon(px(self.scenario.slot_polygon()), outline=(255, 170, 0))
        draw.polygon(px(footprint_polygon(self.scenario.target, self.vehicle)), outline=(0, 160, 0))
        trace = np.array([[p.x, p.y] for p in [self.scenario.start] + self.trajectory])
        if len(trace) > 1:
            draw.line(px(trace), fill=(0, 90, 255), width=2)
        draw.polygon(px(footprint_polygon(self.state.pose, self.vehicle)), outline=(220, 0, 0))
        path = Path(path)
        img.save(path, format="PNG")
        return path

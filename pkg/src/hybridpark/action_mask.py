"""Per-steering-bin speed caps that keep a short constant-command rollout collision-free."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .collision import CollisionChecker, CollisionConfig
from .geometry import VehicleParams
from .grid import OccupancyGrid
from .simulator import Action, VehicleState


@dataclass(frozen=True)
class MaskConfig:
    n_bins: int = 21
    n_levels: int = 16
    horizon_steps: int = 5
    dt: float = 0.1
    safety_margin: float = 0.1
    sample_step: float = 0.1
    # steering passes through apply() unsnapped, so each bin also checks its edge arcs
    check_bin_edges: bool = True

    def __post_init__(self):
        if self.n_bins < 3 or self.n_bins % 2 == 0:
            raise ValueError("n_bins must be odd and at least 3")
        if self.n_levels < 1 or self.horizon_steps < 1:
            raise ValueError("n_levels and horizon_steps must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True, eq=False)
class ActionMask:
    steering_bins: np.ndarray
    v_max_forward: np.ndarray
    v_max_reverse: np.ndarray

    def __post_init__(self):
        k = len(self.steering_bins)
        if k < 3 or k % 2 == 0:
            raise ValueError("need an odd number (>= 3) of steering bins")
        if len(self.v_max_forward) != k or len(self.v_max_reverse) != k:
            raise ValueError("speed arrays must match the steering bins")
        if np.any(self.v_max_forward < 0) or np.any(self.v_max_reverse < 0):
            raise ValueError("speed caps must be non-negative")

    @classmethod
    def unrestricted(cls, vehicle: VehicleParams, n_bins: int = 21) -> "ActionMask":
        bins = np.linspace(-vehicle.max_steer, vehicle.max_steer, n_bins)
        full = np.full(n_bins, vehicle.max_speed)
        return cls(bins, full, full.copy())

    def bin_index(self, steering: float) -> int:
        bins = self.steering_bins
        spacing = (bins[-1] - bins[0]) / (len(bins) - 1)
        return int(np.clip(round((steering - bins[0]) / spacing), 0, len(bins) - 1))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.v_max_forward, self.v_max_reverse])


def speed_ladder(vehicle: VehicleParams, n_levels: int) -> np.ndarray:
    return vehicle.max_speed * np.arange(1, n_levels + 1) / n_levels


class MaskComputer:
    """Holds the collision checker for one grid; ``compute`` runs per vehicle state."""

    def __init__(self, grid_or_checker, vehicle: VehicleParams, cfg: MaskConfig | None = None):
        self.cfg = cfg or MaskConfig()
        self.vehicle = vehicle
        c = self.cfg
        if isinstance(grid_or_checker, CollisionChecker):
            checker = grid_or_checker
            if (checker.cfg.safety_margin != c.safety_margin
                    or checker.cfg.sample_step != c.sample_step):
                checker = checker.with_margin(c.safety_margin)
        else:
            checker = CollisionChecker(grid_or_checker, vehicle,
                                       CollisionConfig(c.safety_margin, c.sample_step))
        self.checker = checker
        self.bins = np.linspace(-vehicle.max_steer, vehicle.max_steer, c.n_bins)
        n_arcs = 2 * c.n_bins - 1 if c.check_bin_edges else c.n_bins
        self.arc_steers = np.linspace(-vehicle.max_steer, vehicle.max_steer, n_arcs)
        self.ladder = speed_ladder(vehicle, c.n_levels)
        rung = vehicle.max_speed * c.horizon_steps * c.dt / c.n_levels
        self.sub = max(1, math.ceil(rung / c.sample_step - 1e-9))
        n_pts = c.n_levels * self.sub
        self.dist = rung * np.arange(1, n_pts + 1) / self.sub  # start pose itself is not checked

    def compute(self, state: VehicleState) -> ActionMask:
        c = self.cfg
        pose = state.pose
        kappa = np.tan(self.arc_steers) / self.vehicle.wheelbase
        n_arc = len(kappa)
        n_pts = len(self.dist)
        # (direction, arc, point)
        s = np.stack([self.dist, -self.dist])[:, None, :]
        k = kappa[None, :, None]
        th0 = pose.theta
        small = np.abs(k * s) < 1e-12
        k_safe = np.where(small, 1.0, k)
        th = th0 + k * s
        x = np.where(small, pose.x + s * math.cos(th0),
                     pose.x + (np.sin(th) - math.sin(th0)) / k_safe)
        y = np.where(small, pose.y + s * math.sin(th0),
                     pose.y + (math.cos(th0) - np.cos(th)) / k_safe)
        poses = np.stack(np.broadcast_arrays(x, y, th), axis=-1).reshape(-1, 3)
        hits = self.checker.poses_collide(poses).reshape(2, n_arc, n_pts)
        any_hit = hits.any(axis=2)
        first = np.where(any_hit, hits.argmax(axis=2), n_pts)
        # rung j (1-based) is clear when every point up to index j * sub - 1 is clear
        clear_rungs = first // self.sub
        if c.check_bin_edges:
            idx = np.arange(c.n_bins) * 2
            lo = np.maximum(idx - 1, 0)
            hi = np.minimum(idx + 1, n_arc - 1)
            per_bin = np.minimum(np.minimum(clear_rungs[:, lo], clear_rungs[:, idx]),
                                 clear_rungs[:, hi])
        else:
            per_bin = clear_rungs
        ladder0 = np.concatenate([[0.0], self.ladder])
        v = ladder0[np.minimum(per_bin, c.n_levels)]
        return ActionMask(self.bins.copy(), v[0], v[1])


def compute_mask(grid: OccupancyGrid, state: VehicleState, vehicle: VehicleParams,
                 horizon_steps: int = 5, cfg: MaskConfig | None = None) -> ActionMask:
    cfg = cfg or MaskConfig()
    if horizon_steps != cfg.horizon_steps:
        cfg = MaskConfig(**{**cfg.__dict__, "horizon_steps": horizon_steps})
    return MaskComputer(grid, vehicle, cfg).compute(state)


def apply(mask: ActionMask, action: Action) -> Action:
    """Clip velocity to the nearest bin's [-v_reverse, +v_forward]; steering is untouched."""
    k = mask.bin_index(action.steering)
    v = min(max(action.velocity, -float(mask.v_max_reverse[k])), float(mask.v_max_forward[k]))
    if v == action.velocity:
        return action
    return Action(v, action.steering)

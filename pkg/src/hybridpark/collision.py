"""Footprint, swept-path and beam queries against an occupancy grid.

A pose collides when any OCCUPIED or UNKNOWN cell center lies inside the
margin-inflated footprint rectangle. Cells outside the grid count as UNKNOWN;
the checker pads the lethal mask with an UNKNOWN border wide enough that the
inner kernels never index out of range for poses near the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage

from .geometry import Pose2D, VehicleParams
from .grid import OccupancyGrid


@dataclass(frozen=True)
class CollisionConfig:
    safety_margin: float = 0.1
    sample_step: float = 0.1

    def __post_init__(self):
        if self.safety_margin < 0:
            raise ValueError("safety_margin must be non-negative")
        if not self.sample_step > 0:
            raise ValueError("sample_step must be positive")


@numba.njit(cache=True)
def _poses_collide(lethal, edt, res, pad, ox, oy, oc, os_, poses, center_offset,
                   hl, hw, stop_at_first, out):
    n_rows, n_cols = lethal.shape
    radius = math.sqrt(hl * hl + hw * hw)
    inner = min(hl, hw)
    half_diag = 0.5 * math.sqrt(2.0) * res
    first = -1
    for k in range(poses.shape[0]):
        th = poses[k, 2]
        c = math.cos(th)
        s = math.sin(th)
        wx = poses[k, 0] + center_offset * c
        wy = poses[k, 1] + center_offset * s
        # grid-local frame, shifted by the padding
        dx = wx - ox
        dy = wy - oy
        cx = oc * dx + os_ * dy + pad * res
        cy = -os_ * dx + oc * dy + pad * res
        lc = oc * c + os_ * s
        ls = -os_ * c + oc * s
        ci = int(math.floor(cx / res))
        ri = int(math.floor(cy / res))
        hit = False
        if ci < 0 or ri < 0 or ci >= n_cols or ri >= n_rows:
            hit = True
        else:
            d = edt[ri, ci]
            if d - half_diag > radius:
                hit = False
            elif d + half_diag < inner:
                hit = True
            else:
                ex = hl * abs(lc) + hw * abs(ls)
                ey = hl * abs(ls) + hw * abs(lc)
                c0 = int(math.floor((cx - ex) / res - 0.5))
                c1 = int(math.ceil((cx + ex) / res - 0.5))
                r0 = int(math.floor((cy - ey) / res - 0.5))
                r1 = int(math.ceil((cy + ey) / res - 0.5))
                if c0 < 0 or r0 < 0 or c1 >= n_cols or r1 >= n_rows:
                    hit = True
                else:
                    for r in range(r0, r1 + 1):
                        py = (r + 0.5) * res - cy
                        for col in range(c0, c1 + 1):
                            if lethal[r, col]:
                                px = (col + 0.5) * res - cx
                                along = px * lc + py * ls
                                lat = -px * ls + py * lc
                                if abs(along) <= hl and abs(lat) <= hw:
                                    hit = True
                                    break
                        if hit:
                            break
        out[k] = hit
        if hit and first < 0:
            first = k
            if stop_at_first:
                return first
    return first


@numba.njit(cache=True)
def _cast(lethal, res, pad, ox, oy, oc, os_, px, py, angles, max_range, out):
    n_rows, n_cols = lethal.shape
    dx0 = px - ox
    dy0 = py - oy
    x0 = (oc * dx0 + os_ * dy0) / res + pad
    y0 = (-os_ * dx0 + oc * dy0) / res + pad
    limit = max_range / res
    for b in range(angles.shape[0]):
        a = angles[b]
        dx = oc * math.cos(a) + os_ * math.sin(a)
        dy = -os_ * math.cos(a) + oc * math.sin(a)
        ci = int(math.floor(x0))
        ri = int(math.floor(y0))
        step_c = 1 if dx > 0 else -1
        step_r = 1 if dy > 0 else -1
        if dx != 0.0:
            t_max_c = ((ci + (1 if dx > 0 else 0)) - x0) / dx
            t_delta_c = abs(1.0 / dx)
        else:
            t_max_c = math.inf
            t_delta_c = math.inf
        if dy != 0.0:
            t_max_r = ((ri + (1 if dy > 0 else 0)) - y0) / dy
            t_delta_r = abs(1.0 / dy)
        else:
            t_max_r = math.inf
            t_delta_r = math.inf
        t = 0.0
        while True:
            if ci < 0 or ri < 0 or ci >= n_cols or ri >= n_rows or lethal[ri, ci]:
                break
            if t_max_c < t_max_r:
                t = t_max_c
                t_max_c += t_delta_c
                ci += step_c
            else:
                t = t_max_r
                t_max_r += t_delta_r
                ri += step_r
            if t >= limit:
                break
        out[b] = min(t, limit) * res


class CollisionChecker:
    """Precomputed collision queries for one grid and one vehicle."""

    def __init__(self, grid: OccupancyGrid, vehicle: VehicleParams,
                 cfg: CollisionConfig | None = None):
        self.grid = grid
        self.vehicle = vehicle
        self.cfg = cfg or CollisionConfig()
        res = grid.resolution
        m = self.cfg.safety_margin
        self.half_length = vehicle.length / 2.0 + m
        self.half_width = vehicle.width / 2.0 + m
        reach = math.hypot(self.half_length, self.half_width) + vehicle.length
        self.pad = int(math.ceil(reach / res)) + 2
        self.lethal = np.pad(grid.lethal(), self.pad, constant_values=True)
        self.edt = ndimage.distance_transform_edt(~self.lethal) * res
        o = grid.origin
        self._frame = (o.x, o.y, math.cos(o.theta), math.sin(o.theta))

    def with_margin(self, margin: float) -> "CollisionChecker":
        cfg = CollisionConfig(margin, self.cfg.sample_step)
        return CollisionChecker(self.grid, self.vehicle, cfg)

    def _run(self, poses, stop_at_first):
        poses = np.ascontiguousarray(np.asarray(poses, dtype=float).reshape(-1, 3))
        out = np.zeros(len(poses), dtype=np.bool_)
        ox, oy, oc, os_ = self._frame
        first = _poses_collide(self.lethal, self.edt, self.grid.resolution, self.pad,
                               ox, oy, oc, os_, poses, self.vehicle.center_offset,
                               self.half_length, self.half_width, stop_at_first, out)
        return first, out

    def poses_collide(self, poses) -> np.ndarray:
        return self._run(poses, False)[1]

    def first_collision(self, poses) -> int:
        """Index of the first colliding pose, or -1."""
        return int(self._run(poses, True)[0])

    def pose_collides(self, pose: Pose2D) -> bool:
        return self.first_collision([[pose.x, pose.y, pose.theta]]) >= 0

    def check_spacing(self, poses) -> None:
        poses = np.asarray(poses, dtype=float).reshape(-1, 3)
        if len(poses) > 1:
            gaps = np.hypot(np.diff(poses[:, 0]), np.diff(poses[:, 1]))
            if gaps.max() > self.cfg.sample_step + 1e-9:
                raise ValueError(f"pose spacing {gaps.max():.4f} m exceeds "
                                 f"sample_step {self.cfg.sample_step} m")

    def path_collides(self, poses) -> bool:
        self.check_spacing(poses)
        return self.first_collision(poses) >= 0

    def clearance(self, x: float, y: float) -> float:
        """Distance from the cell containing (x, y) to the nearest lethal cell center."""
        col, row = self.grid.world_to_cell(x, y)
        col += self.pad
        row += self.pad
        if not (0 <= row < self.edt.shape[0] and 0 <= col < self.edt.shape[1]):
            return 0.0
        return float(self.edt[row, col])

    def cast_beams(self, pose: Pose2D, n_beams: int, max_range: float) -> np.ndarray:
        if n_beams < 1:
            raise ValueError("n_beams must be at least 1")
        col, row = self.grid.world_to_cell(pose.x, pose.y)
        if not self.grid.in_bounds(col, row):
            raise ValueError(f"beam origin ({pose.x:.3f}, {pose.y:.3f}) lies outside the grid")
        angles = pose.theta + 2.0 * math.pi * np.arange(n_beams) / n_beams
        out = np.empty(n_beams)
        ox, oy, oc, os_ = self._frame
        _cast(self.lethal, self.grid.resolution, self.pad, ox, oy, oc, os_,
              pose.x, pose.y, angles, float(max_range), out)
        return out


def pose_collides(grid: OccupancyGrid, pose: Pose2D, vehicle: VehicleParams,
                  cfg: CollisionConfig | None = None) -> bool:
    return CollisionChecker(grid, vehicle, cfg).pose_collides(pose)


def path_collides(grid: OccupancyGrid, poses, vehicle: VehicleParams,
                  cfg: CollisionConfig | None = None) -> bool:
    if len(poses) and isinstance(poses[0], Pose2D):
        poses = [[p.x, p.y, p.theta] for p in poses]
    return CollisionChecker(grid, vehicle, cfg).path_collides(poses)


def cast_beams(grid: OccupancyGrid, pose: Pose2D, n_beams: int, max_range: float) -> np.ndarray:
    """Distance along each of ``n_beams`` evenly spread rays to the first lethal cell."""
    # beam casting does not depend on the vehicle; any footprint works for the padding
    return CollisionChecker(grid, VehicleParams(), CollisionConfig()).cast_beams(
        pose, n_beams, max_range)

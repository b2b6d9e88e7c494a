"""Point-cloud registration and rasterization into occupancy grids.

Global maps register every frame with its sensor-to-global pose; local maps
fuse a short window of frames into the frame of a keyframe. Both are then
flattened into a 2D grid by hit counting, optionally carving free space along
sensor rays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import Pose2D, Transform3D, compose, invert
from .grid import FREE, OCCUPIED, UNKNOWN, OccupancyGrid


@dataclass(frozen=True, eq=False)
class PointCloudFrame:
    timestamp: float
    points: np.ndarray  # (N, 3), sensor frame

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "timestamp", float(self.timestamp))

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class TrajectorySample:
    timestamp: float
    pose: Transform3D  # sensor -> global


@dataclass(frozen=True)
class OgmBuildConfig:
    z_min: float = -1.2
    z_max: float = 0.8
    hit_threshold: int = 2
    resolution: float = 0.1
    carve_free_space: bool = True
    keyframe_window: int = 10
    padding_cells: int = 5

    def __post_init__(self):
        if not self.z_min < self.z_max:
            raise ValueError("z_min must be below z_max")
        if self.hit_threshold < 1:
            raise ValueError("hit_threshold must be at least 1")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if self.keyframe_window < 1:
            raise ValueError("keyframe_window must be at least 1")
        if self.padding_cells < 0:
            raise ValueError("padding_cells must be non-negative")


@dataclass(frozen=True)
class GridBounds:
    origin: Pose2D
    width: int
    height: int


def filter_heights(frame: PointCloudFrame, cfg: OgmBuildConfig) -> PointCloudFrame:
    z = frame.points[:, 2]
    keep = (z >= cfg.z_min) & (z <= cfg.z_max)
    return PointCloudFrame(frame.timestamp, frame.points[keep])


def _check_pairing(frames, traj):
    if len(frames) != len(traj):
        raise ValueError(f"{len(frames)} frames but {len(traj)} trajectory samples")


def accumulate_global(frames: Sequence[PointCloudFrame],
                      traj: Sequence[TrajectorySample]) -> np.ndarray:
    """Union of every frame's points mapped through its own pose, in frame order."""
    _check_pairing(frames, traj)
    parts = [s.pose.apply(f.points) for f, s in zip(frames, traj)]
    if not parts:
        return np.zeros((0, 3))
    return np.concatenate(parts, axis=0)


def window_indices(keyframe_index: int, n_frames: int, window: int) -> range:
    if not 0 <= keyframe_index < n_frames:
        raise ValueError(f"keyframe index {keyframe_index} outside recording of {n_frames} frames")
    return range(max(0, keyframe_index - window + 1), keyframe_index + 1)


def accumulate_local(frames: Sequence[PointCloudFrame], traj: Sequence[TrajectorySample],
                     keyframe_index: int, cfg: OgmBuildConfig) -> np.ndarray:
    """Fuse the frames of the window ending at the keyframe into the keyframe sensor frame."""
    _check_pairing(frames, traj)
    idx = window_indices(keyframe_index, len(frames), cfg.keyframe_window)
    key_inv = invert(traj[keyframe_index].pose)
    parts = [compose(key_inv, traj[i].pose).apply(frames[i].points) for i in idx]
    if not parts:
        raise ValueError("empty keyframe window")
    return np.concatenate(parts, axis=0)


def auto_bounds(xy: np.ndarray, cfg: OgmBuildConfig) -> GridBounds:
    if len(xy) == 0:
        raise ValueError("cannot derive grid bounds from an empty point set")
    res = cfg.resolution
    lo = np.floor(xy.min(axis=0) / res).astype(np.int64) - cfg.padding_cells
    hi = np.floor(xy.max(axis=0) / res).astype(np.int64) + cfg.padding_cells + 1
    return GridBounds(Pose2D(lo[0] * res, lo[1] * res, 0.0), int(hi[0] - lo[0]), int(hi[1] - lo[1]))


def _ray_cells(c0, r0, c1, r1):
    """DDA cells from (c0, r0) towards (c1, r1), endpoint excluded. Inputs are int arrays."""
    dc = c1 - c0
    dr = r1 - r0
    n = np.maximum(np.abs(dc), np.abs(dr))
    total = int(n.sum())
    if total == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    ray = np.repeat(np.arange(len(n)), n)
    starts = np.cumsum(n) - n
    k = np.arange(total) - np.repeat(starts, n)
    frac = k / np.repeat(n, n)
    cols = c0[ray] + np.rint(frac * dc[ray]).astype(np.int64)
    rows = r0[ray] + np.rint(frac * dr[ray]).astype(np.int64)
    return cols, rows


def rasterize(points: np.ndarray, sensor_origins, cfg: OgmBuildConfig,
              bounds: GridBounds | None = None) -> OccupancyGrid:
    """Splat points onto the plane and classify cells.

    A cell is OCCUPIED when at least ``hit_threshold`` points fall in it. With
    carving, cells crossed by the ray from the nearest sensor origin to each
    occupied cell that saw no hits become FREE and the rest stay UNKNOWN;
    without carving every non-occupied cell is FREE.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    origins = np.asarray(sensor_origins, dtype=float).reshape(-1, 2)
    if bounds is None:
        bounds = auto_bounds(np.concatenate([pts[:, :2], origins], axis=0), cfg)
    shape = (bounds.height, bounds.width)
    res = cfg.resolution
    empty = OccupancyGrid(res, bounds.origin, np.zeros(shape, np.uint8))

    counts = np.zeros(shape, dtype=np.int64)
    if len(pts):
        col, row = empty.world_to_cell(pts[:, 0], pts[:, 1])
        col, row = np.atleast_1d(col), np.atleast_1d(row)
        inside = empty.in_bounds(col, row)
        np.add.at(counts, (row[inside], col[inside]), 1)
    occupied = counts >= cfg.hit_threshold

    if not cfg.carve_free_space:
        cells = np.where(occupied, OCCUPIED, FREE).astype(np.uint8)
        return empty.with_cells(cells)

    cells = np.full(shape, UNKNOWN, dtype=np.uint8)
    occ_rows, occ_cols = np.nonzero(occupied)
    if len(occ_rows) and len(origins):
        cx, cy = empty.cell_center(occ_cols, occ_rows)
        cx, cy = np.atleast_1d(cx), np.atleast_1d(cy)
        d2 = (cx[:, None] - origins[None, :, 0]) ** 2 + (cy[:, None] - origins[None, :, 1]) ** 2
        nearest = np.argmin(d2, axis=1)
        s_col, s_row = empty.world_to_cell(origins[:, 0], origins[:, 1])
        s_col, s_row = np.atleast_1d(s_col), np.atleast_1d(s_row)
        rc, rr = _ray_cells(s_col[nearest], s_row[nearest], occ_cols.astype(np.int64),
                            occ_rows.astype(np.int64))
        ok = empty.in_bounds(rc, rr)
        rc, rr = rc[ok], rr[ok]
        no_hits = counts[rr, rc] == 0
        cells[rr[no_hits], rc[no_hits]] = FREE
    cells[occupied] = OCCUPIED
    return empty.with_cells(cells)


def build_global_grid(frames, traj, cfg: OgmBuildConfig,
                      bounds: GridBounds | None = None) -> OccupancyGrid:
    filtered = [filter_heights(f, cfg) for f in frames]
    pts = accumulate_global(filtered, traj)
    origins = np.array([s.pose.translation[:2] for s in traj]).reshape(-1, 2)
    return rasterize(pts, origins, cfg, bounds)


def build_local_grid(frames, traj, keyframe_index: int, cfg: OgmBuildConfig,
                     half_extent: float = 10.0) -> OccupancyGrid:
    """Keyframe-centred OGM for online use; the keyframe sensor sits at the grid center."""
    filtered = [filter_heights(f, cfg) for f in frames]
    pts = accumulate_local(filtered, traj, keyframe_index, cfg)
    key_inv = invert(traj[keyframe_index].pose)
    idx = window_indices(keyframe_index, len(frames), cfg.keyframe_window)
    origins = np.array([compose(key_inv, traj[i].pose).translation[:2] for i in idx])
    n = int(math.ceil(half_extent / cfg.resolution))
    bounds = GridBounds(Pose2D(-n * cfg.resolution, -n * cfg.resolution, 0.0), 2 * n, 2 * n)
    return rasterize(pts, origins, cfg, bounds)


# --- text recording formats -------------------------------------------------

def read_frame(path, timestamp: float = 0.0) -> PointCloudFrame:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'x y z'")
        rows.append([float(p) for p in parts])
    return PointCloudFrame(timestamp, np.array(rows, dtype=float).reshape(-1, 3))


def write_frame(frame: PointCloudFrame, path) -> None:
    lines = [f"{x!r} {y!r} {z!r}" for x, y, z in frame.points.tolist()]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_trajectory(path) -> list[TrajectorySample]:
    samples = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"{path}:{lineno}: expected 'timestamp tx ty tz qx qy qz qw'")
        v = [float(p) for p in parts]
        if samples and v[0] <= samples[-1].timestamp:
            raise ValueError(f"{path}:{lineno}: timestamps must be strictly increasing")
        samples.append(TrajectorySample(v[0], Transform3D.from_quaternion(v[4:8], v[1:4])))
    return samples


def load_recording(frames_dir, trajectory_path):
    """Frames are every ``*.txt`` file in ``frames_dir`` in name order, paired by index."""
    traj = read_trajectory(trajectory_path)
    files = sorted(Path(frames_dir).glob("*.txt"))
    if len(files) != len(traj):
        raise ValueError(f"{len(files)} frame files but {len(traj)} trajectory lines")
    frames = [read_frame(f, s.timestamp) for f, s in zip(files, traj)]
    return frames, traj

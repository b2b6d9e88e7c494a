"""Scripted synthetic recording: a walled corridor with two obstacles, scanned
from a sensor driving along a gentle S-curve."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .geometry import Transform3D
from .ogm import PointCloudFrame, TrajectorySample, write_frame

N_FRAMES = 12
SENSOR_RANGE = 9.0
_SPACING = 0.08


def _segment(p0, p1):
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    n = max(1, int(round(np.linalg.norm(p1 - p0) / _SPACING)))
    t = np.arange(n + 1) / n
    return p0 + t[:, None] * (p1 - p0)


def _box(cx, cy, hx, hy):
    c = [(cx - hx, cy - hy), (cx + hx, cy - hy), (cx + hx, cy + hy), (cx - hx, cy + hy)]
    return np.concatenate([_segment(c[i], c[(i + 1) % 4]) for i in range(4)])


def scene_outline() -> np.ndarray:
    """2D points on every vertical surface of the scene (world frame)."""
    walls = np.concatenate([
        _segment((-2.0, -4.0), (18.0, -4.0)),
        _segment((18.0, -4.0), (18.0, 4.0)),
        _segment((18.0, 4.0), (-2.0, 4.0)),
        _segment((-2.0, 4.0), (-2.0, -4.0)),
    ])
    return np.concatenate([walls, _box(8.0, 2.0, 0.5, 0.5), _box(12.5, -2.2, 0.3, 0.3)])


def trajectory() -> list[TrajectorySample]:
    out = []
    for k in range(N_FRAMES):
        x = 1.0 * k
        y = 0.4 * math.sin(0.5 * k)
        yaw = math.atan(0.2 * math.cos(0.5 * k))
        q = (0.0, 0.0, math.sin(yaw / 2), math.cos(yaw / 2))
        out.append(TrajectorySample(0.1 * k, Transform3D.from_quaternion(q, (x, y, 0.0))))
    return out


def frames(traj: list[TrajectorySample]) -> list[PointCloudFrame]:
    outline = scene_outline()
    heights = np.array([-1.6, -0.4, 0.3, 1.4])  # floor and ceiling returns get filtered
    world = np.concatenate([np.column_stack([outline, np.full(len(outline), z)]) for z in heights])
    result = []
    for s in traj:
        t = s.pose.translation
        near = np.hypot(world[:, 0] - t[0], world[:, 1] - t[1]) <= SENSOR_RANGE
        local = (world[near] - t) @ s.pose.rotation
        result.append(PointCloudFrame(s.timestamp, local))
    return result


def write_recording(out_dir) -> tuple[Path, Path]:
    """Write ``frames/NNNN.txt`` and ``trajectory.txt``; returns their paths."""
    out = Path(out_dir)
    fdir = out / "frames"
    fdir.mkdir(parents=True, exist_ok=True)
    traj = trajectory()
    for k, fr in enumerate(frames(traj)):
        write_frame(fr, fdir / f"{k:04d}.txt")
    lines = []
    for s in traj:
        yaw = math.atan2(s.pose.rotation[1, 0], s.pose.rotation[0, 0])
        tx, ty, tz = (float(v) for v in s.pose.translation)
        lines.append(f"{s.timestamp!r} {tx!r} {ty!r} {tz!r} 0.0 0.0 "
                     f"{math.sin(yaw / 2)!r} {math.cos(yaw / 2)!r}")
    tpath = out / "trajectory.txt"
    tpath.write_text("\n".join(lines) + "\n")
    return fdir, tpath


def bundled_recording() -> tuple[Path, Path]:
    """Paths of the recording shipped with the package."""
    base = Path(__file__).parent / "data" / "toy_recording"
    return base / "frames", base / "trajectory.txt"

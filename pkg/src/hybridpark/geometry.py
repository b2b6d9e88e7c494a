"""Planar and spatial rigid-body helpers plus the vehicle footprint model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    if not math.isfinite(a):
        raise ValueError(f"cannot normalize non-finite angle {a!r}")
    r = math.remainder(a, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


def wrap_angles(a) -> np.ndarray:
    """Vectorised :func:`normalize_angle`."""
    r = np.remainder(np.asarray(a, dtype=float) + math.pi, TWO_PI) - math.pi
    return np.where(r <= -math.pi, r + TWO_PI, r)


@dataclass(frozen=True)
class Pose2D:
    """SE(2) pose. For vehicles this is the rear-axle center."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    def compose(self, other: "Pose2D") -> "Pose2D":
        """Express `other` (given in this pose's frame) in the parent frame."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2D(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def inverse(self) -> "Pose2D":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2D(-c * self.x - s * self.y, s * self.x - c * self.y, -self.theta)

    def relative_to(self, frame: "Pose2D") -> "Pose2D":
        """This pose expressed in `frame`."""
        return frame.inverse().compose(self)

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        c, s = math.cos(self.theta), math.sin(self.theta)
        rot = np.array([[c, -s], [s, c]])
        return pts @ rot.T + np.array([self.x, self.y])

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Transform3D:
    """Rigid 3D transform p -> R p + t."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = _frozen(self.rotation)
        trans = _frozen(self.translation).reshape(-1)
        if rot.shape != (3, 3) or trans.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(trans))):
            raise ValueError("transform entries must be finite")
        if np.max(np.abs(rot @ rot.T - np.eye(3))) > 1e-9 or abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "Transform3D":
        return cls()

    @classmethod
    def from_quaternion(cls, q_xyzw, translation) -> "Transform3D":
        qx, qy, qz, qw = (float(v) for v in q_xyzw)
        n = math.sqrt(qx * qx + qy * qy + qz * qz + qw * qw)
        if n == 0.0:
            raise ValueError("zero quaternion")
        qx, qy, qz, qw = qx / n, qy / n, qz / n, qw / n
        rot = np.array([
            [1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw)],
            [2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw)],
            [2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy)],
        ])
        # re-orthonormalize so the 1e-9 construction check survives text round-trips
        u, _, vt = np.linalg.svd(rot)
        rot = u @ vt
        return cls(rot, translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __eq__(self, other):
        if not isinstance(other, Transform3D):
            return NotImplemented
        return bool(np.array_equal(self.rotation, other.rotation)
                    and np.array_equal(self.translation, other.translation))

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))


def compose(a: Transform3D, b: Transform3D) -> Transform3D:
    """Return the transform equivalent to applying `b` then `a`."""
    return Transform3D(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(t: Transform3D) -> Transform3D:
    rt = t.rotation.T
    return Transform3D(rt, -(rt @ t.translation))


@dataclass(frozen=True)
class VehicleParams:
    wheelbase: float = 2.5
    width: float = 1.8
    front_overhang: float = 0.9
    rear_overhang: float = 0.7
    max_steer: float = 0.6
    max_speed: float = 2.0

    def __post_init__(self):
        for name in ("wheelbase", "width", "front_overhang", "rear_overhang", "max_speed"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0.0 < self.max_steer < math.pi / 2:
            raise ValueError("max_steer must lie in (0, pi/2)")

    @property
    def min_turn_radius(self) -> float:
        return self.wheelbase / math.tan(self.max_steer)

    @property
    def length(self) -> float:
        return self.front_overhang + self.wheelbase + self.rear_overhang

    @property
    def center_offset(self) -> float:
        """Distance from the rear axle forward to the footprint center."""
        return self.length / 2.0 - self.rear_overhang

    @classmethod
    def with_turn_radius(cls, radius: float, wheelbase: float = 1.0, **kw) -> "VehicleParams":
        return cls(wheelbase=wheelbase, max_steer=math.atan(wheelbase / radius), **kw)


def footprint_polygon(pose: Pose2D, v: VehicleParams, margin: float = 0.0) -> np.ndarray:
    """Footprint rectangle corners (4x2), counter-clockwise, starting rear-right."""
    rear = -v.rear_overhang - margin
    front = v.wheelbase + v.front_overhang + margin
    half = v.width / 2.0 + margin
    local = np.array([[rear, -half], [front, -half], [front, half], [rear, half]])
    return pose.transform_points(local)


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

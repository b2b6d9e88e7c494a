"""Hybrid Reeds-Shepp / reinforcement-learning parking planner toolkit."""

from .geometry import Pose2D, Transform3D, VehicleParams, normalize_angle
from .grid import FREE, OCCUPIED, UNKNOWN, OccupancyGrid, load_grid, save_grid

__version__ = "0.1.0"

__all__ = [
    "FREE", "OCCUPIED", "UNKNOWN", "OccupancyGrid", "Pose2D", "Transform3D", "VehicleParams",
    "load_grid", "normalize_angle", "save_grid", "__version__",
]

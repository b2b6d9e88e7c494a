import math

import numpy as np
import pytest

from hybridpark.geometry import Pose2D, VehicleParams
from hybridpark.grid import FREE, OCCUPIED, OccupancyGrid


def empty_grid(width_m=40.0, height_m=40.0, res=0.1, x0=-20.0, y0=-20.0):
    n_c, n_r = int(round(width_m / res)), int(round(height_m / res))
    return OccupancyGrid(res, Pose2D(x0, y0, 0.0), np.full((n_r, n_c), FREE, np.uint8))


def paint(grid, x_lo, x_hi, y_lo, y_hi, state=OCCUPIED):
    """Set every cell whose center lies in the box."""
    cells = grid.cells.copy()
    cols = np.arange(grid.width)
    rows = np.arange(grid.height)
    cx, cy = grid.cell_center(cols, np.zeros_like(cols))
    _, ry = grid.cell_center(np.zeros_like(rows), rows)
    mc = (cx >= x_lo) & (cx <= x_hi)
    mr = (ry >= y_lo) & (ry <= y_hi)
    cells[np.ix_(mr, mc)] = state
    return grid.with_cells(cells)


@pytest.fixture
def vehicle():
    return VehicleParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_pose(rng, lo=-10.0, hi=10.0):
    return Pose2D(rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(-math.pi, math.pi))


def open_scenario(vehicle=None, start=None, target=None, grid=None):
    """A slot-less open lot: empty grid with a 5.3 x 2.5 m slot drawn around the target."""
    from hybridpark.simulator import Difficulty, ParkingKind, Scenario

    vehicle = vehicle or VehicleParams()
    start = start or Pose2D(0.0, 0.0, 0.0)
    target = target or Pose2D(8.0, 0.0, 0.0)
    off = vehicle.center_offset
    center = Pose2D(target.x + off * math.cos(target.theta),
                    target.y + off * math.sin(target.theta), target.theta)
    return Scenario(grid or empty_grid(), start, target, center, 5.3, 2.5,
                    ParkingKind.PERPENDICULAR, Difficulty.SIM_NORMAL, 0)


# acceptance verdicts, echoed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> bool:
    ACCEPTANCE[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])

"""Occupancy grid container and its PGM + sidecar file format."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Pose2D

FREE = 0
OCCUPIED = 1
UNKNOWN = 2

# map-server byte convention
_STATE_TO_BYTE = {FREE: 254, OCCUPIED: 0, UNKNOWN: 205}
_BYTE_TO_STATE = {b: s for s, b in _STATE_TO_BYTE.items()}
_SIDECAR_KEYS = ("resolution", "origin_x", "origin_y", "origin_theta")


class GridFormatError(ValueError):
    """Raised when a grid file or its sidecar cannot be parsed."""


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Row-major cell lattice; ``cells[row, col]`` with row along +y, col along +x.

    ``origin`` is the world pose of the outer corner of cell (0, 0).
    """

    resolution: float
    origin: Pose2D
    cells: np.ndarray

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        cells = np.array(self.cells, dtype=np.uint8, copy=True)
        if cells.ndim != 2:
            raise ValueError("cells must be a 2D array")
        if cells.size and cells.max() > UNKNOWN:
            raise ValueError("cell values must be FREE, OCCUPIED or UNKNOWN")
        cells.setflags(write=False)
        object.__setattr__(self, "resolution", float(self.resolution))
        object.__setattr__(self, "cells", cells)

    @classmethod
    def filled(cls, width: int, height: int, resolution: float,
               origin: Pose2D | None = None, state: int = FREE) -> "OccupancyGrid":
        return cls(resolution, origin or Pose2D(0.0, 0.0, 0.0),
                   np.full((height, width), state, dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def extent(self) -> tuple[float, float]:
        return self.width * self.resolution, self.height * self.resolution

    def world_to_local(self, x, y):
        c, s = math.cos(self.origin.theta), math.sin(self.origin.theta)
        dx = np.asarray(x, dtype=float) - self.origin.x
        dy = np.asarray(y, dtype=float) - self.origin.y
        return c * dx + s * dy, -s * dx + c * dy

    def local_to_world(self, lx, ly):
        c, s = math.cos(self.origin.theta), math.sin(self.origin.theta)
        lx = np.asarray(lx, dtype=float)
        ly = np.asarray(ly, dtype=float)
        return self.origin.x + c * lx - s * ly, self.origin.y + s * lx + c * ly

    def world_to_cell(self, x, y):
        """(col, row) index of the cell containing the point; may be out of bounds."""
        lx, ly = self.world_to_local(x, y)
        col = np.floor(lx / self.resolution).astype(np.int64)
        row = np.floor(ly / self.resolution).astype(np.int64)
        if col.ndim == 0:
            return int(col), int(row)
        return col, row

    def cell_center(self, col, row):
        lx = (np.asarray(col, dtype=float) + 0.5) * self.resolution
        ly = (np.asarray(row, dtype=float) + 0.5) * self.resolution
        x, y = self.local_to_world(lx, ly)
        if np.ndim(x) == 0:
            return float(x), float(y)
        return x, y

    def in_bounds(self, col, row):
        col = np.asarray(col)
        row = np.asarray(row)
        return (col >= 0) & (col < self.width) & (row >= 0) & (row < self.height)

    def state_at(self, x: float, y: float) -> int:
        col, row = self.world_to_cell(x, y)
        if not self.in_bounds(col, row):
            return UNKNOWN
        return int(self.cells[row, col])

    def lethal(self) -> np.ndarray:
        """Boolean mask of cells a vehicle may not touch (OCCUPIED or UNKNOWN)."""
        return self.cells != FREE

    def with_cells(self, cells: np.ndarray) -> "OccupancyGrid":
        return OccupancyGrid(self.resolution, self.origin, cells)

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (self.resolution == other.resolution and self.origin == other.origin
                and np.array_equal(self.cells, other.cells))

    def __hash__(self):
        return hash((self.resolution, self.origin, self.cells.tobytes()))


def sidecar_path(pgm_path) -> Path:
    return Path(pgm_path).with_suffix(".yaml")


def save_grid(grid: OccupancyGrid, path) -> Path:
    """Write ``<path>`` (binary PGM) and its ``.yaml`` sidecar. Top image row is max y."""
    path = Path(path)
    lut = np.zeros(3, dtype=np.uint8)
    for state, byte in _STATE_TO_BYTE.items():
        lut[state] = byte
    img = lut[grid.cells[::-1]]
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    path.write_bytes(header + img.tobytes())
    o = grid.origin
    sidecar_path(path).write_text(
        f"resolution: {grid.resolution!r}\n"
        f"origin_x: {o.x!r}\norigin_y: {o.y!r}\norigin_theta: {o.theta!r}\n"
    )
    return path


def _read_pgm(data: bytes):
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise GridFormatError("truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval
    if tokens[0] != b"P5":
        raise GridFormatError(f"expected binary PGM magic P5, got {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise GridFormatError("non-integer PGM header field") from exc
    if width <= 0 or height <= 0 or maxval != 255:
        raise GridFormatError("PGM dimensions must be positive and maxval 255")
    body = data[pos:]
    if len(body) != width * height:
        raise GridFormatError(f"PGM body has {len(body)} bytes, expected {width * height}")
    return width, height, np.frombuffer(body, dtype=np.uint8).reshape(height, width)


def _read_sidecar(path: Path) -> dict:
    if not path.exists():
        raise GridFormatError(f"missing sidecar {path}")
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, val = line.partition(":")
        if not sep:
            raise GridFormatError(f"{path}:{lineno}: expected 'key: value'")
        try:
            values[key.strip()] = float(val)
        except ValueError as exc:
            raise GridFormatError(f"{path}:{lineno}: bad number {val.strip()!r}") from exc
    missing = [k for k in _SIDECAR_KEYS if k not in values]
    if missing:
        raise GridFormatError(f"{path}: missing keys {missing}")
    return values


def load_grid(path) -> OccupancyGrid:
    path = Path(path)
    _, _, img = _read_pgm(path.read_bytes())
    meta = _read_sidecar(sidecar_path(path))
    lut = np.full(256, 255, dtype=np.uint8)
    for byte, state in _BYTE_TO_STATE.items():
        lut[byte] = state
    cells = lut[img[::-1]]
    if np.any(cells == 255):
        bad = sorted(set(np.unique(img[::-1][cells == 255]).tolist()))
        raise GridFormatError(f"unknown cell byte values {bad}")
    if not meta["resolution"] > 0:
        raise GridFormatError("resolution must be positive")
    origin = Pose2D(meta["origin_x"], meta["origin_y"], meta["origin_theta"])
    return OccupancyGrid(meta["resolution"], origin, cells)

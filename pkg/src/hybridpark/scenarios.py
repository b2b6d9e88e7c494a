"""Randomised parking-lot scenarios, scenario files and suite manifests."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .collision import CollisionChecker, CollisionConfig
from .geometry import Pose2D, VehicleParams
from .grid import FREE, OCCUPIED, OccupancyGrid, load_grid, save_grid
from .hybrid_astar import HybridAStar, HybridAStarConfig
from .simulator import Difficulty, ParkingKind, Scenario

PERP_SLOT = (5.3, 2.5)  # length along the parked heading, width
PARALLEL_SLOT = (6.5, 2.2)
CAR_SIZE = (4.6, 1.8)  # parked neighbour cars


@dataclass(frozen=True)
class DifficultyProfile:
    perp_aisle: tuple[float, float]
    parallel_aisle: tuple[float, float]
    neighbour_prob: float
    clutter: tuple[int, int]  # inclusive range of extra obstacles in the aisle zone
    opposite_row: bool  # parked cars across the aisle instead of a plain wall
    car_jitter: float  # lateral/longitudinal jitter of neighbour cars (m)
    start_offset: tuple[float, float]  # |x| distance of the start from the slot


PROFILES = {
    Difficulty.SIM_NORMAL: DifficultyProfile((7.0, 8.0), (5.0, 6.0), 0.5, (0, 0), False, 0.1,
                                             (3.0, 9.0)),
    Difficulty.SIM_COMPLEX: DifficultyProfile((5.5, 6.5), (4.2, 5.0), 0.9, (1, 3), True, 0.15,
                                              (3.0, 10.0)),
    Difficulty.REAL_WORLD_STYLE: DifficultyProfile((5.2, 6.0), (4.0, 4.6), 1.0, (3, 6), True,
                                                   0.25, (4.0, 11.0)),
}


@dataclass(frozen=True)
class GeneratorConfig:
    resolution: float = 0.1
    n_slots: int = 7  # slots in the target row (odd; the target is the middle one)
    verify: bool = True
    verify_pops: int = 30_000
    max_attempts: int = 50


class _Canvas:
    """Cell painter in world coordinates on an axis-aligned grid."""

    def __init__(self, x0, y0, width_m, height_m, res):
        self.x0, self.y0, self.res = x0, y0, res
        self.cells = np.full((int(round(height_m / res)), int(round(width_m / res))), FREE,
                             dtype=np.uint8)

    def box(self, cx, cy, length, width, theta=0.0):
        """Mark cells whose centers fall inside a rotated rectangle."""
        r = 0.5 * math.hypot(length, width)
        c0 = max(0, int(math.floor((cx - r - self.x0) / self.res)))
        c1 = min(self.cells.shape[1], int(math.ceil((cx + r - self.x0) / self.res)) + 1)
        r0 = max(0, int(math.floor((cy - r - self.y0) / self.res)))
        r1 = min(self.cells.shape[0], int(math.ceil((cy + r - self.y0) / self.res)) + 1)
        if c0 >= c1 or r0 >= r1:
            return
        xs = self.x0 + (np.arange(c0, c1) + 0.5) * self.res - cx
        ys = self.y0 + (np.arange(r0, r1) + 0.5) * self.res - cy
        dx, dy = np.meshgrid(xs, ys)
        c, s = math.cos(theta), math.sin(theta)
        inside = (np.abs(dx * c + dy * s) <= length / 2) & (np.abs(-dx * s + dy * c) <= width / 2)
        self.cells[r0:r1, c0:c1][inside] = OCCUPIED

    def band(self, x_lo, x_hi, y_lo, y_hi):
        self.box((x_lo + x_hi) / 2, (y_lo + y_hi) / 2, x_hi - x_lo, y_hi - y_lo)

    def grid(self) -> OccupancyGrid:
        return OccupancyGrid(self.res, Pose2D(self.x0, self.y0, 0.0), self.cells)


def _layout(kind: ParkingKind, prof: DifficultyProfile, gcfg: GeneratorConfig,
            vehicle: VehicleParams, rng: np.random.Generator):
    """Draw one candidate lot. Returns (grid, start, target, slot_center, slot dims)."""
    res = gcfg.resolution
    n = gcfg.n_slots
    off = vehicle.center_offset
    if kind is ParkingKind.PERPENDICULAR:
        slot_len, slot_w = PERP_SLOT
        aisle = rng.uniform(*prof.perp_aisle)
        pitch = slot_w
        row_depth = slot_len
    else:
        slot_len, slot_w = PARALLEL_SLOT
        aisle = rng.uniform(*prof.parallel_aisle)
        pitch = slot_len
        row_depth = slot_w
    half_row = pitch * n / 2
    wall = 0.3
    margin_x = 2.0
    x_lo, x_hi = -half_row - margin_x, half_row + margin_x
    y_lo = -row_depth - 0.5 - wall
    far_depth = row_depth if prof.opposite_row else 0.0
    y_hi = aisle + far_depth + 0.3 + wall
    canvas = _Canvas(x_lo, y_lo, x_hi - x_lo, y_hi - y_lo, res)
    # outer walls
    canvas.band(x_lo, x_hi, y_lo, y_lo + wall)
    canvas.band(x_lo, x_hi, y_hi - wall, y_hi)
    canvas.band(x_lo, x_lo + wall, y_lo, y_hi)
    canvas.band(x_hi - wall, x_hi, y_lo, y_hi)

    target_idx = n // 2
    centers = [-half_row + pitch * (i + 0.5) for i in range(n)]
    car_l, car_w = CAR_SIZE
    j = prof.car_jitter
    for i, cx in enumerate(centers):
        if i == target_idx:
            continue
        near = abs(i - target_idx) == 1
        if rng.random() >= (prof.neighbour_prob if near else min(1.0, prof.neighbour_prob + 0.2)):
            continue
        if kind is ParkingKind.PERPENDICULAR:
            canvas.box(cx + rng.uniform(-j, j), -row_depth / 2 + rng.uniform(-j, j),
                       car_l, car_w, math.pi / 2 + rng.uniform(-j, j) * 0.2)
        else:
            canvas.box(cx + rng.uniform(-j, j), -row_depth / 2 + rng.uniform(-j, j) * 0.5,
                       car_l, car_w, rng.uniform(-j, j) * 0.1)
    if prof.opposite_row:
        y_far = aisle + far_depth / 2
        for cx in np.arange(x_lo + 1.5, x_hi - 1.5, pitch):
            if rng.random() < prof.neighbour_prob:
                if kind is ParkingKind.PERPENDICULAR:
                    canvas.box(cx + rng.uniform(-j, j), y_far, car_l, car_w, math.pi / 2)
                else:
                    canvas.box(cx + rng.uniform(-j, j), y_far, car_l, car_w, 0.0)

    # slot frame: perpendicular slots are entered in reverse and end facing the aisle
    slot_cy = -row_depth / 2
    if kind is ParkingKind.PERPENDICULAR:
        slot_center = Pose2D(centers[target_idx], slot_cy, math.pi / 2)
    else:
        slot_center = Pose2D(centers[target_idx], slot_cy, 0.0)
    th = slot_center.theta
    target = Pose2D(slot_center.x - off * math.cos(th), slot_center.y - off * math.sin(th), th)

    lo, hi = prof.start_offset
    sx = centers[target_idx] + rng.choice([-1.0, 1.0]) * rng.uniform(lo, hi)
    sx = float(np.clip(sx, x_lo + 3.5, x_hi - 3.5))
    sy = aisle * rng.uniform(0.4, 0.6)
    heading = (0.0 if rng.random() < 0.5 else math.pi) + rng.uniform(-0.2, 0.2)
    # rear axle so that the footprint center sits at (sx, sy)
    start = Pose2D(sx - off * math.cos(heading), sy - off * math.sin(heading), heading)

    # clutter: small boxes and pillars in the aisle fringes, never on the slot mouth
    n_clutter = int(rng.integers(prof.clutter[0], prof.clutter[1] + 1))
    for _ in range(n_clutter):
        w = rng.uniform(0.4, 1.0)
        h = rng.uniform(0.4, 1.0)
        for _try in range(20):
            cx = rng.uniform(x_lo + 0.8, x_hi - 0.8)
            if abs(cx - centers[target_idx]) < pitch:
                continue
            if rng.random() < 0.5:
                cy = rng.uniform(0.1, 0.6)  # by the slot row
            else:
                cy = aisle - rng.uniform(0.1, 0.6)  # by the far side
            if math.hypot(cx - sx, cy - sy) < 4.0:
                continue
            canvas.box(cx, cy, w, h, rng.uniform(0, math.pi))
            break
    return canvas.grid(), start, target, slot_center, slot_len, slot_w


def generate_scenario(kind: ParkingKind, difficulty: Difficulty, seed: int,
                      vehicle: VehicleParams | None = None,
                      gcfg: GeneratorConfig | None = None,
                      collision_cfg: CollisionConfig | None = None) -> Scenario:
    """Deterministic in ``seed``; candidates failing validation are redrawn from the same stream."""
    vehicle = vehicle or VehicleParams()
    gcfg = gcfg or GeneratorConfig()
    prof = PROFILES[difficulty]
    rng = np.random.default_rng([int(seed), 0x5CE7])
    for _ in range(gcfg.max_attempts):
        grid, start, target, slot_center, slot_len, slot_w = _layout(kind, prof, gcfg, vehicle, rng)
        checker = CollisionChecker(grid, vehicle, collision_cfg)
        if checker.pose_collides(start) or checker.pose_collides(target):
            continue
        sc = Scenario(grid, start, target, slot_center, slot_len, slot_w, kind, difficulty,
                      int(seed))
        if not sc.footprint_in_slot(target, vehicle):
            continue
        if gcfg.verify:
            planner = HybridAStar(checker, HybridAStarConfig(max_pops=gcfg.verify_pops,
                                                             seed=int(seed)))
            if planner.plan(start, target) is None:
                continue
        return sc
    raise RuntimeError(f"no valid {kind.value}/{difficulty.value} scenario for seed {seed} "
                       f"after {gcfg.max_attempts} attempts")


# -- files ----------------------------------------------------------------

def _pose_str(p: Pose2D) -> str:
    return f"{p.x!r} {p.y!r} {p.theta!r}"


def _parse_pose(text: str) -> Pose2D:
    parts = text.split()
    if len(parts) != 3:
        raise ValueError(f"expected 'x y theta', got {text!r}")
    return Pose2D(*(float(v) for v in parts))


def save_scenario(sc: Scenario, path) -> Path:
    """Write ``<name>.scn`` plus its grid as ``<name>.pgm`` / ``<name>.yaml`` next to it."""
    path = Path(path)
    grid_path = path.with_suffix(".pgm")
    save_grid(sc.grid, grid_path)
    lines = [
        f"kind: {sc.kind.value}",
        f"difficulty: {sc.difficulty.value}",
        f"seed: {sc.seed}",
        f"start: {_pose_str(sc.start)}",
        f"target: {_pose_str(sc.target)}",
        f"slot_center: {_pose_str(sc.slot_center)}",
        f"slot_length: {sc.slot_length!r}",
        f"slot_width: {sc.slot_width!r}",
        f"grid: {grid_path.name}",
    ]
    path.write_text("\n".join(lines) + "\n")
    return path


def load_scenario(path) -> Scenario:
    path = Path(path)
    kv = {}
    for raw in path.read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ValueError(f"{path}: malformed line {raw!r}")
        kv[key.strip()] = value.strip()
    required = ("kind", "difficulty", "seed", "start", "target", "slot_center", "slot_length",
                "slot_width", "grid")
    missing = [k for k in required if k not in kv]
    if missing:
        raise ValueError(f"{path}: missing keys {missing}")
    grid = load_grid(path.parent / kv["grid"])
    return Scenario(grid, _parse_pose(kv["start"]), _parse_pose(kv["target"]),
                    _parse_pose(kv["slot_center"]), float(kv["slot_length"]),
                    float(kv["slot_width"]), ParkingKind(kv["kind"]),
                    Difficulty(kv["difficulty"]), int(kv["seed"]))


def suite_seeds(base_seed: int, n: int) -> list[int]:
    """Scenario seeds for a suite; distinct base seeds give disjoint streams in practice."""
    ss = np.random.SeedSequence([int(base_seed), 0x5017E])
    return [int(v) for v in ss.generate_state(n, dtype=np.uint32)]


def generate_suite(out_dir, kinds: list[tuple[ParkingKind, int]], difficulty: Difficulty,
                   seed: int, vehicle: VehicleParams | None = None,
                   gcfg: GeneratorConfig | None = None) -> Path:
    """Generate scenarios and write them plus ``manifest.txt`` (one file name per line)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    total = sum(n for _, n in kinds)
    seeds = suite_seeds(seed, total)
    names = []
    i = 0
    for kind, n in kinds:
        for _ in range(n):
            sc = generate_scenario(kind, difficulty, seeds[i], vehicle, gcfg)
            name = f"{difficulty.value}_{kind.value}_{i:04d}.scn"
            save_scenario(sc, out / name)
            names.append(name)
            i += 1
    manifest = out / "manifest.txt"
    manifest.write_text("\n".join(names) + "\n")
    return manifest


def load_suite(manifest) -> list[Scenario]:
    manifest = Path(manifest)
    if not manifest.is_file():
        raise FileNotFoundError(f"suite manifest {manifest} not found")
    names = [ln.strip() for ln in manifest.read_text().splitlines() if ln.strip()]
    return [load_scenario(manifest.parent / name) for name in names]


def scenario_pool(kinds: list[tuple[ParkingKind, int]], difficulty: Difficulty, seed: int,
                  vehicle: VehicleParams | None = None,
                  gcfg: GeneratorConfig | None = None) -> list[Scenario]:
    """In-memory list of scenarios, same seeding as :func:`generate_suite`."""
    total = sum(n for _, n in kinds)
    seeds = suite_seeds(seed, total)
    out = []
    i = 0
    for kind, n in kinds:
        for _ in range(n):
            out.append(generate_scenario(kind, difficulty, seeds[i], vehicle, gcfg))
            i += 1
    return out

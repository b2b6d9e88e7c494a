"""Hybrid A* baseline: lattice search over (x, y, heading, gear) with
arc motion primitives and Reeds-Shepp analytic expansion towards the goal."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from . import reeds_shepp as rs
from .collision import CollisionChecker, CollisionConfig
from .geometry import Pose2D, VehicleParams, normalize_angle
from .grid import OccupancyGrid

# worst-case ratio between octile and Euclidean distance
_OCTILE_SLACK = math.sqrt(1.0 + (math.sqrt(2.0) - 1.0) ** 2)


@dataclass(frozen=True)
class HybridAStarConfig:
    xy_resolution: float = 0.2
    yaw_resolution: float = math.radians(5.0)
    arc_length: float = 0.5
    n_steer: int = 5
    reverse_penalty: float = 1.5
    shift_penalty: float = 2.0
    max_pops: int = 200_000
    analytic_expansion: bool = True
    analytic_radius: float = 6.0  # expansion attempted surely once the heuristic drops below this
    goal_pos_tol: float = 0.1
    goal_ang_tol: float = math.radians(2.0)
    holonomic_resolution: float = 0.2
    seed: int = 0


@dataclass
class SearchNode:
    state: Pose2D
    gear: int
    g_cost: float
    parent: "SearchNode | None"
    primitive: tuple[float, int, float] | None  # (steer, gear, arc length)
    poses: np.ndarray = field(repr=False, default=None)  # swept poses from parent, parent excluded


@dataclass
class PlannedPath:
    poses: np.ndarray  # (N, 3)
    gears: np.ndarray  # (N,) +1 / -1 per pose (gear used to reach it; first copies the second)
    cost: float
    length: float
    gear_shifts: int
    pops: int
    rs_tail: rs.RSPath | None
    segments: list[tuple[float, int, float]] = field(default_factory=list)  # (steer, gear, length)

    def pose_list(self) -> list[Pose2D]:
        return [Pose2D(*p) for p in self.poses]


def path_cost(lengths_and_gears, reverse_penalty: float, shift_penalty: float,
              initial_gear: int = 0) -> float:
    """Cost of a sequence of (length, gear) pieces: length, reverse surcharge and shift penalty."""
    cost = 0.0
    last = initial_gear
    for length, gear in lengths_and_gears:
        if length <= rs.ZERO_LENGTH:
            continue
        cost += length * (1.0 + reverse_penalty if gear < 0 else 1.0)
        if last != 0 and gear != last:
            cost += shift_penalty
        last = gear
    return cost


def _shift_slices(ny, nx, dj, di, which):
    """Index slices pairing cell (j, i) (which=0) with cell (j + dj, i + di) (which=1)."""
    def one(n, d):
        if which == 0:
            return slice(max(0, -d), n - max(0, d))
        return slice(max(0, d), n - max(0, -d))
    return one(ny, dj), one(nx, di)


class HolonomicHeuristic:
    """Obstacle-aware 2D distance to the goal ignoring heading, scaled to stay optimistic."""

    def __init__(self, checker: CollisionChecker, goal: Pose2D, resolution: float):
        grid = checker.grid
        v = checker.vehicle
        self.res = resolution
        w_m, h_m = grid.extent
        self.nx = max(1, int(math.ceil(w_m / resolution)))
        self.ny = max(1, int(math.ceil(h_m / resolution)))
        self.grid = grid
        # the rear axle keeps this far from any lethal cell center
        keep_out = min(v.rear_overhang, v.width / 2.0) + checker.cfg.safety_margin
        keep_out -= resolution * math.sqrt(0.5) + grid.resolution * math.sqrt(2.0)
        ii, jj = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        cx, cy = grid.local_to_world((ii + 0.5) * resolution, (jj + 0.5) * resolution)
        col, row = grid.world_to_cell(cx.ravel(), cy.ravel())
        col = np.clip(col, 0, grid.width - 1) + checker.pad
        row = np.clip(row, 0, grid.height - 1) + checker.pad
        free = (checker.edt[row, col] >= keep_out).reshape(self.ny, self.nx)
        self.free = free
        idx = np.arange(self.nx * self.ny).reshape(self.ny, self.nx)
        rows, cols, weights = [], [], []
        for di, dj in ((0, 1), (1, 0), (1, 1), (1, -1)):
            sa = _shift_slices(self.ny, self.nx, dj, di, 0)
            sb = _shift_slices(self.ny, self.nx, dj, di, 1)
            ok = free[sa] & free[sb]
            rows.append(idx[sa][ok])
            cols.append(idx[sb][ok])
            weights.append(np.full(int(ok.sum()), resolution * math.hypot(di, dj)))
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        wts = np.concatenate(weights)
        n = self.nx * self.ny
        graph = coo_matrix((np.concatenate([wts, wts]), (np.concatenate([r, c]),
                                                         np.concatenate([c, r]))), shape=(n, n))
        gi, gj = self._cell(goal.x, goal.y)
        self.dist = dijkstra(graph.tocsr(), indices=gj * self.nx + gi).reshape(self.ny, self.nx)

    def _cell(self, x, y):
        lx, ly = self.grid.world_to_local(x, y)
        i = int(min(max(math.floor(float(lx) / self.res), 0), self.nx - 1))
        j = int(min(max(math.floor(float(ly) / self.res), 0), self.ny - 1))
        return i, j

    def __call__(self, x: float, y: float) -> float:
        i, j = self._cell(x, y)
        d = self.dist[j, i]
        if not math.isfinite(d):
            return 0.0  # unreachable on the coarse grid; stay optimistic
        return max(0.0, d / _OCTILE_SLACK - math.sqrt(2.0) * self.res)


def heuristic(state: Pose2D, goal: Pose2D, grid: OccupancyGrid, vehicle: VehicleParams,
              collision_cfg: CollisionConfig | None = None,
              holonomic: HolonomicHeuristic | None = None,
              cfg: HybridAStarConfig | None = None) -> float:
    """max(obstacle-free Reeds-Shepp length, obstacle-aware 2D distance)."""
    h_rs = rs.shortest_length(state, goal, vehicle.min_turn_radius)
    if holonomic is None:
        cfg = cfg or HybridAStarConfig()
        checker = CollisionChecker(grid, vehicle, collision_cfg)
        holonomic = HolonomicHeuristic(checker, goal, cfg.holonomic_resolution)
    return max(h_rs, holonomic(state.x, state.y))


class HybridAStar:
    def __init__(self, checker: CollisionChecker, cfg: HybridAStarConfig | None = None):
        self.checker = checker
        self.cfg = cfg or HybridAStarConfig()
        v = checker.vehicle
        self.vehicle = v
        self.r_min = v.min_turn_radius
        n = self.cfg.n_steer
        steers = np.linspace(-v.max_steer, v.max_steer, n) if n > 1 else np.zeros(1)
        self.primitives = [(float(d), g) for g in (1, -1) for d in steers]

    def _key(self, x, y, th, gear):
        c = self.cfg
        n_yaw = int(round(2 * math.pi / c.yaw_resolution))
        return (int(math.floor(x / c.xy_resolution)), int(math.floor(y / c.xy_resolution)),
                int(math.floor((th + math.pi) / c.yaw_resolution)) % n_yaw, gear)

    def _arc_poses(self, pose: Pose2D, steer: float, gear: int) -> np.ndarray:
        c = self.cfg
        step = self.checker.cfg.sample_step
        n = max(1, math.ceil(c.arc_length / step - 1e-9))
        s = gear * c.arc_length * np.arange(1, n + 1) / n
        kappa = math.tan(steer) / self.vehicle.wheelbase
        th0 = pose.theta
        if abs(kappa) < 1e-12:
            return np.column_stack([pose.x + s * math.cos(th0), pose.y + s * math.sin(th0),
                                    np.full(n, th0)])
        th = th0 + kappa * s
        return np.column_stack([pose.x + (np.sin(th) - math.sin(th0)) / kappa,
                                pose.y + (math.cos(th0) - np.cos(th)) / kappa, th])

    def _try_analytic(self, node: SearchNode, goal: Pose2D):
        step = self.checker.cfg.sample_step
        for path in rs.sort_by_preference(rs.enumerate_all(node.state, goal, self.r_min)):
            poses = rs.sample_array(path, node.state, self.r_min, step)
            if self.checker.first_collision(poses[1:]) < 0:
                return path, poses
        return None

    def plan(self, start: Pose2D, goal: Pose2D, heuristic_fn=None) -> PlannedPath | None:
        cfg = self.cfg
        if self.checker.pose_collides(start):
            raise ValueError("start pose is in collision")
        if heuristic_fn is None:
            holo = HolonomicHeuristic(self.checker, goal, cfg.holonomic_resolution)
            r_min = self.r_min

            def heuristic_fn(x, y, th):
                p = Pose2D(x, y, th)
                return max(rs.shortest_length(p, goal, r_min), holo(x, y))

        rng = np.random.default_rng(cfg.seed)
        root = SearchNode(start, 0, 0.0, None, None, np.zeros((0, 3)))
        counter = 0
        h0 = heuristic_fn(start.x, start.y, start.theta)
        open_heap = [(h0, counter, h0, root)]
        best_g = {self._key(start.x, start.y, start.theta, 0): 0.0}
        closed = set()
        pops = 0
        while open_heap and pops < cfg.max_pops:
            _, _, h, node = heapq.heappop(open_heap)
            key = self._key(node.state.x, node.state.y, node.state.theta, node.gear)
            if key in closed:
                continue
            closed.add(key)
            pops += 1

            if cfg.analytic_expansion:
                p = 1.0 if h <= cfg.analytic_radius else cfg.analytic_radius / h
                if p >= 1.0 or rng.random() < p:
                    hit = self._try_analytic(node, goal)
                    if hit is not None:
                        return self._assemble(node, hit, pops)
            elif (node.state.distance_to(goal) <= cfg.goal_pos_tol
                  and abs(normalize_angle(node.state.theta - goal.theta)) <= cfg.goal_ang_tol):
                return self._assemble(node, None, pops)

            children = [self._arc_poses(node.state, d, g) for d, g in self.primitives]
            hits = self.checker.poses_collide(np.concatenate(children))
            n_each = len(children[0])
            for i, ((steer, gear), poses) in enumerate(zip(self.primitives, children)):
                if hits[i * n_each:(i + 1) * n_each].any():
                    continue
                x, y, th = poses[-1]
                th = normalize_angle(th)
                ckey = self._key(x, y, th, gear)
                if ckey in closed:
                    continue
                g = node.g_cost + cfg.arc_length * (1.0 + cfg.reverse_penalty if gear < 0 else 1.0)
                if node.gear != 0 and gear != node.gear:
                    g += cfg.shift_penalty
                if g >= best_g.get(ckey, math.inf):
                    continue
                best_g[ckey] = g
                child = SearchNode(Pose2D(x, y, th), gear, g, node, (steer, gear, cfg.arc_length),
                                   poses)
                hc = heuristic_fn(x, y, th)
                counter += 1
                heapq.heappush(open_heap, (g + hc, counter, hc, child))
        return None

    def _assemble(self, node: SearchNode, analytic, pops: int) -> PlannedPath:
        chain = []
        n = node
        while n is not None:
            chain.append(n)
            n = n.parent
        chain.reverse()
        poses = [chain[0].state.as_array()[None, :]]
        gears = [np.zeros(1, dtype=int)]
        pieces = []
        segments = []
        for nd in chain[1:]:
            poses.append(nd.poses)
            gears.append(np.full(len(nd.poses), nd.gear, dtype=int))
            pieces.append((self.cfg.arc_length, nd.gear))
            segments.append(nd.primitive)
        tail = None
        if analytic is not None:
            tail, rs_poses = analytic
            seg_gears = []
            for seg in tail.segments:
                if seg.length <= 0:
                    continue
                k = max(1, math.ceil(seg.length / self.checker.cfg.sample_step - 1e-9))
                seg_gears.extend([seg.gear.value] * k)
                pieces.append((seg.length, seg.gear.value))
                segments.append((seg.steer.sign * self.vehicle.max_steer, seg.gear.value,
                                 seg.length))
            poses.append(rs_poses[1:])
            gears.append(np.array(seg_gears, dtype=int))
        all_poses = np.concatenate(poses)
        all_gears = np.concatenate(gears)
        if len(all_gears) > 1:
            all_gears[0] = all_gears[1]
        cost = path_cost(pieces, self.cfg.reverse_penalty, self.cfg.shift_penalty)
        length = sum(l for l, _ in pieces)
        gseq = [g for l, g in pieces if l > rs.ZERO_LENGTH]
        shifts = sum(1 for a, b in zip(gseq, gseq[1:]) if a != b)
        return PlannedPath(all_poses, all_gears, cost, length, shifts, pops, tail, segments)


def plan(grid: OccupancyGrid, start: Pose2D, goal: Pose2D, vehicle: VehicleParams,
         cfg: HybridAStarConfig | None = None,
         collision_cfg: CollisionConfig | None = None) -> PlannedPath | None:
    checker = CollisionChecker(grid, vehicle, collision_cfg)
    return HybridAStar(checker, cfg).plan(start, goal)

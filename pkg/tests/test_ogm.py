import hashlib
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybridpark.geometry import Pose2D, Transform3D
from hybridpark.grid import (FREE, OCCUPIED, UNKNOWN, GridFormatError, OccupancyGrid, load_grid,
                             save_grid)
from hybridpark.ogm import (GridBounds, OgmBuildConfig, PointCloudFrame, TrajectorySample,
                            accumulate_global, accumulate_local, build_global_grid,
                            build_local_grid, filter_heights, load_recording, rasterize,
                            read_trajectory)
from hybridpark.toy import bundled_recording, write_recording

CFG = OgmBuildConfig()


def random_recording(rng, n_frames, n_points=50):
    frames, traj = [], []
    for k in range(n_frames):
        frames.append(PointCloudFrame(0.1 * k, rng.normal(size=(n_points, 3)) * 5))
        traj.append(TrajectorySample(0.1 * k, Transform3D.from_quaternion(
            rng.normal(size=4), rng.normal(size=3) * 10)))
    return frames, traj


# -- filter_heights ----------------------------------------------------------

def test_filter_band_membership():
    f = PointCloudFrame(0.0, [[0, 0, -2.0], [1, 1, 0.0], [2, 2, 2.5]])
    out = filter_heights(f, OgmBuildConfig(z_min=-1.2, z_max=0.8))
    assert out.points.tolist() == [[1.0, 1.0, 0.0]]


def test_filter_empty():
    assert len(filter_heights(PointCloudFrame(0.0, np.zeros((0, 3))), CFG)) == 0


def test_filter_fraction(rng):
    z = rng.uniform(0.0, 10.0, 10_000)
    f = PointCloudFrame(0.0, np.column_stack([np.zeros_like(z), np.zeros_like(z), z]))
    out = filter_heights(f, OgmBuildConfig(z_min=3.0, z_max=7.0))
    assert abs(len(out) / len(f) - 0.4) < 0.02
    # order preserved and idempotent
    assert np.array_equal(out.points, f.points[(z >= 3) & (z <= 7)])
    assert np.array_equal(filter_heights(out, OgmBuildConfig(z_min=3.0, z_max=7.0)).points,
                          out.points)


def test_frame_rejects_non_finite():
    with pytest.raises(ValueError):
        PointCloudFrame(0.0, [[0.0, math.nan, 0.0]])


@pytest.mark.parametrize("kw", [dict(z_min=1.0, z_max=0.0), dict(hit_threshold=0),
                                dict(resolution=0.0), dict(keyframe_window=0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        OgmBuildConfig(**kw)


# -- accumulation ------------------------------------------------------------

def test_global_identity_single_frame(rng):
    pts = rng.normal(size=(20, 3))
    out = accumulate_global([PointCloudFrame(0, pts)], [TrajectorySample(0, Transform3D.identity())])
    assert np.array_equal(out, pts)


def test_global_single_translation():
    out = accumulate_global([PointCloudFrame(0, [[1.0, 0.0, 0.0]])],
                            [TrajectorySample(0, Transform3D(np.eye(3), [0.0, 5.0, 0.0]))])
    assert out.tolist() == [[1.0, 5.0, 0.0]]


def test_global_per_point_oracle(rng):
    frames, traj = random_recording(rng, 3)
    out = accumulate_global(frames, traj)
    expected = [s.pose.rotation @ p + s.pose.translation for f, s in zip(frames, traj)
                for p in f.points]
    assert np.max(np.abs(out - np.array(expected))) < 1e-9


def test_global_length_mismatch(rng):
    frames, traj = random_recording(rng, 3)
    with pytest.raises(ValueError):
        accumulate_global(frames, traj[:2])


def test_local_window_of_one(rng):
    frames, traj = random_recording(rng, 4)
    out = accumulate_local(frames, traj, 2, OgmBuildConfig(keyframe_window=1))
    assert np.max(np.abs(out - frames[2].points)) < 1e-9


def test_local_identical_poses(rng):
    frames, _ = random_recording(rng, 2)
    pose = Transform3D.from_quaternion(rng.normal(size=4), rng.normal(size=3))
    traj = [TrajectorySample(0, pose), TrajectorySample(0.1, pose)]
    out = accumulate_local(frames, traj, 1, OgmBuildConfig(keyframe_window=2))
    assert np.max(np.abs(out - np.concatenate([frames[0].points, frames[1].points]))) < 1e-9


def test_local_errors(rng):
    frames, traj = random_recording(rng, 3)
    with pytest.raises(ValueError):
        accumulate_local(frames, traj, 3, CFG)
    with pytest.raises(ValueError):
        accumulate_local([], [], 0, CFG)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.integers(1, 6))
def test_local_maps_into_global(seed, n_frames, window):
    rng = np.random.default_rng(seed)
    frames, traj = random_recording(rng, n_frames, 10)
    k = int(rng.integers(n_frames))
    local = accumulate_local(frames, traj, k, OgmBuildConfig(keyframe_window=window))
    glob = accumulate_global(frames, traj)
    lo = max(0, k - window + 1)
    start = sum(len(f) for f in frames[:lo])
    expected = glob[start:start + len(local)]
    assert np.max(np.abs(traj[k].pose.apply(local) - expected)) < 1e-9


# -- rasterize ---------------------------------------------------------------

def test_rasterize_single_point():
    cfg = OgmBuildConfig(hit_threshold=1, carve_free_space=False)
    g = rasterize([[1.05, 0.0, 0.0]], [], cfg, GridBounds(Pose2D(0, 0, 0), 20, 5))
    assert g.cells[0, 10] == OCCUPIED
    assert np.count_nonzero(g.cells == OCCUPIED) == 1


def test_rasterize_no_points_all_free():
    g = rasterize(np.zeros((0, 3)), [], OgmBuildConfig(carve_free_space=False),
                  GridBounds(Pose2D(0, 0, 0), 8, 6))
    assert np.all(g.cells == FREE)


def test_rasterize_rejects_bad_resolution():
    with pytest.raises(ValueError):
        rasterize([[0, 0, 0]], [], OgmBuildConfig(resolution=-0.1))


def _march(grid, x0, y0, x1, y1, step=0.001):
    """Fine-step ray march: cells visited strictly before the end cell."""
    end = grid.world_to_cell(x1, y1)
    n = int(math.hypot(x1 - x0, y1 - y0) / step)
    seen = []
    for i in range(n + 1):
        t = i / n
        c = grid.world_to_cell(x0 + t * (x1 - x0), y0 + t * (y1 - y0))
        if c == end:
            break
        if not seen or seen[-1] != c:
            seen.append(c)
    return seen


def test_rasterize_wall_carving():
    cfg = OgmBuildConfig(hit_threshold=1, carve_free_space=True)
    ys = np.arange(-1.0, 1.0001, 0.02)
    wall = np.column_stack([np.full_like(ys, 2.03), ys, np.zeros_like(ys)])
    bounds = GridBounds(Pose2D(-0.5, -1.5, 0), 40, 30)
    g = rasterize(wall, [[0.05, 0.05]], cfg, bounds)
    row0 = g.world_to_cell(0.05, 0.05)[1]
    wall_col = g.world_to_cell(2.03, 0.0)[0]
    # y = 0 row: free up to the wall, wall occupied, unknown behind
    sensor_col = g.world_to_cell(0.05, 0.05)[0]
    assert np.all(g.cells[row0, sensor_col:wall_col] == FREE)
    assert g.cells[row0, wall_col] == OCCUPIED
    assert np.all(g.cells[row0, wall_col + 1:] == UNKNOWN)
    assert np.all(g.cells[:, wall_col + 1:] == UNKNOWN)
    # oracle: a fine ray march from the sensor to each hit. Cells whose center lies
    # well inside the ray's band must be carved; nothing off the rays may be.
    occ_r, occ_c = np.nonzero(g.cells == OCCUPIED)
    crossed = set()
    for r, c in zip(occ_r, occ_c):
        x, y = g.cell_center(c, r)
        for cc, rr in _march(g, 0.05, 0.05, x, y):
            crossed.add((cc, rr))
            if g.cells[rr, cc] != OCCUPIED and _ray_distance(g, cc, rr, x, y) < 0.35 * g.resolution:
                assert g.cells[rr, cc] == FREE
    free_r, free_c = np.nonzero(g.cells == FREE)
    assert set(zip(free_c.tolist(), free_r.tolist())) <= crossed


def _ray_distance(grid, col, row, x, y):
    """Perpendicular distance from a cell center to the sensor ray towards (x, y)."""
    cx, cy = grid.cell_center(col, row)
    sx, sy = 0.05, 0.05
    return abs((x - sx) * (sy - cy) - (sx - cx) * (y - sy)) / math.hypot(x - sx, y - sy)


def test_rasterize_deterministic_and_monotone(rng):
    pts = rng.uniform(-3, 3, size=(400, 3))
    cfg = OgmBuildConfig(hit_threshold=1)
    bounds = GridBounds(Pose2D(-4, -4, 0), 80, 80)
    a = rasterize(pts, [[0, 0]], cfg, bounds)
    b = rasterize(pts.copy(), [[0, 0]], cfg, bounds)
    assert a == b
    more = rasterize(np.concatenate([pts, rng.uniform(-3, 3, size=(200, 3))]), [[0, 0]], cfg, bounds)
    assert np.all(more.cells[a.cells == OCCUPIED] == OCCUPIED)


def test_hit_threshold_two():
    cfg = OgmBuildConfig(hit_threshold=2, carve_free_space=False)
    b = GridBounds(Pose2D(0, 0, 0), 10, 10)
    g = rasterize([[0.55, 0.55, 0], [0.52, 0.51, 0], [0.25, 0.25, 0]], [], cfg, b)
    assert g.cells[5, 5] == OCCUPIED and g.cells[2, 2] == FREE


# -- grid files --------------------------------------------------------------

def test_grid_roundtrip_small(tmp_path):
    g = OccupancyGrid.filled(3, 3, 0.1)
    save_grid(g, tmp_path / "g.pgm")
    assert load_grid(tmp_path / "g.pgm") == g


def test_grid_roundtrip_all_states(tmp_path):
    cells = np.array([[FREE, OCCUPIED, UNKNOWN], [UNKNOWN, FREE, OCCUPIED]], np.uint8)
    g = OccupancyGrid(0.25, Pose2D(-1.5, 2.0, 0.3), cells)
    save_grid(g, tmp_path / "g.pgm")
    back = load_grid(tmp_path / "g.pgm")
    assert back == g
    assert back.origin.theta == g.origin.theta


def test_grid_large_resave_byte_identical(tmp_path, rng):
    g = OccupancyGrid(0.1, Pose2D(0.1, -0.7, 0.0), rng.integers(0, 3, (1024, 1024)))
    save_grid(g, tmp_path / "a.pgm")
    save_grid(load_grid(tmp_path / "a.pgm"), tmp_path / "b.pgm")
    for suffix in (".pgm", ".yaml"):
        ha = hashlib.sha256((tmp_path / f"a{suffix}").read_bytes()).hexdigest()
        hb = hashlib.sha256((tmp_path / f"b{suffix}").read_bytes()).hexdigest()
        assert ha == hb


def test_grid_file_errors(tmp_path):
    g = OccupancyGrid.filled(4, 4, 0.1)
    p = save_grid(g, tmp_path / "g.pgm")
    data = p.read_bytes()
    (tmp_path / "bad.pgm").write_bytes(b"P2\n4 4\n255\n" + data[-16:])
    (tmp_path / "bad.yaml").write_text((tmp_path / "g.yaml").read_text())
    with pytest.raises(GridFormatError):
        load_grid(tmp_path / "bad.pgm")
    (tmp_path / "bad.pgm").write_bytes(data[:-3])  # size mismatch
    with pytest.raises(GridFormatError):
        load_grid(tmp_path / "bad.pgm")
    (tmp_path / "bad.pgm").write_bytes(data[:-1] + b"\x07")  # unknown byte
    with pytest.raises(GridFormatError):
        load_grid(tmp_path / "bad.pgm")


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_world_cell_round_trip(x, y):
    g = OccupancyGrid.filled(100, 100, 0.1, Pose2D(-5.0, -5.0, 0.4))
    col, row = g.world_to_cell(x, y)
    if g.in_bounds(col, row):
        cx, cy = g.cell_center(col, row)
        assert g.world_to_cell(cx, cy) == (col, row)
        lx, ly = g.world_to_local(x, y)
        assert np.allclose(g.local_to_world(lx, ly), (x, y), atol=1e-9)


# -- recordings --------------------------------------------------------------

def test_recording_round_trip(tmp_path):
    fdir, tpath = write_recording(tmp_path)
    frames, traj = load_recording(fdir, tpath)
    ref_frames, ref_traj = load_recording(*bundled_recording())
    assert len(frames) == len(ref_frames)
    for a, b in zip(frames, ref_frames):
        assert np.array_equal(a.points, b.points)
    for a, b in zip(traj, ref_traj):
        assert a.pose == b.pose


def test_trajectory_must_increase(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("0.0 0 0 0 0 0 0 1\n0.0 1 0 0 0 0 0 1\n")
    with pytest.raises(ValueError):
        read_trajectory(p)


def test_global_grid_matches_golden():
    from pathlib import Path
    golden = load_grid(Path(__file__).parent / "golden" / "toy_global.pgm")
    assert build_global_grid(*load_recording(*bundled_recording()), CFG) == golden


def test_local_grid_sensor_cell_free():
    frames, traj = load_recording(*bundled_recording())
    g = build_local_grid(frames, traj, 5, CFG)
    assert g.state_at(0.0, 0.0) == FREE
    assert np.any(g.cells == OCCUPIED)

import math

import numpy as np
import pytest

from robustnav import render as R
from robustnav import world as wd


def wall_room(wall_col=60, size=100):
    occ = np.zeros((size, size), dtype=bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    occ[:, wall_col] = True
    sem = occ.astype(np.uint16)
    return wd.GridMap(occ, sem, [], 0.05, "wallroom", 0)


@pytest.fixture(scope="module")
def scene():
    return wd.generate_scene(7)


@pytest.fixture(scope="module")
def intr():
    return R.CameraIntrinsics(width=64, height=64)


def test_flat_wall_center_depth(intr):
    g = wall_room()
    frame = R.render(g, wd.Pose(2.0, 2.0, 0.0), intr)
    # wall front face exactly 1.0 m ahead
    assert frame.depth[32, 31] == pytest.approx(1.0, abs=g.cell_size)
    assert frame.depth[32, 32] == pytest.approx(1.0, abs=g.cell_size)


def test_heading_wraparound(scene, intr):
    a = R.render(scene, wd.Pose(1.5, 1.2, 0.0), intr)
    b = R.render(scene, wd.Pose(1.5, 1.2, 360.0), intr)
    assert np.array_equal(a.rgb, b.rgb)
    assert np.array_equal(a.depth, b.depth)


def test_purity(scene, intr):
    p = wd.Pose(2.1, 3.3, 123.4)
    a = R.render(scene, p, intr)
    b = R.render(scene, p, intr)
    assert np.array_equal(a.rgb, b.rgb) and np.array_equal(a.depth, b.depth)


def test_center_depth_fov_invariant(scene):
    p = wd.Pose(2.1, 3.3, 77.0)
    wide = R.render(scene, p, R.CameraIntrinsics(h_fov=79.0, width=64, height=64))
    narrow = R.render(scene, p, R.CameraIntrinsics(h_fov=39.5, width=64, height=64))
    # center ray direction is unchanged by the FOV
    mid = np.mean([wide.depth[0, 31], wide.depth[0, 32]])
    mid_n = np.mean([narrow.depth[0, 31], narrow.depth[0, 32]])
    assert mid == pytest.approx(mid_n, abs=0.05)


def test_invalid_pose_rejected(scene, intr):
    with pytest.raises(R.RenderError):
        R.render(scene, wd.Pose(0.02, 0.02, 0.0), intr)


def test_pitch_shifts_horizon(scene, intr):
    p0 = R.render(scene, wd.Pose(2.1, 3.3, 10.0, 0.0), intr)
    up = R.render(scene, wd.Pose(2.1, 3.3, 10.0, 30.0), intr)
    down = R.render(scene, wd.Pose(2.1, 3.3, 10.0, -30.0), intr)
    assert not np.array_equal(p0.rgb, up.rgb)
    assert not np.array_equal(p0.rgb, down.rgb)
    # depth is a planar range measurement: pitch leaves it unchanged
    assert np.array_equal(p0.depth, up.depth)


def _exact_ray_oracle(grid, pose, col, intr):
    """Independent fine-step ray march (16 samples per cell)."""
    half = math.tan(math.radians(intr.h_fov) / 2.0)
    s = (1.0 - 2.0 * (col + 0.5) / intr.width) * half
    off = math.atan(s)
    ang = math.radians(pose.heading) + off
    dx, dy = math.cos(ang), math.sin(ang)
    step = grid.cell_size / 16.0
    t = 0.0
    limit = intr.max_depth / math.cos(off) + 0.5
    while t < limit:
        t += step
        cx, cy = pose.x + t * dx, pose.y + t * dy
        r, c = grid.cell_of(cx, cy)
        if not grid.in_bounds(r, c):
            return intr.max_depth
        if grid.occupancy[r, c]:
            return min(t * math.cos(off), intr.max_depth)
    return intr.max_depth


def test_depth_matches_exact_oracle_1000_samples(scene, intr):
    rng = np.random.default_rng(3)
    checked = 0
    while checked < 1000:
        x, y = rng.uniform(0.5, 7.5, 2)
        pose = wd.Pose(float(x), float(y), float(rng.uniform(0, 360)))
        if not scene.is_pose_valid(pose):
            continue
        frame = R.render(scene, pose, intr)
        for col in rng.integers(0, intr.width, size=5):
            oracle = _exact_ray_oracle(scene, pose, int(col), intr)
            assert frame.depth[0, int(col)] == pytest.approx(
                oracle, abs=scene.cell_size)
            checked += 1


def test_depth_range_invariant(scene, intr):
    rng = np.random.default_rng(4)
    for _ in range(20):
        x, y = rng.uniform(0.5, 7.5, 2)
        pose = wd.Pose(float(x), float(y), float(rng.uniform(0, 360)))
        if not scene.is_pose_valid(pose):
            continue
        frame = R.render(scene, pose, intr)
        assert (frame.depth > 0).all()
        assert (frame.depth <= intr.max_depth).all()


def object_room():
    """10 m room with one Mug instance 2 m ahead of (2, 5)."""
    occ = np.zeros((200, 200), dtype=bool)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True
    sem = occ.astype(np.uint16)
    cells = [(r, c) for r in range(98, 102) for c in range(80, 84)]
    for r, c in cells:
        occ[r, c] = True
        sem[r, c] = 2
    obj = wd.ObjectInstance("Mug", 2, frozenset(cells), (4.1, 5.0))
    return wd.GridMap(occ, sem, [obj], 0.05, "objroom", 0), obj


def test_visible_clear_line(intr):
    g, obj = object_room()
    assert R.visible(g, wd.Pose(2.0, 5.0, 0.0), intr, obj)


def test_visible_wrong_direction(intr):
    g, obj = object_room()
    assert not R.visible(g, wd.Pose(2.0, 5.0, 180.0), intr, obj)


def test_visible_occluded_by_wall(intr):
    g, obj = object_room()
    occ = g.occupancy.copy()
    sem = g.semantic.copy()
    occ[80:120, 70] = True
    sem[80:120, 70] = 1
    g2 = wd.GridMap(occ, sem, list(g.objects), 0.05, "objroom", 0)
    assert not R.visible(g2, wd.Pose(2.0, 5.0, 0.0), intr, g2.objects[0])


def test_visible_fov_boundary():
    g, obj = object_room()
    # place the agent so the bearing to the object center is 41 degrees
    bearing = 41.0
    dist = 2.2
    px = 4.1 - dist * math.cos(math.radians(bearing))
    py = 5.0 - dist * math.sin(math.radians(bearing))
    pose = wd.Pose(px, py, 0.0)
    wide = R.CameraIntrinsics(h_fov=79.0, width=64, height=64)
    narrow = R.CameraIntrinsics(h_fov=39.5, width=64, height=64)
    assert R.visible(g, pose, wide, obj)
    assert not R.visible(g, pose, narrow, obj)


def test_fov_monotonicity(scene, intr):
    rng = np.random.default_rng(9)
    narrow = R.CameraIntrinsics(h_fov=39.5, width=64, height=64)
    checked = 0
    for _ in range(200):
        x, y = rng.uniform(0.5, 7.5, 2)
        pose = wd.Pose(float(x), float(y), float(rng.uniform(0, 360)))
        if not scene.is_pose_valid(pose):
            continue
        for obj in scene.objects[:4]:
            if R.visible(scene, pose, narrow, obj):
                assert R.visible(scene, pose, intr, obj)
                checked += 1
    assert checked > 5


def test_ppm_roundtrip(scene, intr):
    frame = R.render(scene, wd.Pose(1.5, 1.5, 30.0), intr)
    data = R.write_ppm(frame.rgb)
    back = R.read_ppm(data)
    assert np.array_equal(back, frame.rgb)
    raw = R.write_depth_raw(frame.depth)
    assert len(raw) == 64 * 64 * 4
    assert np.frombuffer(raw, dtype="<f4").reshape(64, 64)[0, 0] == frame.depth[0, 0]


def test_intrinsics_validation():
    with pytest.raises(R.RenderError):
        R.CameraIntrinsics(h_fov=0.0)
    with pytest.raises(R.RenderError):
        R.CameraIntrinsics(width=8)

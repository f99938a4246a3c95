"""Deterministic 2.5D raycaster producing egocentric RGB-D frames.

One wall hit per column; pitch is a horizon shift; the depth channel is the
per-column perpendicular hit distance broadcast down the column (planar range
sensor semantics).  Lower-FOV operation is just a narrower `h_fov`.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np

# Wall apparent size: a wall column fills the frame when the perpendicular
# distance drops to WALL_SCALE meters.  The RGB planner's run-length estimator
# inverts this mapping, so keep them in sync.
WALL_SCALE = 1.0 / 3.0

FLOOR_BASE = np.array([95, 85, 70], dtype=np.float64)
CEIL_BASE = np.array([75, 78, 88], dtype=np.float64)

# Fixed 12-color palette for the object categories, in category order.
CATEGORY_COLORS = {
    "AlarmClock": (220, 60, 60),
    "Apple": (70, 200, 70),
    "BaseballBat": (200, 160, 90),
    "BasketBall": (240, 130, 40),
    "Bowl": (90, 160, 230),
    "GarbageCan": (70, 90, 100),
    "HousePlant": (40, 140, 60),
    "Laptop": (120, 120, 200),
    "Mug": (230, 90, 160),
    "SprayBottle": (100, 220, 200),
    "Television": (40, 40, 60),
    "Vase": (180, 100, 220),
}


class RenderError(Exception):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    h_fov: float = 79.0
    width: int = 224
    height: int = 224
    max_depth: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.h_fov < 180.0:
            raise RenderError(f"h_fov must be in (0, 180), got {self.h_fov}")
        if self.width < 16 or self.height < 16:
            raise RenderError("frame must be at least 16x16")


@dataclass
class Frame:
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) float32, meters

    def copy(self):
        return Frame(self.rgb.copy(), self.depth.copy())


def raycast(grid, x, y, dirx, diry, max_t):
    """Exact vectorized grid traversal.  Returns (t, hit_r, hit_c, side, hit)
    where t is the Euclidean distance along each unit direction to the first
    occupied cell, side is 0 for x-boundary crossings and 1 for y, and hit is
    False for rays that leave the grid or exceed max_t (t is then max_t).

    Casts to a short horizon first and re-casts only the rays that missed;
    indoors almost everything resolves in the near phase.
    """
    near = min(2.5, max_t)
    t, hit_r, hit_c, side, hit = _raycast_bulk(grid, x, y, dirx, diry, near)
    if near < max_t:
        miss = ~hit
        if miss.any():
            t2, r2, c2, s2, h2 = _raycast_bulk(grid, x, y, dirx[miss],
                                               diry[miss], max_t)
            t[miss] = t2
            hit_r[miss] = r2
            hit_c[miss] = c2
            side[miss] = s2
            hit[miss] = h2
    return t, hit_r, hit_c, side, hit


def _raycast_bulk(grid, x, y, dirx, diry, max_t):
    """All boundary-crossing parameters of both axes are enumerated and
    merge-sorted per ray; the cell occupied after each crossing is identified
    exactly by evaluating the ray at the midpoint of the following interval."""
    cs = grid.cell_size
    occ = grid.occupancy
    h, w = occ.shape
    n = dirx.shape[0]

    cr0 = int(math.floor(y / cs))
    cc0 = int(math.floor(x / cs))
    stepx = np.where(dirx >= 0, 1, -1)
    stepy = np.where(diry >= 0, 1, -1)
    with np.errstate(divide="ignore"):
        inv_dx = np.where(dirx != 0.0, 1.0 / np.where(dirx == 0.0, 1.0, dirx), np.inf)
        inv_dy = np.where(diry != 0.0, 1.0 / np.where(diry == 0.0, 1.0, diry), np.inf)
    tmax_x = np.where(dirx != 0.0, ((cc0 + (stepx > 0)) * cs - x) * inv_dx, np.inf)
    tmax_y = np.where(diry != 0.0, ((cr0 + (stepy > 0)) * cs - y) * inv_dy, np.inf)
    tdelta_x = np.abs(cs * inv_dx)
    tdelta_y = np.abs(cs * inv_dy)

    k = int(math.ceil(max_t / cs)) + 2
    ks = np.arange(k)
    tx = tmax_x[:, None] + ks[None, :] * tdelta_x[:, None]
    ty = tmax_y[:, None] + ks[None, :] * tdelta_y[:, None]
    ts = np.concatenate([tx, ty], axis=1)
    ts[ts > max_t] = np.inf
    order = np.argsort(ts, axis=1, kind="stable")
    ts = np.take_along_axis(ts, order, axis=1)
    sides = (order >= k).astype(np.int8)  # second block = y crossings

    nxt = np.empty_like(ts)
    nxt[:, :-1] = ts[:, 1:]
    nxt[:, -1] = np.inf
    mids = 0.5 * (ts + np.minimum(nxt, max_t))
    finite = np.isfinite(ts)
    mids[~finite] = 0.0  # placeholder; masked out below

    mx = x + mids * dirx[:, None]
    my = y + mids * diry[:, None]
    cc = np.floor(mx / cs).astype(np.int64)
    cr = np.floor(my / cs).astype(np.int64)
    inb = (cr >= 0) & (cr < h) & (cc >= 0) & (cc < w) & finite
    blocked = np.zeros(ts.shape, dtype=bool)
    blocked[inb] = occ[cr[inb], cc[inb]]
    stop = blocked | (finite & ~inb)  # leaving the grid also stops the ray

    rows = np.arange(n)
    stopped = stop.any(axis=1)
    first = np.argmax(stop, axis=1)
    hit = stopped & blocked[rows, first]
    t = np.where(hit, ts[rows, first], max_t)
    hit_r = np.where(hit, cr[rows, first], cr0)
    hit_c = np.where(hit, cc[rows, first], cc0)
    side = np.where(hit, sides[rows, first], 0).astype(np.int8)
    return t, hit_r, hit_c, side, hit


def _mix64(v):
    v = (v ^ (v >> np.uint64(31))) * np.uint64(0x7FB5D329728EA185)
    v = (v ^ (v >> np.uint64(27))) * np.uint64(0x81DADEF4BC2DD44D)
    return v ^ (v >> np.uint64(33))


def _wall_colors(scene_id, seg_r, seg_c):
    """Vectorized muted wall color hashed from (scene id, 4-cell segment)."""
    base = np.uint64(zlib.crc32(scene_id.encode()))
    with np.errstate(over="ignore"):
        h = _mix64(seg_r.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
                   ^ seg_c.astype(np.uint64) * np.uint64(0xBF58476D1CE4E5B9)
                   ^ base)
    out = np.empty((h.shape[0], 3))
    out[:, 0] = 100 + (h % np.uint64(80)).astype(np.float64)
    out[:, 1] = 100 + ((h >> np.uint64(8)) % np.uint64(80)).astype(np.float64)
    out[:, 2] = 100 + ((h >> np.uint64(16)) % np.uint64(80)).astype(np.float64)
    return out


def _semantic_palette(grid):
    """(max_id+1, 3) color table: index 0/1 flag wall-hash handling upstream,
    object ids map to the fixed category palette.  Cached per GridMap."""
    cache = getattr(grid, "_render_palette", None)
    if cache is not None:
        return cache
    max_id = max((o.instance_id for o in grid.objects), default=1)
    table = np.zeros((max_id + 1, 3))
    for o in grid.objects:
        table[o.instance_id] = CATEGORY_COLORS[o.category]
    grid._render_palette = table
    return table


def _column_colors(grid, hit_r, hit_c, side, hit):
    """Per-column base color from the hit cell's semantics (vectorized)."""
    sems = grid.semantic[hit_r, hit_c].astype(np.int64)
    colors = _wall_colors(grid.scene_id, hit_r // 4, hit_c // 4)
    palette = _semantic_palette(grid)
    is_obj = sems >= 2
    if is_obj.any():
        ids = np.minimum(sems[is_obj], palette.shape[0] - 1)
        obj_colors = palette[ids]
        known = obj_colors.sum(axis=1) > 0
        rows = np.nonzero(is_obj)[0][known]
        colors[rows] = obj_colors[known]
    tex = ((hit_r * 7919 + hit_c * 104729) % 13) - 6
    colors = colors + tex[:, None]
    colors[side == 0] *= 0.85
    colors[~hit] = (15.0, 15.0, 18.0)  # open sky beyond max depth
    return colors


def column_directions(heading_deg, h_fov, width):
    """Unit ray directions for each image column (planar projection, column 0
    at the left/counterclockwise edge) plus the angular offsets."""
    half_tan = math.tan(math.radians(h_fov) / 2.0)
    s = (1.0 - 2.0 * (np.arange(width) + 0.5) / width) * half_tan
    offsets = np.arctan(s)
    ang = math.radians(heading_deg) + offsets
    return np.cos(ang), np.sin(ang), offsets


def horizon_row(intrinsics, pitch):
    return intrinsics.height // 2 + int(round(pitch / 30.0)) * (intrinsics.height // 3)


def render(grid, pose, intrinsics=None):
    """Render the egocentric Frame for a pose.  Pure function of its inputs."""
    intrinsics = intrinsics or CameraIntrinsics()
    if not grid.is_pose_valid(pose):
        raise RenderError(f"invalid pose ({pose.x:.3f}, {pose.y:.3f})")
    H, W = intrinsics.height, intrinsics.width

    dirx, diry, offsets = column_directions(pose.heading, intrinsics.h_fov, W)
    max_t = intrinsics.max_depth / math.cos(math.radians(intrinsics.h_fov) / 2.0)
    t, hit_r, hit_c, side, hit = raycast(grid, pose.x, pose.y, dirx, diry, max_t)
    perp = np.minimum(t * np.cos(offsets), intrinsics.max_depth)
    perp = np.maximum(perp, 1e-3)

    colors = _column_colors(grid, hit_r, hit_c, side, hit)
    shade = 1.0 / (1.0 + 0.3 * perp)
    colors = colors * (0.35 + 0.65 * shade)[:, None]

    horizon = horizon_row(intrinsics, pose.pitch)
    half = np.round(0.5 * H * WALL_SCALE / perp).astype(np.int64)
    half = np.clip(half, 1, 4 * H)
    top = horizon - half
    bottom = horizon + half

    rows = np.arange(H)[:, None]
    wall_mask = (rows >= top[None, :]) & (rows <= bottom[None, :])

    below = np.clip((rows - horizon) / max(H - horizon, 1), 0.0, 1.0)
    above = np.clip((horizon - rows) / max(horizon, 1), 0.0, 1.0)
    floor_rgb = FLOOR_BASE[None, None, :] * (0.30 + 0.60 * below)[:, :, None]
    ceil_rgb = CEIL_BASE[None, None, :] * (0.30 + 0.60 * above)[:, :, None]
    bg = np.where(rows[:, :, None] > horizon, floor_rgb, ceil_rgb)
    bg = np.broadcast_to(bg, (H, W, 3))

    img = np.where(wall_mask[:, :, None], colors[None, :, :], bg)
    rgb = np.clip(np.rint(img), 0, 255).astype(np.uint8)

    depth = np.broadcast_to(perp.astype(np.float32)[None, :], (H, W)).copy()
    return Frame(rgb=np.ascontiguousarray(rgb), depth=depth)


def visible(grid, pose, intrinsics, instance):
    """True iff some footprint cell of the instance lies inside the horizontal
    FOV and the ray to it is not occluded by walls or other objects."""
    intrinsics = intrinsics or CameraIntrinsics()
    cs = grid.cell_size
    cells = sorted(instance.footprint)
    if not cells:
        return False
    centers = np.array([[(c + 0.5) * cs, (r + 0.5) * cs] for r, c in cells])
    dx = centers[:, 0] - pose.x
    dy = centers[:, 1] - pose.y
    dist = np.hypot(dx, dy)
    bearing = np.degrees(np.arctan2(dy, dx)) - pose.heading
    bearing = (bearing + 180.0) % 360.0 - 180.0
    in_fov = (np.abs(bearing) <= intrinsics.h_fov / 2.0) & (dist > 1e-9)
    if not in_fov.any():
        return False
    sel = np.nonzero(in_fov)[0]
    dirx = dx[sel] / dist[sel]
    diry = dy[sel] / dist[sel]
    t, hit_r, hit_c, side, hit = raycast(grid, pose.x, pose.y, dirx, diry,
                                         float(dist[sel].max()) + 2 * cs)
    ok = hit & (grid.semantic[hit_r, hit_c] == instance.instance_id)
    return bool(ok.any())


# -- frame dump formats ---------------------------------------------------------


def write_ppm(rgb):
    h, w = rgb.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + rgb.astype(np.uint8).tobytes()


def read_ppm(data):
    if not data.startswith(b"P6"):
        raise RenderError("not a binary PPM (P6) file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise RenderError(f"unsupported PPM maxval {maxval}")
    raw = data[pos:pos + w * h * 3]
    if len(raw) != w * h * 3:
        raise RenderError("truncated PPM payload")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).copy()


def write_depth_raw(depth):
    return np.asarray(depth, dtype="<f4").tobytes()

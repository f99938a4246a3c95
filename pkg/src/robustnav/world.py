"""Scenes as metric occupancy grids: procedural generation, a text file
format, and geodesic distance / shortest paths over the traversable space."""

from __future__ import annotations

import math
import string
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

CELL_SIZE = 0.05
AGENT_RADIUS = 0.18
# Extra clearance used by the planner beyond the raw agent radius.  Must stay
# above half a cell diagonal so diagonal grid moves never clip corners, and
# below (min_corridor - agent diameter)/2 - cell so a 0.5 m doorway stays open.
PLAN_MARGIN = 0.04

CATEGORIES = (
    "AlarmClock",
    "Apple",
    "BaseballBat",
    "BasketBall",
    "Bowl",
    "GarbageCan",
    "HousePlant",
    "Laptop",
    "Mug",
    "SprayBottle",
    "Television",
    "Vase",
)

UNREACHABLE = math.inf

_OBJECT_LETTERS = string.ascii_lowercase + string.ascii_uppercase

# Rough footprint side ranges (meters) per category, used by the generator.
_FOOTPRINT_M = {
    "AlarmClock": (0.10, 0.20),
    "Apple": (0.10, 0.15),
    "BaseballBat": (0.10, 0.45),
    "BasketBall": (0.20, 0.30),
    "Bowl": (0.15, 0.25),
    "GarbageCan": (0.30, 0.45),
    "HousePlant": (0.30, 0.55),
    "Laptop": (0.25, 0.35),
    "Mug": (0.10, 0.15),
    "SprayBottle": (0.10, 0.15),
    "Television": (0.40, 0.90),
    "Vase": (0.15, 0.25),
}


class SceneError(Exception):
    pass


class SceneGenerationError(SceneError):
    pass


class SceneFormatError(SceneError):
    """Raised on malformed scene files; carries the byte offset of the fault."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class ObjectInstance:
    category: str
    instance_id: int
    footprint: frozenset  # of (row, col) cells
    center: tuple  # (x, y) meters

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise SceneError(f"unknown object category {self.category!r}")


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float = 0.0  # degrees, normalized to [0, 360)
    pitch: float = 0.0  # degrees, one of {-30, 0, +30}

    def __post_init__(self):
        object.__setattr__(self, "heading", self.heading % 360.0)
        if self.pitch not in (-30.0, 0.0, 30.0):
            raise ValueError(f"pitch must be -30, 0 or +30, got {self.pitch}")


class GridMap:
    """Immutable occupancy + semantics of one scene.

    occupancy[r, c] is True for blocked cells; semantic is 0 for floor, 1 for
    wall and the instance id (>= 2) for object footprint cells.  World
    coordinates: x runs along columns, y along rows; cell (r, c) covers
    [c*cs, (c+1)*cs) x [r*cs, (r+1)*cs).
    """

    def __init__(self, occupancy, semantic, objects, cell_size, scene_id, seed,
                 agent_radius=AGENT_RADIUS):
        self.occupancy = np.ascontiguousarray(occupancy, dtype=bool)
        self.occupancy.setflags(write=False)
        self.semantic = np.ascontiguousarray(semantic, dtype=np.uint16)
        self.semantic.setflags(write=False)
        self.objects = tuple(objects)
        self.cell_size = float(cell_size)
        self.scene_id = str(scene_id)
        self.seed = int(seed)
        self.agent_radius = float(agent_radius)
        if self.cell_size <= 0:
            raise SceneError("cell_size must be positive")
        if self.occupancy.shape != self.semantic.shape:
            raise SceneError("occupancy/semantic shape mismatch")
        self._traversable = None
        self._graph = None
        self._field_cache = {}

    @property
    def height(self):
        return self.occupancy.shape[0]

    @property
    def width(self):
        return self.occupancy.shape[1]

    @property
    def extent(self):
        """(x_max, y_max) in meters."""
        return self.width * self.cell_size, self.height * self.cell_size

    # -- geometry helpers ---------------------------------------------------

    def cell_of(self, x, y):
        r = int(math.floor(y / self.cell_size))
        c = int(math.floor(x / self.cell_size))
        return r, c

    def center_of(self, r, c):
        return float((c + 0.5) * self.cell_size), float((r + 0.5) * self.cell_size)

    def in_bounds(self, r, c):
        return 0 <= r < self.height and 0 <= c < self.width

    def disc_collides(self, x, y, radius=None):
        """True if a disc of the given radius at (x, y) overlaps any occupied
        cell (exact disc-vs-cell-rectangle test)."""
        radius = self.agent_radius if radius is None else radius
        cs = self.cell_size
        r0 = max(int(math.floor((y - radius) / cs)), 0)
        r1 = min(int(math.floor((y + radius) / cs)), self.height - 1)
        c0 = max(int(math.floor((x - radius) / cs)), 0)
        c1 = min(int(math.floor((x + radius) / cs)), self.width - 1)
        if r0 > r1 or c0 > c1:
            return False
        occ = self.occupancy[r0:r1 + 1, c0:c1 + 1]
        if not occ.any():
            return False
        rows, cols = np.nonzero(occ)
        rows = rows + r0
        cols = cols + c0
        dx = np.maximum(np.abs(x - (cols + 0.5) * cs) - 0.5 * cs, 0.0)
        dy = np.maximum(np.abs(y - (rows + 0.5) * cs) - 0.5 * cs, 0.0)
        return bool(np.any(dx * dx + dy * dy < radius * radius))

    def is_pose_valid(self, pose):
        ex, ey = self.extent
        if not (0.0 <= pose.x < ex and 0.0 <= pose.y < ey):
            return False
        return not self.disc_collides(pose.x, pose.y)

    # -- traversability and distances ----------------------------------------

    @property
    def traversable(self):
        """Free cells whose center keeps (agent_radius + PLAN_MARGIN)
        clearance; the domain of the planning graph."""
        if self._traversable is None:
            radius = self.agent_radius + PLAN_MARGIN
            stencil = _disc_stencil(radius, self.cell_size)
            blocked = ndimage.binary_dilation(self.occupancy, structure=stencil)
            trav = ~blocked
            trav.setflags(write=False)
            self._traversable = trav
        return self._traversable

    def _graph_csr(self):
        if self._graph is None:
            self._graph = _build_grid_graph(self.traversable, self.cell_size)
        return self._graph

    def distance_field(self, sources):
        """Geodesic distance (meters) from the nearest source cell to every
        traversable cell, inf elsewhere.  `sources` is an iterable of (r, c)."""
        key = tuple(sorted(set(sources)))
        if not key:
            raise SceneError("distance_field needs at least one source cell")
        cached = self._field_cache.get(key)
        if cached is not None:
            return cached
        trav = self.traversable
        idx = [r * self.width + c for r, c in key if trav[r, c]]
        h, w = trav.shape
        if not idx:
            out = np.full((h, w), np.inf)
        else:
            dist = _csgraph_dijkstra(self._graph_csr(), directed=False,
                                     indices=idx, min_only=True)
            out = dist.reshape(h, w)
        out.setflags(write=False)
        if len(self._field_cache) >= 16:
            self._field_cache.pop(next(iter(self._field_cache)))
        self._field_cache[key] = out
        return out


def _disc_stencil(radius, cell_size):
    """Boolean stencil of cell offsets whose rectangle lies within `radius`
    of the center cell's midpoint."""
    n = int(math.ceil(radius / cell_size + 0.5))
    dr, dc = np.meshgrid(np.arange(-n, n + 1), np.arange(-n, n + 1),
                         indexing="ij")
    gx = np.maximum(np.abs(dc) - 0.5, 0.0) * cell_size
    gy = np.maximum(np.abs(dr) - 0.5, 0.0) * cell_size
    return gx * gx + gy * gy < radius * radius


_NEIGHBOR_OFFSETS = (
    (-1, 0), (1, 0), (0, -1), (0, 1),
    (-1, -1), (-1, 1), (1, -1), (1, 1),
)


def _build_grid_graph(trav, cell_size):
    h, w = trav.shape
    rows = []
    cols = []
    data = []
    idx = np.arange(h * w).reshape(h, w)
    for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
        cost = cell_size * math.hypot(dr, dc)
        a = trav[max(0, -dr):h - max(0, dr), max(0, -dc):w - max(0, dc)]
        b = trav[max(0, dr):h - max(0, -dr), max(0, dc):w - max(0, -dc)]
        ok = a & b
        src = idx[max(0, -dr):h - max(0, dr), max(0, -dc):w - max(0, dc)][ok]
        dst = idx[max(0, dr):h - max(0, -dr), max(0, dc):w - max(0, -dc)][ok]
        rows.append(src)
        cols.append(dst)
        data.append(np.full(src.shape, cost))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.concatenate(data)
    n = h * w
    return coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def geodesic_lookup(grid, dist_field, x, y):
    """Distance-field value at a continuous point.  Falls back to the nearest
    traversable neighbor (plus the Euclidean offset) when the containing cell
    sits off the planning mask, which can happen for valid poses hugging the
    clearance boundary."""
    r, c = grid.cell_of(x, y)
    if grid.in_bounds(r, c):
        v = dist_field[r, c]
        if np.isfinite(v):
            return float(v)
    best = math.inf
    for ring in (1, 2, 3):
        r0, r1 = max(r - ring, 0), min(r + ring, grid.height - 1)
        c0, c1 = max(c - ring, 0), min(c + ring, grid.width - 1)
        sub = dist_field[r0:r1 + 1, c0:c1 + 1]
        finite = np.isfinite(sub)
        if finite.any():
            rr, cc = np.nonzero(finite)
            cx = (cc + c0 + 0.5) * grid.cell_size
            cy = (rr + r0 + 0.5) * grid.cell_size
            cand = sub[finite] + np.hypot(cx - x, cy - y)
            best = float(cand.min())
            break
    return best


def geodesic_distance(grid, frm, to):
    """Geodesic distance in meters between two points, or UNREACHABLE (inf)
    when no traversable path connects them."""
    field = grid.distance_field([grid.cell_of(*to)])
    return geodesic_lookup(grid, field, *frm)


def shortest_path(grid, frm, to):
    """Waypoint list (cell centers, meters) realizing the geodesic distance,
    or None when unreachable.  Deterministic: ties broken by (edge cost,
    row-major index)."""
    goal_cell = grid.cell_of(*to)
    field = grid.distance_field([goal_cell])
    start = grid.cell_of(*frm)
    if not grid.in_bounds(*start) or not np.isfinite(field[start]):
        # snap to the nearest traversable cell in a small ring, as the lookup does
        best = None
        for ring in (1, 2, 3):
            cands = []
            for dr in range(-ring, ring + 1):
                for dc in range(-ring, ring + 1):
                    r, c = start[0] + dr, start[1] + dc
                    if grid.in_bounds(r, c) and np.isfinite(field[r, c]):
                        cx, cy = grid.center_of(r, c)
                        cands.append((math.hypot(cx - frm[0], cy - frm[1]), r, c))
            if cands:
                best = min(cands)[1:]
                break
        if best is None:
            return None
        start = best
    path = [grid.center_of(*start)]
    cur = start
    guard = grid.height * grid.width
    while field[cur] > 0.0 and guard > 0:
        guard -= 1
        r, c = cur
        best = None
        for dr, dc in _NEIGHBOR_OFFSETS:
            nr, nc = r + dr, c + dc
            if not grid.in_bounds(nr, nc):
                continue
            v = field[nr, nc]
            if not np.isfinite(v):
                continue
            cost = grid.cell_size * math.hypot(dr, dc)
            key = (v + cost, cost, nr * grid.width + nc)
            if best is None or key < best[0]:
                best = (key, (nr, nc))
        if best is None:
            return None
        cur = best[1]
        path.append(grid.center_of(*cur))
    return path


def path_length(path):
    return float(sum(math.hypot(b[0] - a[0], b[1] - a[1])
                     for a, b in zip(path, path[1:])))


# -- procedural generation ----------------------------------------------------


@dataclass
class SceneParams:
    width_m: float = 8.0
    height_m: float = 8.0
    cell_size: float = CELL_SIZE
    rooms: tuple = (2, 4)
    door_width_m: float = 0.8
    min_room_m: float = 2.0
    objects_per_category: int = 1
    categories: tuple = CATEGORIES
    max_attempts: int = 25

    def validate(self):
        if self.cell_size <= 0:
            raise SceneGenerationError("cell_size must be positive")
        if self.door_width_m < 3 * AGENT_RADIUS:
            raise SceneGenerationError(
                f"door/corridor width {self.door_width_m} below minimum "
                f"{3 * AGENT_RADIUS:.2f} m")
        w = int(round(self.width_m / self.cell_size))
        h = int(round(self.height_m / self.cell_size))
        if w < 20 or h < 20:
            raise SceneGenerationError("scene must be at least 20x20 cells")
        if self.rooms[0] < 1 or self.rooms[1] < self.rooms[0]:
            raise SceneGenerationError(f"bad room count range {self.rooms}")


def generate_scene(seed, params=None):
    """Deterministically generate a closed, connected scene with the requested
    object instances.  Raises SceneGenerationError after bounded retries."""
    params = params or SceneParams()
    params.validate()
    for attempt in range(params.max_attempts):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), attempt]))
        grid = _try_generate(rng, seed, params)
        if grid is not None:
            return grid
    raise SceneGenerationError(
        f"could not generate a valid scene for seed {seed} "
        f"after {params.max_attempts} attempts")


def _try_generate(rng, seed, params):
    cs = params.cell_size
    w = int(round(params.width_m / cs))
    h = int(round(params.height_m / cs))
    occ = np.zeros((h, w), dtype=bool)
    sem = np.zeros((h, w), dtype=np.uint16)
    occ[0, :] = occ[-1, :] = occ[:, 0] = occ[:, -1] = True

    door_cells = np.zeros((h, w), dtype=bool)
    min_room = max(int(round(params.min_room_m / cs)), 4)
    door_w = max(int(round(params.door_width_m / cs)), 2)

    regions = [(1, 1, h - 1, w - 1)]
    target_rooms = int(rng.integers(params.rooms[0], params.rooms[1] + 1))
    while len(regions) < target_rooms:
        splittable = [i for i, (r0, c0, r1, c1) in enumerate(regions)
                      if max(r1 - r0, c1 - c0) >= 2 * min_room + 1]
        if not splittable:
            break
        i = splittable[int(rng.integers(len(splittable)))]
        r0, c0, r1, c1 = regions.pop(i)
        vertical = (c1 - c0) >= (r1 - r0)
        if vertical:
            cut = int(rng.integers(c0 + min_room, c1 - min_room))
            occ[r0:r1, cut] = True
            sem[r0:r1, cut] = 1
            d0 = int(rng.integers(r0, r1 - door_w + 1))
            occ[d0:d0 + door_w, cut] = False
            sem[d0:d0 + door_w, cut] = 0
            door_cells[d0:d0 + door_w, cut] = True
            regions.append((r0, c0, r1, cut))
            regions.append((r0, cut + 1, r1, c1))
        else:
            cut = int(rng.integers(r0 + min_room, r1 - min_room))
            occ[cut, c0:c1] = True
            sem[cut, c0:c1] = 1
            d0 = int(rng.integers(c0, c1 - door_w + 1))
            occ[cut, d0:d0 + door_w] = False
            sem[cut, d0:d0 + door_w] = 0
            door_cells[cut, d0:d0 + door_w] = True
            regions.append((r0, c0, cut, c1))
            regions.append((cut + 1, c0, r1, c1))
    sem[occ & (sem == 0)] = 1

    # keep furniture away from door lines and walls
    protect = ndimage.binary_dilation(
        door_cells, structure=_disc_stencil(2 * AGENT_RADIUS + 0.15, cs))
    objects = []
    next_id = 2
    for category in params.categories:
        lo, hi = _FOOTPRINT_M[category]
        for _ in range(params.objects_per_category):
            placed = False
            for _ in range(200):
                fw = max(int(round(rng.uniform(lo, hi) / cs)), 2)
                fh = max(int(round(rng.uniform(lo, hi) / cs)), 2)
                reg = regions[int(rng.integers(len(regions)))]
                r0, c0, r1, c1 = reg
                if r1 - r0 - fh < 4 or c1 - c0 - fw < 4:
                    continue
                rr = int(rng.integers(r0 + 2, r1 - fh - 1))
                cc = int(rng.integers(c0 + 2, c1 - fw - 1))
                patch_occ = occ[rr - 1:rr + fh + 1, cc - 1:cc + fw + 1]
                if patch_occ.any() or protect[rr:rr + fh, cc:cc + fw].any():
                    continue
                occ[rr:rr + fh, cc:cc + fw] = True
                sem[rr:rr + fh, cc:cc + fw] = next_id
                footprint = frozenset(
                    (r, c) for r in range(rr, rr + fh)
                    for c in range(cc, cc + fw))
                center = ((cc + fw / 2.0) * cs, (rr + fh / 2.0) * cs)
                objects.append(ObjectInstance(category, next_id, footprint, center))
                next_id += 1
                placed = True
                break
            if not placed:
                return None

    grid = GridMap(occ, sem, objects, cs, f"gen-{seed}", seed)
    free = ~occ
    labels, n_labels = ndimage.label(free, structure=np.ones((3, 3)))
    if n_labels != 1:
        return None
    trav = grid.traversable
    tlabels, tn = ndimage.label(trav, structure=np.ones((3, 3)))
    if tn != 1:
        return None
    # every object must be approachable within the 1 m success radius
    reach = ndimage.binary_dilation(trav, structure=_disc_stencil(1.0, cs))
    for obj in objects:
        if not any(reach[r, c] for r, c in obj.footprint):
            return None
    return grid


# -- scene file format ----------------------------------------------------------

SCENE_MAGIC = "robustnav-scene"
SCENE_VERSION = 1


def save_scene(grid):
    """Serialize a GridMap to the versioned textual scene format (bytes)."""
    if len(grid.objects) > len(_OBJECT_LETTERS):
        raise SceneError("too many object instances for the symbol alphabet")
    header = (f"{SCENE_MAGIC} version={SCENE_VERSION} scene_id={grid.scene_id} "
              f"cell_size={grid.cell_size!r} width={grid.width} "
              f"height={grid.height} seed={grid.seed}")
    id_to_letter = {o.instance_id: _OBJECT_LETTERS[o.instance_id - 2]
                    for o in grid.objects}
    rows = []
    for r in range(grid.height):
        out = []
        for c in range(grid.width):
            s = int(grid.semantic[r, c])
            if s >= 2:
                out.append(id_to_letter.get(s, "#"))
            elif grid.occupancy[r, c]:
                out.append("#")
            else:
                out.append(".")
        rows.append("".join(out))
    lines = [header] + rows
    for o in sorted(grid.objects, key=lambda o: o.instance_id):
        lines.append(f"object {o.instance_id} {o.category} "
                     f"{o.center[0]!r} {o.center[1]!r}")
    return ("\n".join(lines) + "\n").encode("ascii")


def _parse_kv(tokens, offset):
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise SceneFormatError(f"malformed header token {tok!r}", offset)
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def load_scene(data):
    """Parse scene-format bytes back into a GridMap.  Raises SceneFormatError
    with a byte offset on malformed input."""
    if isinstance(data, str):
        data = data.encode("ascii")
    text = data.decode("ascii", errors="replace")
    lines = text.split("\n")
    offsets = []
    pos = 0
    for ln in lines:
        offsets.append(pos)
        pos += len(ln.encode("ascii", errors="replace")) + 1

    if not lines or not lines[0].strip():
        raise SceneFormatError("missing header line", 0)
    head = lines[0].split()
    if head[0] != SCENE_MAGIC:
        raise SceneFormatError(f"bad magic {head[0]!r}", 0)
    kv = _parse_kv(head[1:], 0)
    for req in ("version", "scene_id", "cell_size", "width", "height", "seed"):
        if req not in kv:
            raise SceneFormatError(f"header missing field {req!r}", 0)
    if kv["version"] != str(SCENE_VERSION):
        raise SceneFormatError(f"unknown scene format version {kv['version']}", 0)
    try:
        width = int(kv["width"])
        height = int(kv["height"])
        cell_size = float(kv["cell_size"])
        seed = int(kv["seed"])
    except ValueError as e:
        raise SceneFormatError(f"bad header value: {e}", 0) from None

    if len(lines) < 1 + height:
        raise SceneFormatError(
            f"grid section truncated: expected {height} rows, "
            f"got {max(len(lines) - 1, 0)} usable lines", offsets[-1])
    occ = np.zeros((height, width), dtype=bool)
    sem = np.zeros((height, width), dtype=np.uint16)
    letter_cells = {}
    for r in range(height):
        row = lines[1 + r]
        off = offsets[1 + r]
        if len(row) != width:
            raise SceneFormatError(
                f"grid row {r} has {len(row)} symbols, expected {width}", off)
        for c, ch in enumerate(row):
            if ch == ".":
                continue
            if ch == "#":
                occ[r, c] = True
                sem[r, c] = 1
            elif ch in _OBJECT_LETTERS:
                inst = 2 + _OBJECT_LETTERS.index(ch)
                occ[r, c] = True
                sem[r, c] = inst
                letter_cells.setdefault(inst, set()).add((r, c))
            else:
                raise SceneFormatError(f"unknown grid symbol {ch!r}", off + c)

    objects = []
    seen_ids = set()
    for i in range(1 + height, len(lines)):
        ln = lines[i]
        if not ln.strip():
            continue
        off = offsets[i]
        parts = ln.split()
        if parts[0] != "object" or len(parts) != 5:
            raise SceneFormatError(f"malformed object record {ln!r}", off)
        try:
            inst = int(parts[1])
            cx = float(parts[3])
            cy = float(parts[4])
        except ValueError as e:
            raise SceneFormatError(f"bad object record value: {e}", off) from None
        category = parts[2]
        if category not in CATEGORIES:
            raise SceneFormatError(f"unknown category {category!r}", off)
        if inst in seen_ids:
            raise SceneFormatError(f"duplicate instance id {inst}", off)
        seen_ids.add(inst)
        cells = letter_cells.pop(inst, None)
        if cells is None:
            raise SceneFormatError(
                f"object record {inst} has no footprint cells in the grid", off)
        objects.append(ObjectInstance(category, inst, frozenset(cells), (cx, cy)))
    if letter_cells:
        missing = sorted(letter_cells)
        raise SceneFormatError(
            f"grid references instance ids {missing} with no object record "
            f"(object record section truncated?)", offsets[-1])
    return GridMap(occ, sem, objects, cell_size, kv["scene_id"], seed)


def maps_equal(a, b):
    return (a.scene_id == b.scene_id and a.seed == b.seed
            and a.cell_size == b.cell_size
            and np.array_equal(a.occupancy, b.occupancy)
            and np.array_equal(a.semantic, b.semantic)
            and sorted(a.objects, key=lambda o: o.instance_id)
            == sorted(b.objects, key=lambda o: o.instance_id))

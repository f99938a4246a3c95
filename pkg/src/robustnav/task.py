"""PointNav / ObjectNav episode semantics: reset/step loop, sensors, success
predicates, reward shaping, suite generation with difficulty bins, and the
unsupervised calibration phase."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from . import dynamics as dyn
from . import render as rndr
from . import viscorrupt as vc
from . import world as wd

POINTNAV = "pointnav"
OBJECTNAV = "objectnav"

POINTNAV_RADIUS = 0.2
OBJECTNAV_RADIUS = 1.0
TERMINAL_REWARD = 10.0
SLACK_PENALTY = -0.01
MAX_STEPS = 300
DEFAULT_CALIBRATION_BUDGET = 166_000

# shortest-path-length difficulty bins, meters
BINS = {
    POINTNAV: (("easy", 0.00, 2.28), ("medium", 2.29, 4.39), ("hard", 4.40, 9.61)),
    OBJECTNAV: (("easy", 0.00, 1.50), ("medium", 1.51, 3.78), ("hard", 3.79, 9.00)),
}
MIN_PATH_LENGTH = 0.5  # reject trivial spawns (also keeps l > 0 for SPL)
SPAWN_CLEARANCE = 0.10  # start/goal clearance margin beyond the agent radius

_SALT_SUITE = 0x5017E
_SALT_EPISODE = 0xE9150DE


class TaskError(Exception):
    pass


class EpisodeStateError(TaskError):
    pass


@dataclass(frozen=True)
class EpisodeSpec:
    episode_id: str
    scene_id: str
    episode_seed: int
    task: str
    start: wd.Pose
    goal: tuple | None = None  # pointnav target point (x, y)
    category: str | None = None  # objectnav target category
    difficulty: str = "easy"
    length: float = 0.0  # shortest path length l, meters
    max_steps: int = MAX_STEPS

    def __post_init__(self):
        if self.task not in (POINTNAV, OBJECTNAV):
            raise TaskError(f"unknown task {self.task!r}")
        if self.task == POINTNAV and self.goal is None:
            raise TaskError("pointnav spec needs a goal point")
        if self.task == OBJECTNAV and self.category not in wd.CATEGORIES:
            raise TaskError(f"objectnav spec needs a valid category, got {self.category!r}")


@dataclass(frozen=True)
class Observation:
    rgb: np.ndarray
    depth: np.ndarray | None
    gps_compass: tuple | None
    target: str | None
    step_index: int


@dataclass(frozen=True)
class StepResult:
    obs: Observation
    reward: float
    done: bool
    success: bool
    info: dict


@dataclass(frozen=True)
class EnvConfig:
    sensor: str = "rgbd"  # "rgb" | "rgbd"
    intrinsics: rndr.CameraIntrinsics = field(default_factory=rndr.CameraIntrinsics)
    stack: vc.CorruptionStack = field(default_factory=vc.CorruptionStack)
    dyn_corruption: dyn.DynCorruption = field(default_factory=dyn.DynCorruption)
    actuation: dyn.ActuationModel = field(default_factory=dyn.ActuationModel)
    terminal_reward: float = TERMINAL_REWARD
    slack: float = SLACK_PENALTY

    def __post_init__(self):
        if self.sensor not in ("rgb", "rgbd"):
            raise TaskError(f"sensor must be rgb or rgbd, got {self.sensor!r}")

    @property
    def render_intrinsics(self):
        if self.stack.has_lower_fov:
            return replace(self.intrinsics, h_fov=self.intrinsics.h_fov / 2.0)
        return self.intrinsics


def relative_goal(pose, goal):
    """GPS+Compass reading: range in meters, bearing in degrees in [-180, 180)
    (positive counterclockwise), recomputed from the true pose (perfect
    localization)."""
    dx = goal[0] - pose.x
    dy = goal[1] - pose.y
    r = math.hypot(dx, dy)
    theta = (math.degrees(math.atan2(dy, dx)) - pose.heading + 180.0) % 360.0 - 180.0
    return r, theta


def success_zone_cells(grid, category):
    """Traversable cells whose center lies within the ObjectNav success radius
    of some footprint cell of an instance of `category`."""
    mask = np.zeros_like(grid.occupancy)
    found = False
    for obj in grid.objects:
        if obj.category != category:
            continue
        found = True
        for r, c in obj.footprint:
            mask[r, c] = True
    if not found:
        return []
    stencil = wd._disc_stencil(OBJECTNAV_RADIUS + 0.5 * grid.cell_size, grid.cell_size)
    zone = ndimage.binary_dilation(mask, structure=stencil) & grid.traversable
    return [tuple(rc) for rc in np.argwhere(zone)]


class NavEnv:
    """Single-episode-at-a-time environment over one scene.  Not shareable
    across workers; rendering and corruption are pure so resets are exact."""

    def __init__(self, grid, config=None):
        self.grid = grid
        self.config = config or EnvConfig()
        self._spec = None
        self._active = False

    # -- episode lifecycle -------------------------------------------------

    def reset(self, spec):
        if spec.scene_id != self.grid.scene_id:
            raise TaskError(f"spec scene {spec.scene_id!r} does not match "
                            f"loaded scene {self.grid.scene_id!r}")
        if not self.grid.is_pose_valid(spec.start):
            raise TaskError(f"invalid start pose in spec {spec.episode_id}")
        self._spec = spec
        self._pose = spec.start
        intr = self.config.render_intrinsics
        self._bound_stack = vc.bind_episode(self.config.stack, spec.episode_seed,
                                            intr.height, intr.width)
        self._ep_dyn = dyn.bind_episode_dynamics(self.config.dyn_corruption,
                                                 spec.episode_seed)
        self._rng = np.random.default_rng(
            np.random.SeedSequence([int(spec.episode_seed), _SALT_EPISODE]))
        if spec.task == POINTNAV:
            sources = [self.grid.cell_of(*spec.goal)]
            self._instances = ()
        else:
            sources = success_zone_cells(self.grid, spec.category)
            if not sources:
                raise TaskError(f"scene has no reachable {spec.category} zone")
            self._instances = tuple(o for o in self.grid.objects
                                    if o.category == spec.category)
            self._inst_centers = [
                np.array([self.grid.center_of(r, c) for r, c in sorted(o.footprint)])
                for o in self._instances]
        self._field = self.grid.distance_field(sources)
        self._geo = wd.geodesic_lookup(self.grid, self._field, spec.start.x, spec.start.y)
        self._steps = 0
        self._active = True
        self._trace = {
            "poses": [(spec.start.x, spec.start.y, spec.start.heading, spec.start.pitch)],
            "actions": [], "failed": [], "in_range": [], "geo": [], "euclid": [],
        }
        self._start_euclid = float(self.euclid_to_goal(spec.start))
        self._end_invoked = False
        self._end_in_range = False
        self._success = False
        self._last_obs = self._observe(0)
        return self._last_obs

    def _observe(self, step_index):
        intr = self.config.render_intrinsics
        frame = rndr.render(self.grid, self._pose, intr)
        rgb = self._bound_stack.apply(frame.rgb)
        depth = frame.depth if self.config.sensor == "rgbd" else None
        if self._spec.task == POINTNAV:
            gps = relative_goal(self._pose, self._spec.goal)
            target = None
        else:
            gps = None
            target = self._spec.category
        return Observation(rgb=rgb, depth=depth, gps_compass=gps,
                           target=target, step_index=step_index)

    @property
    def true_pose(self):
        return self._pose

    @property
    def spec(self):
        return self._spec

    @property
    def active(self):
        return self._active

    @property
    def goal_field(self):
        return self._field

    @property
    def geodesic_to_goal(self):
        return self._geo

    def goal_in_range(self, pose=None):
        pose = pose or self._pose
        if self._spec.task == POINTNAV:
            return relative_goal(pose, self._spec.goal)[0] <= POINTNAV_RADIUS
        intr = self.config.render_intrinsics
        for obj, centers in zip(self._instances, self._inst_centers):
            d = float(np.min(np.hypot(centers[:, 0] - pose.x, centers[:, 1] - pose.y)))
            if d <= OBJECTNAV_RADIUS and rndr.visible(self.grid, pose, intr, obj):
                return True
        return False

    def euclid_to_goal(self, pose=None):
        pose = pose or self._pose
        if self._spec.task == POINTNAV:
            return relative_goal(pose, self._spec.goal)[0]
        best = math.inf
        for centers in self._inst_centers:
            d = float(np.min(np.hypot(centers[:, 0] - pose.x, centers[:, 1] - pose.y)))
            best = min(best, d)
        return best

    def step(self, action):
        if not self._active:
            raise EpisodeStateError("step() after episode end")
        spec = self._spec
        if action == dyn.END:
            self._steps += 1
            in_range = self.goal_in_range()
            self._end_invoked = True
            self._end_in_range = in_range
            self._success = in_range
            self._active = False
            reward = self.config.terminal_reward * (1.0 if in_range else 0.0)
            self._append_trace(dyn.END, False, in_range)
            return StepResult(obs=self._last_obs, reward=reward, done=True,
                              success=self._success,
                              info={"failed_action": False, "in_range": in_range,
                                    "geodesic_to_goal": self._geo})
        if action in (dyn.LOOK_UP, dyn.LOOK_DOWN) and spec.task == POINTNAV:
            raise TaskError(f"{action} is not available in pointnav")
        if action not in dyn.MOTION_ACTIONS:
            raise TaskError(f"unknown action {action!r}")

        outcome = dyn.apply_action(self.grid, self._pose, action,
                                   self.config.actuation, self._ep_dyn, self._rng)
        self._pose = outcome.new_pose
        self._steps += 1
        new_geo = wd.geodesic_lookup(self.grid, self._field, self._pose.x, self._pose.y)
        reward = -(new_geo - self._geo) + self.config.slack
        self._geo = new_geo
        in_range = self.goal_in_range()
        self._append_trace(action, outcome.failed, in_range)
        done = self._steps >= spec.max_steps
        if done:
            # forced termination: episode over, no terminal reward
            self._active = False
        self._last_obs = self._observe(self._steps)
        return StepResult(obs=self._last_obs, reward=reward, done=done,
                          success=False,
                          info={"failed_action": outcome.failed, "in_range": in_range,
                                "geodesic_to_goal": new_geo})

    def _append_trace(self, action, failed, in_range):
        t = self._trace
        t["poses"].append((self._pose.x, self._pose.y, self._pose.heading,
                           self._pose.pitch))
        t["actions"].append(action)
        t["failed"].append(bool(failed))
        t["in_range"].append(bool(in_range))
        t["geo"].append(float(self._geo))
        t["euclid"].append(float(self.euclid_to_goal()))

    def abort(self):
        """Close an episode from outside (protocol errors, calibration)."""
        self._active = False
        self._success = False

    def trace_data(self):
        if self._active:
            raise EpisodeStateError("episode still active")
        return {
            "spec": self._spec,
            "success": self._success,
            "end_invoked": self._end_invoked,
            "end_in_range": self._end_in_range,
            "steps": self._steps,
            "start_euclid": self._start_euclid,
            **self._trace,
        }


def goal_in_range(task, pose, grid, goal=None, category=None, intrinsics=None):
    """Standalone success predicate (also the per-step in-range flag)."""
    if task == POINTNAV:
        return relative_goal(pose, goal)[0] <= POINTNAV_RADIUS
    intrinsics = intrinsics or rndr.CameraIntrinsics()
    for obj in grid.objects:
        if obj.category != category:
            continue
        centers = np.array([grid.center_of(r, c) for r, c in sorted(obj.footprint)])
        d = float(np.min(np.hypot(centers[:, 0] - pose.x, centers[:, 1] - pose.y)))
        if d <= OBJECTNAV_RADIUS and rndr.visible(grid, pose, intrinsics, obj):
            return True
    return False


# -- suite generation --------------------------------------------------------


def _spawn_cells(grid):
    stencil = wd._disc_stencil(grid.agent_radius + wd.PLAN_MARGIN + SPAWN_CLEARANCE,
                               grid.cell_size)
    ok = ~ndimage.binary_dilation(grid.occupancy, structure=stencil)
    ok &= grid.traversable
    return np.argwhere(ok)


def bin_of(task, length):
    for name, lo, hi in BINS[task]:
        if lo <= length <= hi:
            return name
    return None


def generate_suite(scenes, task_kind, n_episodes, suite_seed):
    """Deterministically sample an episode suite with floor(n/3) episodes per
    difficulty bin (remainder to easy).  Raises TaskError naming the bin when a
    scene set cannot produce it."""
    if n_episodes < 3:
        raise TaskError("suite needs at least 3 episodes")
    if task_kind not in BINS:
        raise TaskError(f"unknown task {task_kind!r}")
    rng = np.random.default_rng(np.random.SeedSequence([int(suite_seed), _SALT_SUITE]))
    base = n_episodes // 3
    quota = {"easy": n_episodes - 2 * base, "medium": base, "hard": base}
    scene_list = list(scenes)
    spawns = {g.scene_id: _spawn_cells(g) for g in scene_list}
    zones = {}
    if task_kind == OBJECTNAV:
        for g in scene_list:
            cats = sorted({o.category for o in g.objects})
            zones[g.scene_id] = {c: success_zone_cells(g, c) for c in cats}
            zones[g.scene_id] = {c: v for c, v in zones[g.scene_id].items() if v}

    specs = []
    attempts = 0
    max_attempts = 400 * n_episodes
    while any(quota.values()):
        if attempts >= max_attempts:
            missing = sorted(k for k, v in quota.items() if v > 0)
            raise TaskError(
                f"scenes too small to fill difficulty bin(s) {missing} "
                f"after {attempts} attempts")
        attempts += 1
        grid = scene_list[int(rng.integers(len(scene_list)))]
        cells = spawns[grid.scene_id]
        if len(cells) == 0:
            continue
        sr, sc = cells[int(rng.integers(len(cells)))]
        start_xy = grid.center_of(sr, sc)
        field = grid.distance_field([(int(sr), int(sc))])
        heading = float(np.round(rng.uniform(0.0, 360.0), 1)) % 360.0
        start = wd.Pose(start_xy[0], start_xy[1], heading, 0.0)

        wanted = [k for k in ("hard", "medium", "easy") if quota[k] > 0]
        if task_kind == POINTNAV:
            fvals = field[cells[:, 0], cells[:, 1]]
            made = False
            for want in wanted:
                _, lo, hi = next(b for b in BINS[task_kind] if b[0] == want)
                lo = max(lo, MIN_PATH_LENGTH)
                ok = np.isfinite(fvals) & (fvals >= lo) & (fvals <= hi)
                ok &= ~((cells[:, 0] == sr) & (cells[:, 1] == sc))
                idx = np.nonzero(ok)[0]
                if idx.size == 0:
                    continue
                pick = idx[int(rng.integers(idx.size))]
                gr, gc = cells[pick]
                goal = grid.center_of(gr, gc)
                length = float(fvals[pick])
                specs.append(_make_spec(suite_seed, len(specs), grid, task_kind,
                                        start, goal=goal, difficulty=want,
                                        length=length))
                quota[want] -= 1
                made = True
                break
            if made:
                continue
        else:
            scene_zones = zones[grid.scene_id]
            if not scene_zones:
                continue
            lengths = {}
            for cat, zcells in scene_zones.items():
                arr = np.array(zcells)
                vals = field[arr[:, 0], arr[:, 1]]
                finite = vals[np.isfinite(vals)]
                if finite.size:
                    lengths[cat] = float(finite.min())
            made = False
            for want in wanted:
                _, lo, hi = next(b for b in BINS[task_kind] if b[0] == want)
                lo = max(lo, MIN_PATH_LENGTH)
                cands = sorted(c for c, lv in lengths.items() if lo <= lv <= hi)
                if not cands:
                    continue
                cat = cands[int(rng.integers(len(cands)))]
                specs.append(_make_spec(suite_seed, len(specs), grid, task_kind,
                                        start, category=cat, difficulty=want,
                                        length=lengths[cat]))
                quota[want] -= 1
                made = True
                break
            if made:
                continue
    return specs


def _make_spec(suite_seed, index, grid, task_kind, start, goal=None,
               category=None, difficulty="easy", length=0.0):
    seed = int(np.random.SeedSequence(
        [int(suite_seed), index]).generate_state(1, np.uint64)[0])
    return EpisodeSpec(
        episode_id=f"ep{index:05d}", scene_id=grid.scene_id, episode_seed=seed,
        task=task_kind, start=start, goal=goal, category=category,
        difficulty=difficulty, length=length)


# -- suite file format ---------------------------------------------------------


def save_suite(specs):
    lines = []
    for s in specs:
        goal_spec = (f"point:{s.goal[0]!r},{s.goal[1]!r}" if s.task == POINTNAV
                     else f"object:{s.category}")
        lines.append(" ".join([
            s.episode_id, s.scene_id, str(s.episode_seed), s.task,
            repr(s.start.x), repr(s.start.y), repr(s.start.heading),
            goal_spec, s.difficulty, repr(s.length)]))
    return ("\n".join(lines) + ("\n" if lines else "")).encode("ascii")


def load_suite(data):
    if isinstance(data, bytes):
        data = data.decode("ascii")
    specs = []
    for ln_no, ln in enumerate(data.splitlines()):
        if not ln.strip():
            continue
        parts = ln.split()
        if len(parts) != 10:
            raise TaskError(f"suite line {ln_no}: expected 10 fields, got {len(parts)}")
        (eid, scene_id, seed, task_kind, sx, sy, heading, goal_spec,
         difficulty, length) = parts
        goal = None
        category = None
        if goal_spec.startswith("point:"):
            gx, gy = goal_spec[len("point:"):].split(",")
            goal = (float(gx), float(gy))
        elif goal_spec.startswith("object:"):
            category = goal_spec[len("object:"):]
        else:
            raise TaskError(f"suite line {ln_no}: bad goal spec {goal_spec!r}")
        specs.append(EpisodeSpec(
            episode_id=eid, scene_id=scene_id, episode_seed=int(seed),
            task=task_kind, start=wd.Pose(float(sx), float(sy), float(heading), 0.0),
            goal=goal, category=category, difficulty=difficulty,
            length=float(length)))
    return specs


# -- calibration phase -----------------------------------------------------------


def calibration_spec(base):
    """Decorrelated per-calibration variant of an evaluation spec."""
    cal_seed = int(np.random.SeedSequence(
        [base.episode_seed, 0xCA11B]).generate_state(1, np.uint64)[0])
    return replace(base, episode_seed=cal_seed,
                   episode_id=base.episode_id + "-cal")


def calibration_phase(env, agent, specs, budget_steps):
    """Drive the agent's `adapt` hook for exactly `budget_steps` unsupervised
    interactions in the corrupted target.  No reward or success signal is
    exposed; episodes cycle through decorrelated variants of the given specs.
    `env` may be a NavEnv or a callable mapping a spec to its scene's env."""
    if budget_steps <= 0:
        return
    env_for = env if callable(env) else (lambda spec: env)
    done = 0
    i = 0
    while done < budget_steps:
        cal = calibration_spec(specs[i % len(specs)])
        i += 1
        ep_env = env_for(cal)
        obs = ep_env.reset(cal)
        reset_hook = getattr(agent, "reset", None)
        if reset_hook is not None:
            reset_hook(cal, obs, env=ep_env)
        while done < budget_steps:
            action = agent.adapt(obs)
            done += 1
            if action == dyn.END:
                ep_env.step(action)
                break
            res = ep_env.step(action)
            obs = res.obs
            if res.done:
                break
        if ep_env.active:
            ep_env.abort()

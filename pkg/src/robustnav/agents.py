"""Built-in scripted agents: a privileged shortest-path oracle, greedy
depth/RGB planners, and a seeded random baseline.

The depth rule is a pure function of integer-millimeter depth so that wire
clients in any language can reproduce its decisions bit-exactly (see
docs/protocol.md for the reference arithmetic).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import uniform_filter

from . import dynamics as dyn
from . import render as rndr
from . import world as wd

GPS_END_RANGE = 0.18
BEARING_TOL = 20.0
CLEAR_AHEAD_MM = 450  # move only if the center window is deeper than 0.45 m

ORACLE_ENDGAME_DIST = 0.43
ORACLE_END_DIST = 0.075

_SALT_AGENT = 0xA6E57


class AgentError(Exception):
    pass


class Agent:
    """Agent contract: reset at episode start, act per observation, adapt for
    unsupervised calibration (default: same policy, no learning)."""

    privileged = False

    def reset(self, spec, obs, env=None):
        pass

    def act(self, obs):
        raise NotImplementedError

    def adapt(self, obs):
        return self.act(obs)


# -- shared pure policy pieces -------------------------------------------------


def depth_row_mm(depth_row):
    """Quantize one depth row (meters, float32) to integer millimeters via
    float64 multiply + floor; wire clients must do the identical operation."""
    return np.floor(np.asarray(depth_row, dtype=np.float64) * 1000.0).astype(np.int64)


def deeper_side_turn(depth_mm):
    """Rotate toward the half-frame with the larger summed depth (exact
    integer comparison; ties go right)."""
    w = len(depth_mm)
    left = sum(int(v) for v in depth_mm[: w // 2])
    right = sum(int(v) for v in depth_mm[w // 2:])
    return dyn.ROTATE_LEFT if left > right else dyn.ROTATE_RIGHT


def gps_planner_rule(r, theta, depth_mm):
    """Greedy pointnav rule on (gps range, bearing, per-column depth in mm).

    Order: end when close; align with the goal bearing; move when the center
    window is clear; otherwise rotate toward the deeper half-frame.
    """
    if r <= GPS_END_RANGE:
        return dyn.END
    if theta > BEARING_TOL:
        return dyn.ROTATE_LEFT
    if theta < -BEARING_TOL:
        return dyn.ROTATE_RIGHT
    w = len(depth_mm)
    lo = (w * 2) // 5
    hi = (w * 3) // 5
    if min(depth_mm[lo:hi]) > CLEAR_AHEAD_MM:
        return dyn.MOVE_AHEAD
    return deeper_side_turn(depth_mm)


class PlannerState:
    """Stuck recovery shared by the in-process planners and wire clients: a
    move_ahead that leaves the gps reading bit-identical was a collision; the
    planner then commits to turning one way until a move succeeds, so blocked
    corners are escaped instead of bounced against."""

    def __init__(self):
        self.reset()

    def reset(self):
        self.last_gps = None
        self.last_action = None
        self.turn_bias = None

    def step(self, gps, depth_mm):
        r, theta = gps
        if r <= GPS_END_RANGE:
            action = dyn.END
        else:
            blocked = (self.last_action == dyn.MOVE_AHEAD
                       and self.last_gps == gps)
            if self.last_action == dyn.MOVE_AHEAD and not blocked:
                self.turn_bias = None  # the move landed; incident over
            if blocked and self.turn_bias is None:
                self.turn_bias = deeper_side_turn(depth_mm)
            if self.turn_bias is not None:
                # escape mode: keep turning one way (ignoring the goal
                # bearing) until the window clears and a move lands
                w = len(depth_mm)
                clear = min(depth_mm[(w * 2) // 5:(w * 3) // 5]) > CLEAR_AHEAD_MM
                action = dyn.MOVE_AHEAD if (clear and not blocked) else self.turn_bias
            else:
                action = gps_planner_rule(r, theta, depth_mm)
        self.last_gps = gps
        self.last_action = action
        return action


def rgb_depth_estimate_mm(rgb, tol=17):
    """Per-column obstacle distance proxy from RGB alone, in millimeters.

    Two readings calibrated to the clean renderer, combined pessimistically:
      * wall band: the renderer draws one obstacle band per column, centered
        on the horizon with constant color; the color run length around the
        horizon row inverts to a distance (noise breaks runs, which reads as
        "farther").
      * floor boundary: rows below the band follow a known floor gradient;
        scanning floor-template rows up from the image bottom locates the
        band's lower edge (noise breaks the template match, which reads as
        "closer").
    Taking the per-column minimum keeps the clean estimate tight while
    corruption pushes it toward false obstacles rather than false clears.
    """
    h, w = rgb.shape[:2]
    horizon = h // 2
    img = rgb.astype(np.float64)
    sm = np.empty_like(img)
    for ch in range(3):
        sm[:, :, ch] = uniform_filter(img[:, :, ch], size=3, mode="nearest")

    # wall-band run length around the horizon row
    ref = sm[horizon]  # (W, 3)
    close = np.max(np.abs(sm - ref[None, :, :]), axis=2) <= tol  # (H, W)
    run_up = np.cumprod(close[horizon::-1, :], axis=0).sum(axis=0)
    run_down = np.cumprod(close[horizon:, :], axis=0).sum(axis=0)
    run = np.maximum(run_up + run_down - 1, 1)
    est_band = rndr.WALL_SCALE * h / run

    # floor-boundary estimate: mirror the renderer's floor gradient
    rows = np.arange(horizon + 1, h, dtype=np.float64)
    shade = 0.30 + 0.60 * np.clip((rows - horizon) / max(h - horizon, 1), 0.0, 1.0)
    template = rndr.FLOOR_BASE[None, :] * shade[:, None]  # (rows, 3)
    below = sm[horizon + 1:, :, :]
    is_floor = np.max(np.abs(below - template[:, None, :]), axis=2) <= tol
    floor_run = np.cumprod(is_floor[::-1, :], axis=0).sum(axis=0)
    half_est = np.maximum((h - 1 - horizon) - floor_run, 1)
    est_floor = rndr.WALL_SCALE * (h / 2.0) / half_est

    est_m = np.minimum(est_band, est_floor)
    return np.floor(est_m * 1000.0).astype(np.int64)


# -- built-in agents ---------------------------------------------------------------


class DepthPlannerAgent(Agent):
    """Unprivileged pointnav baseline using the clean depth channel + gps."""

    def __init__(self):
        self._state = PlannerState()

    def reset(self, spec, obs, env=None):
        self._state.reset()

    def act(self, obs):
        if obs.gps_compass is None or obs.depth is None:
            raise AgentError("depth_planner needs an rgbd pointnav observation")
        return self._state.step(obs.gps_compass, depth_row_mm(obs.depth[0]))


class RgbPlannerAgent(Agent):
    """Same rule as the depth planner but with obstacle proximity estimated
    from RGB, which makes it deliberately sensitive to visual corruption."""

    def __init__(self):
        self._state = PlannerState()

    def reset(self, spec, obs, env=None):
        self._state.reset()

    def act(self, obs):
        if obs.gps_compass is None:
            raise AgentError("rgb_planner needs a pointnav observation")
        return self._state.step(obs.gps_compass, rgb_depth_estimate_mm(obs.rgb))


class RandomAgent(Agent):
    """Floor baseline: uniform legal non-end actions, end with p = 0.02."""

    END_PROB = 0.02

    def __init__(self, seed=0):
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)
        self._legal = (dyn.MOVE_AHEAD, dyn.ROTATE_LEFT, dyn.ROTATE_RIGHT)

    def reset(self, spec, obs, env=None):
        # one stream per episode so runs are order- and worker-independent
        self._rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, spec.episode_seed, _SALT_AGENT]))
        if spec.task == "objectnav":
            self._legal = (dyn.MOVE_AHEAD, dyn.ROTATE_LEFT, dyn.ROTATE_RIGHT,
                           dyn.LOOK_UP, dyn.LOOK_DOWN)
        else:
            self._legal = (dyn.MOVE_AHEAD, dyn.ROTATE_LEFT, dyn.ROTATE_RIGHT)

    def act(self, obs):
        if self._rng.random() < self.END_PROB:
            return dyn.END
        return self._legal[int(self._rng.integers(len(self._legal)))]


class OracleAgent(Agent):
    """Privileged shortest-path follower (pointnav harness validation).

    Follows the replanned grid path with a 0.30 m lookahead and a 15 degree
    bearing tolerance.  Inside 0.43 m of the goal it switches to a small
    lattice planner over one- and two-move sequences (headings are multiples
    of the 30 degree turn quantum) and ends once within 0.075 m, which pins
    the terminal geodesic inside two grid cells.
    """

    privileged = True

    def __init__(self):
        self._env = None
        self._spec = None

    def reset(self, spec, obs, env=None):
        if spec.task != "pointnav":
            raise AgentError("oracle agent supports pointnav only")
        if env is None:
            raise AgentError("oracle agent needs the environment handle")
        self._env = env
        self._spec = spec
        self._grid = env.grid
        self._goal = spec.goal
        self._field = self._grid.distance_field([self._grid.cell_of(*spec.goal)])
        self._came_from = None

    def _move_free(self, x, y, heading_deg):
        """Cheap conservative mask sweep first; on rejection, fall back to the
        exact swept-disc test the environment itself applies."""
        grid = self._grid
        trav = grid.traversable
        rad = math.radians(heading_deg)
        dx, dy = math.cos(rad), math.sin(rad)
        n = max(int(math.ceil(0.25 / grid.cell_size)), 1)
        ok = True
        for i in range(1, n + 1):
            t = 0.25 * i / n
            r, c = grid.cell_of(x + t * dx, y + t * dy)
            if not grid.in_bounds(r, c):
                return False
            if not trav[r, c]:
                ok = False
                break
        if ok:
            return True
        return not dyn.sweep_collides(grid, x, y, x + 0.25 * dx, y + 0.25 * dy,
                                      grid.agent_radius)

    @staticmethod
    def _rot_steps(k):
        k %= 12
        return k if k <= 6 else k - 12  # signed 30-degree turns, left positive

    def _turn_action(self, signed_steps):
        return dyn.ROTATE_LEFT if signed_steps > 0 else dyn.ROTATE_RIGHT

    def _endgame(self, pose):
        gx, gy = self._goal
        d0 = math.hypot(gx - pose.x, gy - pose.y)
        if d0 <= ORACLE_END_DIST:
            return dyn.END
        # candidate plans: (final_dist, steps, k1, moves) over 1- and 2-move nets
        best = (round(d0, 9), 0, 0, 0)  # "end now" baseline
        for k1 in range(12):
            h1 = pose.heading + 30.0 * k1
            if not self._move_free(pose.x, pose.y, h1):
                continue
            r1 = math.radians(h1)
            x1 = pose.x + 0.25 * math.cos(r1)
            y1 = pose.y + 0.25 * math.sin(r1)
            s1 = abs(self._rot_steps(k1)) + 1
            d1 = math.hypot(gx - x1, gy - y1)
            cand = (round(d1, 9), s1, k1, 1)
            if cand < best:
                best = cand
            for k2 in range(12):
                h2 = h1 + 30.0 * k2
                if not self._move_free(x1, y1, h2):
                    continue
                r2 = math.radians(h2)
                x2 = x1 + 0.25 * math.cos(r2)
                y2 = y1 + 0.25 * math.sin(r2)
                s2 = s1 + abs(self._rot_steps(k2)) + 1
                d2 = math.hypot(gx - x2, gy - y2)
                cand = (round(d2, 9), s2, k1, 2)
                if cand < best:
                    best = cand
        if best[3] == 0 or best[0] >= round(d0, 9):
            return dyn.END  # no improving plan; d0 <= 0.43 so this still succeeds
        k1 = best[2]
        turns = self._rot_steps(k1)
        if turns == 0:
            return dyn.MOVE_AHEAD
        return self._turn_action(turns)

    def act(self, obs):
        pose = self._env.true_pose
        gx, gy = self._goal
        d = math.hypot(gx - pose.x, gy - pose.y)
        geo = wd.geodesic_lookup(self._grid, self._field, pose.x, pose.y)
        if not math.isfinite(geo):
            return dyn.END  # unreachable goal: end immediately
        if d <= ORACLE_ENDGAME_DIST and geo <= 0.6:
            return self._endgame(pose)
        # descend the replanned shortest-path field: among the 12 reachable
        # headings, pick the collision-free move minimizing distance-to-go
        # plus a small turn cost; heading-invariant, so bearings cannot
        # oscillate, and revisiting the cell we just left is penalized so
        # doorway-lip traps cannot ping-pong.
        best = None
        for k in range(12):
            h = pose.heading + 30.0 * k
            if not self._move_free(pose.x, pose.y, h):
                continue
            rad = math.radians(h)
            nx = pose.x + 0.25 * math.cos(rad)
            ny = pose.y + 0.25 * math.sin(rad)
            turns = abs(self._rot_steps(k))
            v = wd.geodesic_lookup(self._grid, self._field, nx, ny) + 0.02 * turns
            if self._came_from is not None and \
                    self._grid.cell_of(nx, ny) == self._came_from:
                v += 0.5
            key = (round(v, 9), turns, k)
            if best is None or key < best[0]:
                best = (key, k)
        if best is None:
            return dyn.END  # fully wedged; give up
        k = best[1]
        turns = self._rot_steps(k)
        if turns == 0:
            self._came_from = self._grid.cell_of(pose.x, pose.y)
            return dyn.MOVE_AHEAD
        return self._turn_action(turns)


BUILTIN_AGENTS = ("oracle", "depth_planner", "rgb_planner", "random")


def make_agent(name, seed=0):
    if name == "oracle":
        return OracleAgent()
    if name == "depth_planner":
        return DepthPlannerAgent()
    if name == "rgb_planner":
        return RgbPlannerAgent()
    if name == "random":
        return RandomAgent(seed)
    raise AgentError(f"unknown agent {name!r}")

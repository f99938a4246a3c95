"""Example greedy depth agent over the wire: the reference pointnav policy
from docs/protocol.md, reimplemented with the standard library only.

Run under the harness:

    robustnav run --agent "external:python3 -m robustnav_client.example_agent" ...

The arithmetic is integer-exact (depth quantized to millimeters via a float64
multiply and floor), so a run through this client reproduces the harness's
built-in depth planner byte for byte.
"""

from __future__ import annotations

import math
import sys

from .session import run_agent

GPS_END_RANGE = 0.18
BEARING_TOL = 20.0
CLEAR_AHEAD_MM = 450

MOVE_AHEAD = "move_ahead"
ROTATE_LEFT = "rotate_left"
ROTATE_RIGHT = "rotate_right"
END = "end"


def depth_row_mm(depth_row):
    """Millimeter quantization: float32 -> float64 is exact, then one IEEE
    multiply and floor, identical to the harness's arithmetic."""
    return [math.floor(float(v) * 1000.0) for v in depth_row]


def deeper_side_turn(depth_mm):
    w = len(depth_mm)
    left = sum(depth_mm[: w // 2])
    right = sum(depth_mm[w // 2:])
    return ROTATE_LEFT if left > right else ROTATE_RIGHT


def base_rule(r, theta, depth_mm):
    if r <= GPS_END_RANGE:
        return END
    if theta > BEARING_TOL:
        return ROTATE_LEFT
    if theta < -BEARING_TOL:
        return ROTATE_RIGHT
    w = len(depth_mm)
    if min(depth_mm[(w * 2) // 5:(w * 3) // 5]) > CLEAR_AHEAD_MM:
        return MOVE_AHEAD
    return deeper_side_turn(depth_mm)


class GreedyDepthPolicy:
    """Stuck-aware greedy policy: a move_ahead that leaves the gps reading
    bit-identical was a collision; commit to turning one way until a move
    lands again."""

    def __init__(self):
        self.reset(None)

    def reset(self, episode):
        self.last_gps = None
        self.last_action = None
        self.turn_bias = None

    def __call__(self, obs, episode):
        if obs.gps_compass is None or obs.depth is None:
            raise SystemExit("this policy needs gps + depth observations")
        gps = obs.gps_compass
        depth_mm = depth_row_mm(obs.depth_row(0))
        r, theta = gps
        if r <= GPS_END_RANGE:
            action = END
        else:
            blocked = self.last_action == MOVE_AHEAD and self.last_gps == gps
            if self.last_action == MOVE_AHEAD and not blocked:
                self.turn_bias = None
            if blocked and self.turn_bias is None:
                self.turn_bias = deeper_side_turn(depth_mm)
            if self.turn_bias is not None:
                w = len(depth_mm)
                clear = min(depth_mm[(w * 2) // 5:(w * 3) // 5]) > CLEAR_AHEAD_MM
                action = MOVE_AHEAD if (clear and not blocked) else self.turn_bias
            else:
                action = base_rule(r, theta, depth_mm)
        self.last_gps = gps
        self.last_action = action
        return action


def main(argv=None):
    endpoint = "stdio"
    args = list(sys.argv[1:] if argv is None else argv)
    if args:
        endpoint = args[0]
    return run_agent(endpoint, GreedyDepthPolicy())


if __name__ == "__main__":
    raise SystemExit(main())

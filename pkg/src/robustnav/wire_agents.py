"""Reference stdio wire agents: `python -m robustnav.wire_agents <policy>`.

Policies:
  end_echo  -- replies `end` to every observation (floor client; with
               --extra-after-done it also sends a stray action after each
               episode_end, exercising the server's closed-episode error).
  depth     -- the depth planner rules evaluated over the wire, byte-exact
               with the in-process agent.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import protocol as proto
from .agents import PlannerState, depth_row_mm


def _reply(line):
    sys.stdout.write(line + "\n")
    sys.stdout.flush()


class _DepthState:
    """The in-process depth planner's decision state, fed from wire frames."""

    def __init__(self):
        self._state = PlannerState()

    def reset(self):
        self._state.reset()

    def decide(self, msg):
        obs = proto.decode_observation(json.dumps(msg))
        if obs["gps_compass"] is None or obs["depth"] is None:
            raise SystemExit("depth policy needs gps + depth observations")
        return self._state.step(obs["gps_compass"], depth_row_mm(obs["depth"][0]))


def main(argv=None):
    ap = argparse.ArgumentParser(prog="robustnav.wire_agents")
    ap.add_argument("policy", choices=["end_echo", "depth"])
    ap.add_argument("--extra-after-done", action="store_true")
    args = ap.parse_args(argv)

    state = _DepthState()
    for raw in sys.stdin:
        raw = raw.strip()
        if not raw:
            continue
        msg = json.loads(raw)
        t = msg.get("type")
        if t == "hello":
            _reply(json.dumps({"type": "hello",
                               "version": proto.PROTOCOL_VERSION}))
        elif t == "reset":
            state.reset()
        elif t in ("observation", "calibrate_step"):
            if args.policy == "end_echo":
                _reply(proto.encode_action("end"))
            else:
                _reply(proto.encode_action(state.decide(msg)))
        elif t == "episode_end":
            if args.extra_after_done:
                _reply(proto.encode_action("move_ahead"))
        elif t == "bye":
            return 0
        elif t == "error":
            print(f"server error: {msg.get('message')}", file=sys.stderr)
        # unknown message types need no reply (forward compatible)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

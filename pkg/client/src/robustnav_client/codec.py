"""Message codec for protocol v1: newline-delimited JSON, raw sensor bytes in
base64.  Standard library only, so this file doubles as protocol
documentation for agent authors."""

from __future__ import annotations

import base64
import json
from array import array

PROTOCOL_VERSION = 1


class ProtocolError(Exception):
    pass


class ServerError(Exception):
    """Raised when the server sends an `error` message; carries its text."""


def dump_message(msg):
    return json.dumps(msg, sort_keys=True, separators=(",", ":"))


def parse_message(line):
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"malformed message: {e}") from None
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError("message without a type field")
    return msg


def hello_reply():
    return dump_message({"type": "hello", "version": PROTOCOL_VERSION})


def action_message(name):
    return dump_message({"type": "action", "name": name})


class Observation:
    """Decoded observation: rgb as height*width*3 bytes, depth as a float
    array (row-major), gps/target passthrough."""

    __slots__ = ("kind", "step_index", "width", "height", "rgb", "depth",
                 "gps_compass", "target", "reward", "done", "info")

    def __init__(self, kind, step_index, width, height, rgb, depth,
                 gps_compass, target, reward, done, info):
        self.kind = kind
        self.step_index = step_index
        self.width = width
        self.height = height
        self.rgb = rgb
        self.depth = depth
        self.gps_compass = gps_compass
        self.target = target
        self.reward = reward
        self.done = done
        self.info = info

    def rgb_pixel(self, row, col):
        base = (row * self.width + col) * 3
        return tuple(self.rgb[base:base + 3])

    def depth_row(self, row):
        return self.depth[row * self.width:(row + 1) * self.width]


def decode_observation(msg):
    """Decode an observation/calibrate_step dict into an Observation.
    Unknown fields are ignored for forward compatibility."""
    if msg.get("type") not in ("observation", "calibrate_step"):
        raise ProtocolError(f"not an observation: {msg.get('type')!r}")
    h = int(msg["rgb_height"])
    w = int(msg["rgb_width"])
    rgb = base64.b64decode(msg["rgb"], validate=True)
    if len(rgb) != h * w * 3:
        raise ProtocolError(f"rgb payload {len(rgb)} bytes, expected {h * w * 3}")
    depth = None
    if "depth" in msg:
        raw = base64.b64decode(msg["depth"], validate=True)
        if len(raw) != h * w * 4:
            raise ProtocolError(f"depth payload {len(raw)} bytes, expected {h * w * 4}")
        depth = array("f")
        depth.frombytes(raw)  # little-endian float32 on all supported hosts
    gps = None
    if "gps_compass" in msg:
        r, theta = msg["gps_compass"]
        gps = (float(r), float(theta))
    return Observation(
        kind=msg["type"], step_index=int(msg["step_index"]), width=w, height=h,
        rgb=rgb, depth=depth, gps_compass=gps,
        target=msg.get("target"), reward=msg.get("reward"),
        done=msg.get("done"), info=msg.get("info"),
    )

"""Newline-delimited JSON wire protocol for external agents.

One connection drives one environment sequentially: hello handshake, then per
episode reset -> observation/action exchanges -> episode_end, and finally bye.
Exactly one action reply is expected per observation or calibrate_step; the
terminal state is delivered as episode_end rather than an observation, so the
invariant holds.  See docs/protocol.md for the full grammar.
"""

from __future__ import annotations

import base64
import json
import math
import select
import shlex
import socket
import subprocess
import time

import numpy as np

from . import task as tk

PROTOCOL_VERSION = 1


class ProtocolError(Exception):
    pass


class HandshakeError(ProtocolError):
    pass


class DeadlineError(ProtocolError):
    pass


# -- codec ---------------------------------------------------------------------


def _require_finite(value, name):
    if isinstance(value, float) and not math.isfinite(value):
        raise ProtocolError(f"refusing to serialize non-finite {name}: {value}")
    return value


def _dump(msg):
    return json.dumps(msg, sort_keys=True, separators=(",", ":"))


def encode_observation(obs, reward=0.0, done=False, info=None,
                       msg_type="observation"):
    """Serialize an Observation to one wire line.  Raw row-major bytes go out
    base64-encoded so frames survive the wire bit-exactly."""
    h, w = obs.rgb.shape[:2]
    msg = {
        "type": msg_type,
        "step_index": obs.step_index,
        "rgb": base64.b64encode(np.ascontiguousarray(obs.rgb).tobytes()).decode("ascii"),
        "rgb_width": w,
        "rgb_height": h,
    }
    if obs.depth is not None:
        msg["depth"] = base64.b64encode(
            np.ascontiguousarray(obs.depth, dtype="<f4").tobytes()).decode("ascii")
    if obs.gps_compass is not None:
        r, theta = obs.gps_compass
        msg["gps_compass"] = [_require_finite(float(r), "gps range"),
                              _require_finite(float(theta), "gps bearing")]
    if obs.target is not None:
        msg["target"] = obs.target
    if msg_type == "observation":
        msg["reward"] = _require_finite(float(reward), "reward")
        msg["done"] = bool(done)
        msg["info"] = {
            "failed_action": bool(info.get("failed_action", False)),
            "in_range": bool(info.get("in_range", False)),
            "geodesic_to_goal": _json_safe_geo(info.get("geodesic_to_goal")),
        }
    return _dump(msg)


def _json_safe_geo(v):
    if v is None or not math.isfinite(v):
        return None  # unreachable; never emit NaN/Inf on the wire
    return float(v)


def decode_observation(line):
    """Parse an observation/calibrate_step line back into arrays (server-side
    mirror of the client codec; used by the built-in wire agents and tests)."""
    msg = json.loads(line)
    if msg.get("type") not in ("observation", "calibrate_step"):
        raise ProtocolError(f"not an observation line: {msg.get('type')!r}")
    h = int(msg["rgb_height"])
    w = int(msg["rgb_width"])
    raw = base64.b64decode(msg["rgb"], validate=True)
    if len(raw) != h * w * 3:
        raise ProtocolError(f"rgb payload is {len(raw)} bytes, expected {h * w * 3}")
    out = {
        "type": msg["type"],
        "step_index": int(msg["step_index"]),
        "rgb": np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3),
        "depth": None,
        "gps_compass": None,
        "target": msg.get("target"),
        "reward": msg.get("reward"),
        "done": msg.get("done"),
        "info": msg.get("info"),
    }
    if "depth" in msg:
        draw = base64.b64decode(msg["depth"], validate=True)
        if len(draw) != h * w * 4:
            raise ProtocolError(
                f"depth payload is {len(draw)} bytes, expected {h * w * 4}")
        out["depth"] = np.frombuffer(draw, dtype="<f4").reshape(h, w)
    if "gps_compass" in msg:
        r, theta = msg["gps_compass"]
        out["gps_compass"] = (float(r), float(theta))
    return out


def encode_action(name):
    return _dump({"type": "action", "name": name})


def decode_action(line):
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"malformed message: {e}") from None
    if msg.get("type") != "action":
        raise ProtocolError(f"expected an action message, got {msg.get('type')!r}")
    name = msg.get("name")
    if not isinstance(name, str):
        raise ProtocolError("action message without a name")
    return name


# -- transports -----------------------------------------------------------------


class _LineEndpoint:
    """Buffered line reader with deadlines over an fd-like byte stream."""

    def __init__(self):
        self._buf = b""
        self.bytes_received = 0

    def _read_chunk(self, timeout):
        raise NotImplementedError

    def _write(self, data):
        raise NotImplementedError

    def send_line(self, line):
        self._write(line.encode("utf-8") + b"\n")

    def recv_line(self, timeout):
        """One line (without newline) or raise DeadlineError / EOFError.
        Returns (line, byte_offset_of_line_start)."""
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise DeadlineError(f"no reply within {timeout:.1f}s")
            chunk = self._read_chunk(remaining)
            if chunk is None:
                continue
            if chunk == b"":
                raise EOFError("connection closed")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        start = self.bytes_received
        self.bytes_received += len(line) + 1
        return line.decode("utf-8", errors="replace"), start

    def poll_line(self, timeout):
        try:
            return self.recv_line(timeout)
        except DeadlineError:
            return None

    def close(self):
        pass


class SubprocessTransport(_LineEndpoint):
    """Spawns the agent as a subprocess and talks over its stdio."""

    def __init__(self, command):
        super().__init__()
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE,
                                     stdout=subprocess.PIPE, bufsize=0)

    def _read_chunk(self, timeout):
        fd = self.proc.stdout.fileno()
        ready, _, _ = select.select([fd], [], [], timeout)
        if not ready:
            return None
        # bufsize=0 gives a raw pipe: one os.read of whatever is available
        return self.proc.stdout.read(65536)

    def _write(self, data):
        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except BrokenPipeError as e:
            raise EOFError("agent process closed stdin") from e

    def close(self):
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()


class TcpListenTransport(_LineEndpoint):
    """Listens on a TCP port and serves the first client that connects."""

    def __init__(self, host="127.0.0.1", port=0, accept_timeout=30.0):
        super().__init__()
        self._server = socket.create_server((host, port))
        self._server.settimeout(accept_timeout)
        self.address = self._server.getsockname()
        self._conn = None

    def accept(self):
        self._conn, _ = self._server.accept()
        self._conn.setblocking(False)
        return self

    def _read_chunk(self, timeout):
        ready, _, _ = select.select([self._conn], [], [], timeout)
        if not ready:
            return None
        return self._conn.recv(65536)

    def _write(self, data):
        self._conn.setblocking(True)
        try:
            self._conn.sendall(data)
        finally:
            self._conn.setblocking(False)

    def close(self):
        for s in (self._conn, self._server):
            if s is not None:
                try:
                    s.close()
                except OSError:
                    pass


def open_transport(endpoint):
    """`tcp://host:port` listens and waits for the agent to connect; anything
    else is a command line to spawn as a stdio subprocess."""
    if endpoint.startswith("tcp://"):
        hostport = endpoint[len("tcp://"):]
        host, _, port = hostport.partition(":")
        t = TcpListenTransport(host or "127.0.0.1", int(port or 0))
        return t.accept()
    return SubprocessTransport(endpoint)


# -- server loop ------------------------------------------------------------------


def handshake(transport, sensor, task_kind, deadline):
    transport.send_line(_dump({"type": "hello", "version": PROTOCOL_VERSION,
                               "sensor": sensor, "task": task_kind}))
    line, off = transport.recv_line(deadline)
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as e:
        transport.send_line(_dump({"type": "error", "byte_offset": off,
                                   "message": f"malformed hello: {e}"}))
        raise HandshakeError(f"malformed hello at byte {off}") from None
    if msg.get("type") != "hello" or msg.get("version") != PROTOCOL_VERSION:
        transport.send_line(_dump({
            "type": "error",
            "message": f"protocol version mismatch: server={PROTOCOL_VERSION} "
                       f"client={msg.get('version')!r}"}))
        transport.close()
        raise HandshakeError(f"version mismatch: {msg.get('version')!r}")


def serve_episode(env, spec, transport, deadline):
    """Drive one episode over the wire.  Returns (trace, aborted)."""
    obs = env.reset(spec)
    transport.send_line(_dump({
        "type": "reset", "episode_id": spec.episode_id, "scene_id": spec.scene_id,
        "task": spec.task, "target": spec.category, "max_steps": spec.max_steps,
        "difficulty": spec.difficulty}))
    reward = 0.0
    info = {"failed_action": False, "in_range": env.goal_in_range(),
            "geodesic_to_goal": env.geodesic_to_goal}
    aborted = False
    while True:
        transport.send_line(encode_observation(obs, reward, False, info))
        try:
            line, off = transport.recv_line(deadline)
        except (DeadlineError, EOFError) as e:
            transport.send_line(_dump({"type": "error",
                                       "message": f"episode aborted: {e}"}))
            env.abort()
            aborted = True
            break
        try:
            name = decode_action(line)
            res = env.step(name)
        except Exception as e:  # malformed line or illegal action
            transport.send_line(_dump({"type": "error", "byte_offset": off,
                                       "message": f"episode aborted: {e}"}))
            env.abort()
            aborted = True
            break
        obs, reward, info = res.obs, res.reward, res.info
        if res.done:
            transport.send_line(_dump({
                "type": "episode_end", "episode_id": spec.episode_id,
                "success": bool(res.success), "reward": float(res.reward),
                "steps": env.trace_data()["steps"], "info": {
                    "failed_action": bool(info["failed_action"]),
                    "in_range": bool(info["in_range"]),
                    "geodesic_to_goal": _json_safe_geo(info["geodesic_to_goal"]),
                }}))
            extra = transport.poll_line(0.05)
            if extra is not None:
                transport.send_line(_dump({
                    "type": "error", "byte_offset": extra[1],
                    "message": "episode already closed; message ignored"}))
            break
    return env.trace_data(), aborted


def serve_calibration(env, specs, transport, budget, deadline):
    """Exactly `budget` calibrate_step messages, cycling decorrelated episode
    variants; no reward or success signal crosses the wire."""
    env_for = env if callable(env) else (lambda spec: env)
    done = 0
    i = 0
    while done < budget:
        cal = tk.calibration_spec(specs[i % len(specs)])
        i += 1
        ep_env = env_for(cal)
        obs = ep_env.reset(cal)
        while done < budget:
            transport.send_line(encode_observation(obs, msg_type="calibrate_step"))
            line, off = transport.recv_line(deadline)
            name = decode_action(line)
            done += 1
            if name == "end":
                ep_env.step(name)
                break
            res = ep_env.step(name)
            obs = res.obs
            if res.done:
                break
        if ep_env.active:
            ep_env.abort()


def serve(env, specs, transport, *, deadline=30.0, calibration_budget=0,
          calibration_specs=None):
    """Run a whole suite against an external agent.  Returns (traces, aborted)
    where traces are env trace dicts in suite order and aborted flags episodes
    terminated by protocol errors.  `env` may be a NavEnv or a callable
    mapping a spec to its scene's env."""
    env_for = env if callable(env) else (lambda spec: env)
    sensor = env_for(specs[0]).config.sensor if specs else "rgbd"
    handshake(transport, sensor, specs[0].task if specs else "pointnav", deadline)
    if calibration_budget > 0:
        serve_calibration(env_for, calibration_specs or specs, transport,
                          calibration_budget, deadline)
    traces = []
    aborted_flags = []
    for spec in specs:
        trace, aborted = serve_episode(env_for(spec), spec, transport, deadline)
        traces.append(trace)
        aborted_flags.append(aborted)
    transport.send_line(_dump({"type": "bye"}))
    return traces, aborted_flags

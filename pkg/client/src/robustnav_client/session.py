"""Client session over stdio or an outbound TCP connection.

The harness is the active side: it spawns stdio agents (endpoint "stdio") or
listens for TCP agents (endpoint "tcp://host:port").  One observation is
outstanding at a time; `bye` closes the session cleanly.
"""

from __future__ import annotations

import socket
import sys

from .codec import (ProtocolError, ServerError, action_message,
                    decode_observation, dump_message, hello_reply,
                    parse_message, PROTOCOL_VERSION)


class SessionClosed(Exception):
    pass


class ClientSession:
    def __init__(self, read_line, write_line, close=lambda: None):
        self._read_line = read_line
        self._write_line = write_line
        self._close = close
        self.version = None
        self.sensor = None
        self.task = None
        self.episode = None  # last reset message
        self._awaiting_action = False
        self._handshake()

    def _handshake(self):
        msg = self._next_message()
        if msg.get("type") != "hello":
            raise ProtocolError(f"expected hello, got {msg.get('type')!r}")
        if msg.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version mismatch: server {msg.get('version')!r}, "
                f"client {PROTOCOL_VERSION}")
        self.version = msg["version"]
        self.sensor = msg.get("sensor")
        self.task = msg.get("task")
        self._write_line(hello_reply())

    def _next_message(self):
        line = self._read_line()
        if line is None:
            raise SessionClosed("connection closed")
        msg = parse_message(line)
        if msg["type"] == "error":
            raise ServerError(msg.get("message", "unspecified server error"))
        return msg

    def next_event(self):
        """Next raw message dict; reset messages update session metadata."""
        msg = self._next_message()
        if msg["type"] == "reset":
            self.episode = msg
        return msg

    def next_observation(self):
        """Skip to the next observation/calibrate_step and decode it.
        Raises SessionClosed on bye."""
        if self._awaiting_action:
            raise ProtocolError("an observation is already outstanding")
        while True:
            msg = self.next_event()
            t = msg["type"]
            if t in ("observation", "calibrate_step"):
                self._awaiting_action = True
                return decode_observation(msg)
            if t == "bye":
                raise SessionClosed("server said bye")
            # reset / episode_end / unknown types: keep reading

    def send_action(self, name):
        if not self._awaiting_action:
            raise ProtocolError("no observation outstanding")
        self._write_line(action_message(name))
        self._awaiting_action = False

    def close(self):
        self._close()


def connect(endpoint="stdio"):
    """Open a ClientSession.  "stdio" serves the harness that spawned this
    process; "tcp://host:port" dials a listening harness."""
    if endpoint == "stdio":
        stdin = sys.stdin
        stdout = sys.stdout

        def read_line():
            line = stdin.readline()
            return line.rstrip("\n") if line else None

        def write_line(line):
            stdout.write(line + "\n")
            stdout.flush()

        return ClientSession(read_line, write_line)
    if endpoint.startswith("tcp://"):
        host, _, port = endpoint[len("tcp://"):].partition(":")
        sock = socket.create_connection((host or "127.0.0.1", int(port)))
        f = sock.makefile("rw", encoding="utf-8", newline="\n")

        def read_line():
            line = f.readline()
            return line.rstrip("\n") if line else None

        def write_line(line):
            f.write(line + "\n")
            f.flush()

        return ClientSession(read_line, write_line, close=sock.close)
    raise ProtocolError(f"unknown endpoint {endpoint!r}")


def run_agent(endpoint, policy):
    """Drive a policy over a session until the server closes it.

    `policy` is called as policy(obs, episode) per observation and must
    return an action name; if it has a `reset(episode)` method it is invoked
    whenever a new episode begins.
    """
    session = connect(endpoint)
    current_episode = None
    try:
        while True:
            obs = session.next_observation()
            if session.episode is not current_episode:
                current_episode = session.episode
                reset = getattr(policy, "reset", None)
                if reset is not None:
                    reset(current_episode)
            session.send_action(policy(obs, current_episode))
    except SessionClosed:
        return 0
    finally:
        session.close()

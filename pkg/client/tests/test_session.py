import json

import pytest

from robustnav_client import codec
from robustnav_client.session import ClientSession, SessionClosed


def make_session(server_lines):
    outbox = []
    lines = list(server_lines)

    def read_line():
        return lines.pop(0) if lines else None

    def write_line(line):
        outbox.append(line)

    session = ClientSession(read_line, write_line)
    return session, outbox


def hello():
    return json.dumps({"type": "hello", "version": 1, "sensor": "rgbd",
                       "task": "pointnav"})


def tiny_obs(step=0, kind="observation"):
    import base64
    rgb = base64.b64encode(bytes(16 * 16 * 3)).decode()
    msg = {"type": kind, "step_index": step, "rgb": rgb,
           "rgb_width": 16, "rgb_height": 16, "gps_compass": [1.0, 0.0]}
    if kind == "observation":
        msg.update(reward=0.0, done=False,
                   info={"failed_action": False, "in_range": False,
                         "geodesic_to_goal": 1.0})
    return json.dumps(msg)


def test_handshake_and_reply():
    session, outbox = make_session([hello()])
    assert session.version == 1
    assert session.sensor == "rgbd"
    assert json.loads(outbox[0]) == {"type": "hello", "version": 1}


def test_version_mismatch_raises():
    bad = json.dumps({"type": "hello", "version": 2})
    with pytest.raises(codec.ProtocolError):
        make_session([bad])


def test_observation_action_cycle():
    reset = json.dumps({"type": "reset", "episode_id": "ep0",
                        "scene_id": "s", "task": "pointnav", "target": None,
                        "max_steps": 300, "difficulty": "easy"})
    session, outbox = make_session([hello(), reset, tiny_obs(0)])
    obs = session.next_observation()
    assert obs.step_index == 0
    assert session.episode["episode_id"] == "ep0"
    session.send_action("move_ahead")
    assert json.loads(outbox[-1]) == {"type": "action", "name": "move_ahead"}
    # one action per observation: sending twice is an error
    with pytest.raises(codec.ProtocolError):
        session.send_action("move_ahead")


def test_server_error_raises_with_message():
    err = json.dumps({"type": "error", "message": "episode aborted: boom"})
    session, _ = make_session([hello(), err])
    with pytest.raises(codec.ServerError, match="episode aborted: boom"):
        session.next_observation()


def test_bye_closes_session():
    session, _ = make_session([hello(), json.dumps({"type": "bye"})])
    with pytest.raises(SessionClosed):
        session.next_observation()


def test_calibrate_step_counts_as_observation():
    session, outbox = make_session([hello(), tiny_obs(0, "calibrate_step")])
    obs = session.next_observation()
    assert obs.kind == "calibrate_step"
    session.send_action("rotate_left")
    assert json.loads(outbox[-1])["name"] == "rotate_left"

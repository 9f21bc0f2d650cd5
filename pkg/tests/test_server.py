import json
import socket
import time

import pytest

from stagelink.manipulator import ChannelId, OwnerKind
from stagelink.mixer import FireCueEvent, OwnershipEvent
from stagelink.bus import decode_pose_msg
from stagelink.scene import load_scene
from stagelink.scenarios import ASSETS, play_bvh
from stagelink.server import ControlHub, EngineRuntime


# --- control hub -------------------------------------------------------------


def hub() -> ControlHub:
    return ControlHub(("A1", "A2"), ("Q1",))


def test_axes_stored_and_persist_across_drains():
    h = hub()
    assert h.handle({"type": "axes", "avatar": "A1", "forward": 0.5}) is None
    axes, events = h.drain()
    assert axes["A1"].forward == 0.5
    assert events == ()
    axes2, _ = h.drain()
    assert axes2["A1"].forward == 0.5  # last writer wins, value holds


def test_axes_unknown_avatar_rejected():
    reply = hub().handle({"type": "axes", "avatar": "ghost", "forward": 1})
    assert reply["type"] == "error" and reply["error"] == "unknown_avatar"


def test_ownership_message_becomes_event():
    h = hub()
    assert h.handle({"type": "ownership", "avatar": "A2", "channel": "root_yaw",
                     "owner": "blend", "weight": 0.25}) is None
    _, events = h.drain()
    assert events == (OwnershipEvent("A2", ChannelId.ROOT_YAW,
                                     events[0].owner),)
    assert events[0].owner.kind is OwnerKind.BLEND
    assert events[0].owner.weight == 0.25
    assert h.drain()[1] == ()  # events hand over once


def test_ownership_validation_errors():
    h = hub()
    assert h.handle({"type": "ownership", "avatar": "A1", "channel": "elbow",
                     "owner": "mocap"})["error"] == "bad_ownership"
    assert h.handle({"type": "ownership", "avatar": "nope", "channel": "head",
                     "owner": "mocap"})["error"] == "unknown_avatar"


def test_fire_cue_ack_and_unknown():
    h = hub()
    assert h.handle({"type": "fire_cue", "id": "Q1"}) == {"type": "ok", "fired": "Q1"}
    assert h.drain()[1] == (FireCueEvent("Q1"),)
    assert h.handle({"type": "fire_cue", "id": "QX"})["error"] == "unknown_cue"


def test_unknown_message_type():
    assert hub().handle({"type": "warp"})["error"] == "unknown_type"
    assert hub().handle({})["error"] == "bad_message"


# --- live runtime ---------------------------------------------------------------


@pytest.fixture
def runtime(tmp_path):
    scene_doc = {
        "tick_hz": 100,
        "c_volumes": {"0": {"min": [-1, 0, -1], "max": [1, 2.2, 1]}},
        "avatars": [
            {"id": "A1", "topology": str(ASSETS / "walk16.bvh"), "bone_map": None,
             "stream": 0, "ref": {"pos": [0, 0, 0], "yaw_deg": 0}}
        ],
    }
    scene_path = tmp_path / "scene.json"
    scene_path.write_text(json.dumps(scene_doc))
    cue_text = json.dumps({"cues": [{"id": "Q1", "name": "turn", "actions": [
        {"kind": "set_ref", "avatar": "A1", "pos": [2, 0, 0], "yaw_deg": 90}]}]})

    rx = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    rx.bind(("127.0.0.1", 0))
    rx.settimeout(3.0)

    rt = EngineRuntime(
        load_scene(scene_path),
        cue_text,
        listen_port=0,
        posebus=rx.getsockname(),
        control_port=0,
        ws_port=0,
    )
    rt.start()
    rt.run_in_thread(duration_s=6.0)
    yield rt, rx
    rt.stop()
    rx.close()


def control_connection(rt) -> socket.socket:
    conn = socket.create_connection(("127.0.0.1", rt.control_port), timeout=3.0)
    conn.settimeout(3.0)
    return conn


def read_json_line(fh) -> dict:
    line = fh.readline()
    assert line, "control connection closed early"
    return json.loads(line)


def test_runtime_ticks_and_publishes_poses(runtime):
    rt, rx = runtime
    data, _ = rx.recvfrom(4096)
    msg = decode_pose_msg(data)
    assert msg.avatar_id == 0
    assert len(msg.joint_rotations) == 16


def test_runtime_control_round_trip(runtime):
    rt, rx = runtime
    conn = control_connection(rt)
    fh = conn.makefile("rb")

    conn.sendall(b'{"type": "subscribe_state"}\n')
    state = read_json_line(fh)
    assert state["type"] == "state"
    assert state["avatars"][0]["id"] == "A1"

    conn.sendall(b'{"type": "fire_cue", "id": "nope"}\n')
    replies = [read_json_line(fh)]
    while replies[-1]["type"] == "state":
        replies.append(read_json_line(fh))
    assert replies[-1] == {"type": "error", "error": "unknown_cue", "detail": "nope"}

    conn.sendall(b'{"type": "fire_cue", "id": "Q1"}\n')
    replies = [read_json_line(fh)]
    while replies[-1]["type"] == "state":
        replies.append(read_json_line(fh))
    assert replies[-1] == {"type": "ok", "fired": "Q1"}

    # The cue moved the reference; a later snapshot reflects it.
    deadline = time.time() + 3.0
    moved = False
    while time.time() < deadline and not moved:
        state = read_json_line(fh)
        if state["type"] == "state":
            ref = state["avatars"][0]["ref"]
            moved = ref["pos"][0] == 2.0
    assert moved
    conn.close()


def test_runtime_ingests_stream_datagrams(runtime):
    rt, rx = runtime
    port = rt.listener.port
    play_bvh(ASSETS / "walk16.bvh", "127.0.0.1", port, rate=500.0, max_frames=120)
    deadline = time.time() + 3.0
    saw_motion = False
    while time.time() < deadline and not saw_motion:
        msg = decode_pose_msg(rx.recvfrom(4096)[0])
        saw_motion = abs(msg.position.z) > 1e-3 or abs(msg.position.x) > 1e-3
    assert saw_motion, "mocap stream never reached the pose bus"
    assert rt.listener.received > 0


def test_runtime_websocket_control(runtime):
    from websockets.sync.client import connect

    rt, rx = runtime
    with connect(f"ws://127.0.0.1:{rt.ws_port}") as ws:
        ws.send(json.dumps({"type": "subscribe_state"}))
        state = json.loads(ws.recv(timeout=3.0))
        assert state["type"] == "state"
        assert state["ownership"]["A1"]["root_xy"] == "mocap"
        ws.send(json.dumps({"type": "axes", "avatar": "A1", "forward": 1.0}))
        ws.send(json.dumps({"type": "fire_cue", "id": "Q1"}))
        reply = json.loads(ws.recv(timeout=3.0))
        while reply["type"] == "state":
            reply = json.loads(ws.recv(timeout=3.0))
        assert reply == {"type": "ok", "fired": "Q1"}

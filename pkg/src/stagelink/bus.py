"""Pose broadcast and session logs.

POSEBUS/1 datagram layout, little-endian:

    offset  size  field
    0       4     magic "PB01"
    4       8     tick_no (u64)
    12      2     avatar_id (u16, bind order index)
    14      12    root position, 3 x f32
    26      16    root rotation (w, x, y, z) x f32
    42      2     joint_count (u16)
    44      16*n  joint rotations, (w, x, y, z) x f32 each

Session logs capture every tick's inputs and outputs so a run can be
re-executed and compared bit for bit: a "SL01" magic, one length-prefixed
JSON header embedding the full scene (and cue sheet) plus their hashes,
then one length-prefixed JSON record per tick. Python's JSON round-trips
doubles exactly, so replay comparison is done on the canonical record
bytes themselves.
"""

from __future__ import annotations

import json
import socket
import struct
from dataclasses import dataclass
from pathlib import Path

from .manipulator import AxisInput, ChannelId, ChannelOwner, OwnerKind
from .mixer import FireCueEvent, OwnershipEvent, TickInputs, TickOutput
from .mocap import BadMagic, MocapFrame, Truncated
from .pose import UnitQuat, Vec3, WorldPose
from .scene import SceneConfig, canonical_json, content_hash

POSE_MAGIC = b"PB01"
_POSE_HEAD = struct.Struct("<4sQH3f4fH")  # 44 bytes
_QUAT = struct.Struct("<4f")

DEFAULT_POSEBUS_PORT = 7001
DEFAULT_CONTROL_PORT = 7002
DEFAULT_WS_PORT = 7003

LOG_MAGIC = b"SL01"


@dataclass(frozen=True)
class PoseMessage:
    tick_no: int
    avatar_id: int
    position: Vec3
    rotation: UnitQuat
    joint_rotations: tuple[UnitQuat, ...]


def encode_pose_msg(tick_no: int, avatar_id: int, pose: WorldPose) -> bytes:
    parts = [
        _POSE_HEAD.pack(
            POSE_MAGIC,
            tick_no,
            avatar_id,
            pose.position.x,
            pose.position.y,
            pose.position.z,
            pose.rotation.w,
            pose.rotation.x,
            pose.rotation.y,
            pose.rotation.z,
            len(pose.joint_rotations),
        )
    ]
    for q in pose.joint_rotations:
        parts.append(_QUAT.pack(q.w, q.x, q.y, q.z))
    return b"".join(parts)


def decode_pose_msg(data: bytes) -> PoseMessage:
    if len(data) >= 4 and data[:4] != POSE_MAGIC:
        raise BadMagic(f"expected {POSE_MAGIC!r}, got {data[:4]!r}")
    if len(data) < _POSE_HEAD.size:
        raise Truncated(f"pose message of {len(data)} bytes, header needs {_POSE_HEAD.size}")
    (_, tick_no, avatar_id, px, py, pz, rw, rx, ry, rz, joint_count) = _POSE_HEAD.unpack_from(data)
    expected = _POSE_HEAD.size + 16 * joint_count
    if len(data) != expected:
        raise Truncated(f"{joint_count} joints need {expected} bytes, got {len(data)}")
    joints = tuple(
        UnitQuat(*_QUAT.unpack_from(data, _POSE_HEAD.size + 16 * i)) for i in range(joint_count)
    )
    return PoseMessage(tick_no, avatar_id, Vec3(px, py, pz), UnitQuat(rw, rx, ry, rz), joints)


class PosePublisher:
    """Fans TickOutputs out as one UDP datagram per avatar per tick.

    Avatar ids map to u16 wire ids by bind order. Sends that fail are
    counted as drops; acceptance runs require the counter to stay at 0.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_POSEBUS_PORT):
        self.addr = (host, port)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sent = 0
        self.dropped = 0
        self._id_map: dict[str, int] = {}

    def wire_id(self, avatar_id: str) -> int:
        if avatar_id not in self._id_map:
            self._id_map[avatar_id] = len(self._id_map)
        return self._id_map[avatar_id]

    def publish(self, output: TickOutput) -> None:
        for avatar_id, pose in output.poses.items():
            data = encode_pose_msg(output.tick_no, self.wire_id(avatar_id), pose)
            try:
                self.sock.sendto(data, self.addr)
                self.sent += 1
            except OSError:
                self.dropped += 1

    def close(self) -> None:
        self.sock.close()


# --- session logs -------------------------------------------------------------


class CorruptLog(ValueError):
    pass


class SceneMismatch(ValueError):
    pass


def _quat_list(q: UnitQuat) -> list[float]:
    return [q.w, q.x, q.y, q.z]


def _frame_to_json(f: MocapFrame) -> dict:
    return {
        "s": f.stream_id,
        "n": f.frame_no,
        "t": f.timestamp_us,
        "p": list(f.root_position.as_tuple()),
        "q": [_quat_list(q) for q in f.joint_rotations],
        "fl": f.flags,
    }


def _frame_from_json(d: dict) -> MocapFrame:
    return MocapFrame(
        stream_id=d["s"],
        frame_no=d["n"],
        timestamp_us=d["t"],
        root_position=Vec3(*d["p"]),
        joint_rotations=tuple(UnitQuat(*q) for q in d["q"]),
        flags=d["fl"],
    )


def _axes_to_json(a: AxisInput) -> dict:
    return {
        "f": a.forward, "l": a.lateral, "v": a.vertical,
        "yr": a.yaw_rate, "pr": a.pitch_rate, "t": a.timestamp_us,
    }


def _axes_from_json(d: dict) -> AxisInput:
    return AxisInput(d["f"], d["l"], d["v"], d["yr"], d["pr"], d["t"])


def _event_to_json(ev) -> dict:
    if isinstance(ev, OwnershipEvent):
        out = {
            "type": "ownership",
            "avatar": ev.avatar_id,
            "channel": ev.channel.value,
            "owner": ev.owner.kind.value,
        }
        if ev.owner.kind is OwnerKind.BLEND:
            out["weight"] = ev.owner.weight
        return out
    if isinstance(ev, FireCueEvent):
        return {"type": "fire_cue", "id": ev.cue_id}
    raise TypeError(f"unknown control event {ev!r}")


def _event_from_json(d: dict):
    if d["type"] == "ownership":
        return OwnershipEvent(
            d["avatar"],
            ChannelId(d["channel"]),
            ChannelOwner(OwnerKind(d["owner"]), d.get("weight", 1.0)),
        )
    if d["type"] == "fire_cue":
        return FireCueEvent(d["id"])
    raise CorruptLog(f"unknown logged event type {d.get('type')!r}")


def inputs_to_json(inputs: TickInputs) -> dict:
    return {
        "frames": {str(sid): _frame_to_json(f) for sid, f in sorted(inputs.frames.items())},
        "stale": sorted(inputs.stale),
        "axes": {aid: _axes_to_json(a) for aid, a in sorted(inputs.axes.items())},
        "events": [_event_to_json(e) for e in inputs.events],
    }


def inputs_from_json(d: dict) -> TickInputs:
    return TickInputs(
        frames={int(sid): _frame_from_json(f) for sid, f in d["frames"].items()},
        stale=frozenset(d["stale"]),
        axes={aid: _axes_from_json(a) for aid, a in d["axes"].items()},
        events=tuple(_event_from_json(e) for e in d["events"]),
    )


def output_to_json(output: TickOutput) -> dict:
    return {
        "tick": output.tick_no,
        "poses": {
            aid: {
                "p": list(pose.position.as_tuple()),
                "r": _quat_list(pose.rotation),
                "j": [_quat_list(q) for q in pose.joint_rotations],
            }
            for aid, pose in output.poses.items()
        },
        "events": [[t, kind, payload] for t, kind, payload in output.events],
    }


class SessionRecorder:
    """Writes one header plus one record per tick, length-prefixed."""

    def __init__(self, path, scene: SceneConfig, cue_text: str | None):
        self.path = Path(path)
        self._fh = open(self.path, "wb")
        scene_doc = scene.to_embedded()
        header = {
            "version": 1,
            "tick_hz": scene.tick_hz,
            "scene": scene_doc,
            "scene_hash": content_hash(scene_doc),
            "cues": cue_text,
            "cue_hash": content_hash(cue_text or ""),
        }
        self._fh.write(LOG_MAGIC)
        blob = canonical_json(header)
        self._fh.write(struct.pack("<I", len(blob)))
        self._fh.write(blob)
        self.ticks = 0

    def record(self, inputs: TickInputs, output: TickOutput) -> None:
        blob = canonical_json(
            {"tick": output.tick_no, "inputs": inputs_to_json(inputs), "output": output_to_json(output)}
        )
        self._fh.write(struct.pack("<I", len(blob)))
        self._fh.write(blob)
        self.ticks += 1

    def close(self) -> None:
        self._fh.close()


class SessionLog:
    """Parsed session log: header plus raw per-tick records."""

    def __init__(self, header: dict, records: list[dict]):
        self.header = header
        self.records = records

    @classmethod
    def load(cls, path) -> "SessionLog":
        raw = Path(path).read_bytes()
        if raw[:4] != LOG_MAGIC:
            raise CorruptLog(f"bad log magic {raw[:4]!r}")
        pos = 4
        blobs = []
        while pos < len(raw):
            if pos + 4 > len(raw):
                raise CorruptLog("truncated record length")
            (n,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            if pos + n > len(raw):
                raise CorruptLog("truncated record body")
            blobs.append(raw[pos : pos + n])
            pos += n
        if not blobs:
            raise CorruptLog("missing header record")
        try:
            header = json.loads(blobs[0])
            records = [json.loads(b) for b in blobs[1:]]
        except json.JSONDecodeError as exc:
            raise CorruptLog(f"undecodable record: {exc}") from None
        if not isinstance(header, dict) or "scene" not in header:
            raise CorruptLog("header record lacks a scene")
        return cls(header, records)

    def scene(self) -> SceneConfig:
        return SceneConfig.from_embedded(self.header["scene"])

    def cue_text(self) -> str | None:
        return self.header.get("cues")


@dataclass(frozen=True)
class ReplayVerdict:
    identical: bool
    ticks: int
    first_divergence: int | None = None
    detail: str = ""

    def describe(self) -> str:
        if self.identical:
            return f"identical ({self.ticks} ticks)"
        return f"divergence at tick {self.first_divergence}: {self.detail}"


def replay(log: SessionLog) -> ReplayVerdict:
    """Re-run the mixer on the logged inputs and compare outputs bit for bit.

    The engine is rebuilt from the scene and cue sheet embedded in the log
    header, whose hashes are verified first.
    """
    if content_hash(log.header["scene"]) != log.header.get("scene_hash"):
        raise SceneMismatch("scene embedded in log does not match its hash")
    if content_hash(log.cue_text() or "") != log.header.get("cue_hash"):
        raise SceneMismatch("cue sheet embedded in log does not match its hash")
    mixer = log.scene().build_mixer(log.cue_text())
    for record in log.records:
        try:
            inputs = inputs_from_json(record["inputs"])
            logged = record["output"]
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptLog(f"malformed record: {exc}") from None
        output = mixer.tick(inputs)
        got = output_to_json(output)
        if canonical_json(got) != canonical_json(logged):
            return ReplayVerdict(
                False,
                len(log.records),
                first_divergence=record["tick"],
                detail=_first_difference(logged, got),
            )
    return ReplayVerdict(True, len(log.records))


def _first_difference(a: dict, b: dict, path: str = "") -> str:
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            if k not in a or k not in b:
                return f"{path}.{k} present on one side only"
            if a[k] != b[k]:
                return _first_difference(a[k], b[k], f"{path}.{k}")
        return f"{path}: dicts differ"
    if isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            return f"{path}: lengths {len(a)} vs {len(b)}"
        for i, (x, y) in enumerate(zip(a, b)):
            if x != y:
                return _first_difference(x, y, f"{path}[{i}]")
        return f"{path}: lists differ"
    return f"{path}: {a!r} != {b!r}"


def record_session(path, scene: SceneConfig, cue_text: str | None) -> SessionRecorder:
    return SessionRecorder(path, scene, cue_text)

"""Skeleton stream ingest: the MSTREAM/1 wire format, BVH file playback,
and per-stream clocking with hold-last gap handling.

MSTREAM/1 datagram layout, all little-endian:

    offset  size  field
    0       4     magic "MS01"
    4       1     stream_id (u8)
    5       1     flags (u8, reserved zero)
    6       2     joint_count (u16)
    8       4     frame_no (u32)
    12      8     timestamp_us (u64)
    20      12    root position, 3 x f32
    32      16*n  joint rotations, (w, x, y, z) x f32 each

A fixed-size frame of up to 90 joints fits one MTU. Joint rotations on
the wire are accepted with norms in [0.99, 1.01]; anything further off is
a corrupt frame and gets rejected.
"""

from __future__ import annotations

import math
import socket
import struct
import threading
import time
from dataclasses import dataclass, replace

from .pose import Joint, SkeletonTopology, UnitQuat, Vec3

MAGIC = b"MS01"
HEADER = struct.Struct("<4sBBHIQ3f")
JOINT_QUAT = struct.Struct("<4f")
HEADER_LEN = HEADER.size  # 32

DEFAULT_STREAM_PORT = 7000

# No datagram for this long means the suit feed is gone and the avatar
# should freeze rather than jitter on ancient data.
STALE_AFTER_US = 500_000

_SUPPORTED_ORDERS = ("ZXY", "XYZ", "ZYX")


class BadMagic(ValueError):
    pass


class Truncated(ValueError):
    pass


class NonUnitQuat(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class UnsupportedChannelOrder(ValueError):
    pass


class StreamStale(RuntimeError):
    pass


@dataclass(frozen=True)
class MocapFrame:
    """One timestamped sample of a source skeleton."""

    stream_id: int
    frame_no: int
    timestamp_us: int
    root_position: Vec3
    joint_rotations: tuple[UnitQuat, ...]
    flags: int = 0


def encode_frame(frame: MocapFrame) -> bytes:
    """Pack a frame into one MSTREAM/1 datagram (32 + 16*joint_count bytes)."""
    parts = [
        HEADER.pack(
            MAGIC,
            frame.stream_id,
            frame.flags,
            len(frame.joint_rotations),
            frame.frame_no,
            frame.timestamp_us,
            frame.root_position.x,
            frame.root_position.y,
            frame.root_position.z,
        )
    ]
    for q in frame.joint_rotations:
        parts.append(JOINT_QUAT.pack(q.w, q.x, q.y, q.z))
    return b"".join(parts)


def decode_frame(data: bytes) -> MocapFrame:
    """Unpack one datagram; exact inverse of encode_frame.

    Raises BadMagic, Truncated (short payload or length not matching the
    declared joint count) or NonUnitQuat (any joint norm outside
    [0.99, 1.01]).
    """
    if len(data) >= 4 and data[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, got {data[:4]!r}")
    if len(data) < HEADER_LEN:
        raise Truncated(f"datagram of {len(data)} bytes, header needs {HEADER_LEN}")
    magic, stream_id, flags, joint_count, frame_no, timestamp_us, rx, ry, rz = HEADER.unpack_from(data)
    expected = HEADER_LEN + 16 * joint_count
    if len(data) != expected:
        raise Truncated(f"{joint_count} joints need {expected} bytes, got {len(data)}")
    rotations = []
    for i in range(joint_count):
        w, x, y, z = JOINT_QUAT.unpack_from(data, HEADER_LEN + 16 * i)
        norm = math.sqrt(w * w + x * x + y * y + z * z)
        if not 0.99 <= norm <= 1.01:
            raise NonUnitQuat(f"joint {i} quaternion norm {norm:.4f}")
        rotations.append(UnitQuat(w, x, y, z))
    return MocapFrame(
        stream_id=stream_id,
        frame_no=frame_no,
        timestamp_us=timestamp_us,
        root_position=Vec3(rx, ry, rz),
        joint_rotations=tuple(rotations),
        flags=flags,
    )


# --- BVH loading -----------------------------------------------------------

_AXIS_QUAT = {
    "X": UnitQuat.from_pitch,
    "Y": UnitQuat.from_yaw,
    "Z": UnitQuat.from_roll,
}


def euler_to_quat(order: str, degrees: tuple[float, float, float]) -> UnitQuat:
    """Compose intrinsic axis rotations in the given channel order."""
    q = UnitQuat.identity()
    for axis, deg in zip(order, degrees):
        q = q.mul(_AXIS_QUAT[axis](math.radians(deg)))
    return q


class _BvhReader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next_tokens(self) -> tuple[list[str], int]:
        while self.pos < len(self.lines):
            self.pos += 1
            tokens = self.lines[self.pos - 1].split()
            if tokens:
                return tokens, self.pos
        raise ParseError("unexpected end of file", len(self.lines))


def load_bvh(
    path, *, stream_id: int = 0
) -> tuple[SkeletonTopology, list[MocapFrame], float]:
    """Parse a BVH file into (topology, frames, frame_time_seconds).

    Joints appear in depth-first file order; End Site blocks contribute no
    joint. Rotation channels must come in one of ZXY, XYZ or ZYX order and
    are converted to quaternions; position channels are honored on the
    root and ignored elsewhere.
    """
    with open(path, "r", encoding="utf-8") as fh:
        return parse_bvh(fh.read(), stream_id=stream_id)


def parse_bvh(text: str, *, stream_id: int = 0) -> tuple[SkeletonTopology, list[MocapFrame], float]:
    rd = _BvhReader(text)
    tokens, line = rd.next_tokens()
    if tokens[0].upper() != "HIERARCHY":
        raise ParseError("expected HIERARCHY", line)

    joints: list[Joint] = []
    # Per joint: (has_position, rotation_order or None)
    channel_layout: list[tuple[bool, str | None]] = []
    stack: list[int] = []

    tokens, line = rd.next_tokens()
    while True:
        kw = tokens[0].upper()
        if kw in ("ROOT", "JOINT"):
            if len(tokens) < 2:
                raise ParseError("joint is missing a name", line)
            name = tokens[1]
            parent = stack[-1] if stack else None
            if kw == "ROOT" and parent is not None:
                raise ParseError("ROOT inside another joint", line)
            tokens, line = rd.next_tokens()
            if tokens[0] != "{":
                raise ParseError("expected '{'", line)
            tokens, line = rd.next_tokens()
            if tokens[0].upper() != "OFFSET" or len(tokens) != 4:
                raise ParseError("expected OFFSET x y z", line)
            try:
                offset = Vec3(float(tokens[1]), float(tokens[2]), float(tokens[3]))
            except ValueError:
                raise ParseError("bad OFFSET values", line) from None
            tokens, line = rd.next_tokens()
            if tokens[0].upper() != "CHANNELS":
                raise ParseError("expected CHANNELS", line)
            try:
                n_channels = int(tokens[1])
            except (IndexError, ValueError):
                raise ParseError("bad CHANNELS count", line) from None
            names = tokens[2:]
            if len(names) != n_channels:
                raise ParseError(f"CHANNELS claims {n_channels}, lists {len(names)}", line)
            has_pos = any(n.endswith("position") for n in names)
            rot = "".join(n[0].upper() for n in names if n.endswith("rotation"))
            if rot and rot not in _SUPPORTED_ORDERS:
                raise UnsupportedChannelOrder(f"rotation order {rot!r} (line {line})")
            joints.append(Joint(name, parent, offset))
            channel_layout.append((has_pos, rot or None))
            stack.append(len(joints) - 1)
            tokens, line = rd.next_tokens()
        elif kw == "END":
            # End Site: offset only, no channels, no joint entry.
            tokens, line = rd.next_tokens()
            if tokens[0] != "{":
                raise ParseError("expected '{' after End Site", line)
            tokens, line = rd.next_tokens()
            if tokens[0].upper() != "OFFSET":
                raise ParseError("expected OFFSET in End Site", line)
            tokens, line = rd.next_tokens()
            if tokens[0] != "}":
                raise ParseError("expected '}' closing End Site", line)
            tokens, line = rd.next_tokens()
        elif kw == "}":
            if not stack:
                raise ParseError("unbalanced '}'", line)
            stack.pop()
            if not stack:
                tokens, line = rd.next_tokens()
                break
            tokens, line = rd.next_tokens()
        elif kw == "MOTION":
            raise ParseError("MOTION before hierarchy closed", line)
        else:
            raise ParseError(f"unexpected token {tokens[0]!r}", line)

    if tokens[0].upper() != "MOTION":
        raise ParseError("expected MOTION", line)
    tokens, line = rd.next_tokens()
    if tokens[0].upper() != "FRAMES:" or len(tokens) < 2:
        raise ParseError("expected 'Frames: N'", line)
    try:
        frame_count = int(tokens[1])
    except ValueError:
        raise ParseError("bad frame count", line) from None
    tokens, line = rd.next_tokens()
    if [t.upper() for t in tokens[:2]] != ["FRAME", "TIME:"] or len(tokens) < 3:
        raise ParseError("expected 'Frame Time: t'", line)
    try:
        frame_time = float(tokens[2])
    except ValueError:
        raise ParseError("bad frame time", line) from None
    if frame_time <= 0:
        raise ParseError("frame time must be positive", line)

    per_joint = [
        (3 if has_pos else 0) + (3 if rot else 0) for has_pos, rot in channel_layout
    ]
    total = sum(per_joint)
    topology = SkeletonTopology(joints)

    frames: list[MocapFrame] = []
    for i in range(frame_count):
        tokens, line = rd.next_tokens()
        if len(tokens) != total:
            raise ParseError(f"frame {i}: expected {total} values, got {len(tokens)}", line)
        try:
            values = [float(t) for t in tokens]
        except ValueError:
            raise ParseError(f"frame {i}: non-numeric channel value", line) from None
        root_pos = Vec3()
        rotations: list[UnitQuat] = []
        k = 0
        for j, (has_pos, rot) in enumerate(channel_layout):
            if has_pos:
                if j == 0:
                    root_pos = Vec3(values[k], values[k + 1], values[k + 2])
                k += 3
            if rot:
                rotations.append(euler_to_quat(rot, (values[k], values[k + 1], values[k + 2])))
                k += 3
            else:
                rotations.append(UnitQuat.identity())
        frames.append(
            MocapFrame(
                stream_id=stream_id,
                frame_no=i,
                timestamp_us=round(i * frame_time * 1e6),
                root_position=root_pos,
                joint_rotations=tuple(rotations),
            )
        )
    return topology, frames, frame_time


# --- Stream sources ----------------------------------------------------------


class BvhSource:
    """Offline playback of a parsed BVH take, clocked by caller-supplied time.

    Frames are restamped against the source clock: frame k plays at
    start_us + k/fps. After the last frame playback holds it (or wraps,
    with monotonically increasing frame numbers, when looping).
    """

    def __init__(
        self,
        topology: SkeletonTopology,
        frames: list[MocapFrame],
        fps: float,
        *,
        stream_id: int = 0,
        loop: bool = False,
        start_us: int = 0,
        start_frame: int = 0,
    ):
        if not frames:
            raise ValueError("empty frame list")
        if fps <= 0:
            raise ValueError("fps must be positive")
        self.topology = topology
        self.frames = frames
        self.fps = fps
        self.stream_id = stream_id
        self.loop = loop
        self.start_us = start_us
        self.start_frame = start_frame

    @classmethod
    def from_file(cls, path, *, stream_id: int = 0, fps: float | None = None, **kw) -> "BvhSource":
        topology, frames, frame_time = load_bvh(path, stream_id=stream_id)
        return cls(topology, frames, fps if fps is not None else 1.0 / frame_time,
                   stream_id=stream_id, **kw)

    def latest(self, now_us: int) -> MocapFrame | None:
        if now_us < self.start_us:
            return None
        k = int((now_us - self.start_us) * self.fps / 1e6)
        n = len(self.frames)
        if self.loop:
            src = self.frames[(k + self.start_frame) % n]
        else:
            # Hold the last frame; frame_no keeps counting the clock.
            src = self.frames[min(k + self.start_frame, n - 1)]
        return replace(
            src,
            stream_id=self.stream_id,
            frame_no=k,
            timestamp_us=self.start_us + round(k * 1e6 / self.fps),
        )


class UdpSource:
    """Latest-frame buffer for one live stream.

    Out-of-order datagrams keep the highest frame number; gaps hold the
    last frame until the stale threshold, after which latest() raises
    StreamStale so the mixer can freeze the avatar.
    """

    def __init__(self, topology: SkeletonTopology, *, stream_id: int = 0,
                 stale_after_us: int = STALE_AFTER_US):
        self.topology = topology
        self.stream_id = stream_id
        self.stale_after_us = stale_after_us
        self._lock = threading.Lock()
        self._frame: MocapFrame | None = None
        self._recv_us: int | None = None

    def offer(self, frame: MocapFrame, recv_us: int) -> bool:
        """Record a received frame; returns False when dropped as older."""
        if len(frame.joint_rotations) != self.topology.joint_count:
            return False
        with self._lock:
            if self._frame is not None and frame.frame_no < self._frame.frame_no:
                return False
            self._frame = frame
            self._recv_us = recv_us
            return True

    def latest(self, now_us: int) -> MocapFrame | None:
        with self._lock:
            if self._frame is None:
                return None
            if now_us - self._recv_us > self.stale_after_us:
                raise StreamStale(
                    f"stream {self.stream_id}: no frame for {(now_us - self._recv_us) / 1000:.0f} ms"
                )
            return self._frame


StreamSource = BvhSource | UdpSource


def stream_tick(source: StreamSource, now_us: int) -> MocapFrame | None:
    """Latest frame of a source at the given clock, or None before the
    first frame. Raises StreamStale when a live feed has gone quiet."""
    return source.latest(now_us)


class UdpListener:
    """Background receiver demuxing MSTREAM/1 datagrams onto UdpSources by
    stream id. Undecodable datagrams are counted and dropped."""

    def __init__(self, sources: dict[int, UdpSource], port: int = DEFAULT_STREAM_PORT,
                 host: str = "0.0.0.0", clock_us=None):
        self.sources = sources
        self.port = port
        self.host = host
        self.clock_us = clock_us or (lambda: time.monotonic_ns() // 1000)
        self.bad_datagrams = 0
        self.received = 0
        self._sock: socket.socket | None = None
        self._thread: threading.Thread | None = None
        self._running = False

    def start(self) -> None:
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((self.host, self.port))
        self.port = self._sock.getsockname()[1]
        self._sock.settimeout(0.1)
        self._running = True
        self._thread = threading.Thread(target=self._run, name="mstream-rx", daemon=True)
        self._thread.start()

    def _run(self) -> None:
        while self._running:
            try:
                data, _ = self._sock.recvfrom(4096)
            except socket.timeout:
                continue
            except OSError:
                break
            try:
                frame = decode_frame(data)
            except (BadMagic, Truncated, NonUnitQuat):
                self.bad_datagrams += 1
                continue
            src = self.sources.get(frame.stream_id)
            if src is not None:
                src.offer(frame, self.clock_us())
                self.received += 1

    def stop(self) -> None:
        self._running = False
        if self._sock is not None:
            self._sock.close()
        if self._thread is not None:
            self._thread.join(timeout=1.0)

"""Live engine runtime.

One thread runs the fixed-step tick loop; skeleton datagrams, TCP control
lines and WebSocket messages arrive on their own threads and reach the
loop only through the control hub, a locked mailbox of immutable values.
Pose output fans out over UDP after each tick and state snapshots go to
every subscribed control connection at 10 Hz.

Control grammar (newline-delimited JSON over TCP, the same one message
per WebSocket frame):

    {"type": "axes", "avatar": "A1", "forward": 0.5, "lateral": 0,
     "vertical": 0, "yaw_rate": 0, "pitch_rate": 0}
    {"type": "ownership", "avatar": "A1", "channel": "root_xy",
     "owner": "manipulator", "weight": 0.5}
    {"type": "fire_cue", "id": "Q1"}
    {"type": "subscribe_state"}

Errors come back as {"type": "error", "error": ..., "detail": ...};
subscribers receive {"type": "state", ...} snapshots.
"""

from __future__ import annotations

import json
import socket
import socketserver
import threading
import time

from .bus import DEFAULT_CONTROL_PORT, DEFAULT_POSEBUS_PORT, DEFAULT_WS_PORT, PosePublisher, SessionRecorder
from .manipulator import AxisInput, ChannelId, ChannelOwner, OwnerKind
from .mixer import FireCueEvent, OwnershipEvent, TickInputs
from .mocap import DEFAULT_STREAM_PORT, StreamStale, UdpListener, stream_tick
from .scene import SceneConfig

SNAPSHOT_EVERY_TICKS = 10  # 10 Hz at the default 100 Hz tick rate


def _monotonic_us() -> int:
    return time.monotonic_ns() // 1000


class ControlHub:
    """Validates control messages and stages them for the next tick."""

    def __init__(self, avatar_ids: tuple[str, ...], cue_ids: tuple[str, ...]):
        self.avatar_ids = set(avatar_ids)
        self.cue_ids = set(cue_ids)
        self._lock = threading.Lock()
        self._axes: dict[str, AxisInput] = {}
        self._events: list = []

    def handle(self, msg: dict) -> dict | None:
        """Returns an error/ack reply, or None when there is nothing to say."""
        if not isinstance(msg, dict) or "type" not in msg:
            return {"type": "error", "error": "bad_message", "detail": "missing type"}
        kind = msg["type"]
        if kind == "axes":
            avatar = msg.get("avatar")
            if avatar not in self.avatar_ids:
                return {"type": "error", "error": "unknown_avatar", "detail": str(avatar)}
            axes = AxisInput(
                forward=float(msg.get("forward", 0.0)),
                lateral=float(msg.get("lateral", 0.0)),
                vertical=float(msg.get("vertical", 0.0)),
                yaw_rate=float(msg.get("yaw_rate", 0.0)),
                pitch_rate=float(msg.get("pitch_rate", 0.0)),
                timestamp_us=_monotonic_us(),
            )
            with self._lock:
                self._axes[avatar] = axes
            return None
        if kind == "ownership":
            avatar = msg.get("avatar")
            if avatar not in self.avatar_ids:
                return {"type": "error", "error": "unknown_avatar", "detail": str(avatar)}
            try:
                channel = ChannelId.parse(str(msg.get("channel")))
                owner = ChannelOwner(
                    OwnerKind.parse(str(msg.get("owner"))), float(msg.get("weight", 1.0))
                )
            except ValueError as exc:
                return {"type": "error", "error": "bad_ownership", "detail": str(exc)}
            with self._lock:
                self._events.append(OwnershipEvent(avatar, channel, owner))
            return None
        if kind == "fire_cue":
            cue_id = msg.get("id")
            if cue_id not in self.cue_ids:
                return {"type": "error", "error": "unknown_cue", "detail": str(cue_id)}
            with self._lock:
                self._events.append(FireCueEvent(cue_id))
            return {"type": "ok", "fired": cue_id}
        if kind == "subscribe_state":
            return {"type": "subscribed"}
        return {"type": "error", "error": "unknown_type", "detail": str(kind)}

    def drain(self) -> tuple[dict[str, AxisInput], tuple]:
        """Axes persist between messages (last writer wins); events are
        handed over exactly once."""
        with self._lock:
            events = tuple(self._events)
            self._events.clear()
            return dict(self._axes), events


class _Subscribers:
    def __init__(self):
        self._lock = threading.Lock()
        self._sinks: list = []

    def add(self, send) -> None:
        with self._lock:
            self._sinks.append(send)

    def push(self, text: str) -> None:
        with self._lock:
            sinks = list(self._sinks)
        for send in sinks:
            try:
                send(text)
            except Exception:
                with self._lock:
                    if send in self._sinks:
                        self._sinks.remove(send)


class _ControlTCPHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        runtime: EngineRuntime = self.server.runtime  # type: ignore[attr-defined]
        send_lock = threading.Lock()

        def send(text: str) -> None:
            with send_lock:
                self.wfile.write(text.encode() + b"\n")
                self.wfile.flush()

        for raw in self.rfile:
            line = raw.strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError as exc:
                send(json.dumps({"type": "error", "error": "bad_json", "detail": str(exc)}))
                continue
            reply = runtime.hub.handle(msg)
            if isinstance(msg, dict) and msg.get("type") == "subscribe_state":
                runtime.subscribers.add(send)
                send(json.dumps({"type": "state", **runtime.safe_snapshot()}))
                continue
            if reply is not None:
                send(json.dumps(reply))


class _ControlTCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class EngineRuntime:
    """Wires a scene to sockets and runs the tick loop."""

    def __init__(
        self,
        scene: SceneConfig,
        cue_text: str | None = None,
        listen_port: int = DEFAULT_STREAM_PORT,
        posebus: tuple[str, int] = ("127.0.0.1", DEFAULT_POSEBUS_PORT),
        control_port: int = DEFAULT_CONTROL_PORT,
        ws_port: int | None = DEFAULT_WS_PORT,
        record: str | None = None,
        host: str = "127.0.0.1",
    ):
        self.scene = scene
        self.mixer = scene.build_mixer(cue_text)
        self.udp_sources = scene.build_udp_sources()
        self.playback_sources = scene.build_playback_sources(start_us=_monotonic_us())
        self.listener = UdpListener(self.udp_sources, listen_port, host=host,
                                    clock_us=_monotonic_us) if self.udp_sources else None
        self.publisher = PosePublisher(*posebus)
        self.recorder = SessionRecorder(record, scene, cue_text) if record else None
        self.hub = ControlHub(
            self.mixer.avatar_ids,
            tuple(c.cue_id for c in self.mixer.cue_engine.sheet.cues),
        )
        self.subscribers = _Subscribers()
        self.host = host
        self.control_port = control_port
        self.ws_port = ws_port
        self._tcp_server: _ControlTCPServer | None = None
        self._ws_server = None
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()
        self._snapshot_lock = threading.Lock()
        self._last_snapshot: dict = self.mixer.snapshot()
        self.ticks_run = 0

    # Snapshots are produced on the tick thread and read by control threads.
    def safe_snapshot(self) -> dict:
        with self._snapshot_lock:
            return self._last_snapshot

    def start(self) -> None:
        if self.listener:
            self.listener.start()
        self._tcp_server = _ControlTCPServer((self.host, self.control_port), _ControlTCPHandler)
        self._tcp_server.runtime = self  # type: ignore[attr-defined]
        self.control_port = self._tcp_server.server_address[1]
        t = threading.Thread(target=self._tcp_server.serve_forever, name="control-tcp", daemon=True)
        t.start()
        self._threads.append(t)
        if self.ws_port is not None:
            self._start_ws()

    def _start_ws(self) -> None:
        from websockets.sync.server import serve

        runtime = self

        def ws_handler(conn) -> None:
            def send(text: str) -> None:
                conn.send(text)

            for raw in conn:
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError as exc:
                    send(json.dumps({"type": "error", "error": "bad_json", "detail": str(exc)}))
                    continue
                reply = runtime.hub.handle(msg)
                if isinstance(msg, dict) and msg.get("type") == "subscribe_state":
                    runtime.subscribers.add(send)
                    send(json.dumps({"type": "state", **runtime.safe_snapshot()}))
                    continue
                if reply is not None:
                    send(json.dumps(reply))

        self._ws_server = serve(ws_handler, self.host, self.ws_port)
        self.ws_port = self._ws_server.socket.getsockname()[1]
        t = threading.Thread(target=self._ws_server.serve_forever, name="control-ws", daemon=True)
        t.start()
        self._threads.append(t)

    def run(self, max_ticks: int | None = None, duration_s: float | None = None) -> int:
        """Run the tick loop on the calling thread until stopped."""
        dt = self.mixer.dt
        next_at = time.monotonic()
        deadline = None if duration_s is None else next_at + duration_s
        while not self._stop.is_set():
            if max_ticks is not None and self.ticks_run >= max_ticks:
                break
            if deadline is not None and time.monotonic() >= deadline:
                break
            now_us = _monotonic_us()
            frames = {}
            stale = set()
            for sid, source in {**self.playback_sources, **self.udp_sources}.items():
                try:
                    frame = stream_tick(source, now_us)
                except StreamStale:
                    stale.add(sid)
                    continue
                if frame is not None:
                    frames[sid] = frame
            axes, events = self.hub.drain()
            inputs = TickInputs(frames=frames, stale=frozenset(stale), axes=axes, events=events)
            output = self.mixer.tick(inputs)
            self.publisher.publish(output)
            if self.recorder:
                self.recorder.record(inputs, output)
            if output.tick_no % SNAPSHOT_EVERY_TICKS == 0:
                snap = self.mixer.snapshot()
                with self._snapshot_lock:
                    self._last_snapshot = snap
                self.subscribers.push(json.dumps({"type": "state", **snap}))
            self.ticks_run += 1
            next_at += dt
            delay = next_at - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            elif delay < -1.0:
                next_at = time.monotonic()  # fell far behind; resynchronize
        return self.ticks_run

    def run_in_thread(self, **kw) -> threading.Thread:
        t = threading.Thread(target=self.run, kwargs=kw, name="tick-loop", daemon=True)
        t.start()
        self._threads.append(t)
        return t

    def stop(self) -> None:
        self._stop.set()
        if self._tcp_server is not None:
            self._tcp_server.shutdown()
            self._tcp_server.server_close()
        if self._ws_server is not None:
            self._ws_server.shutdown()
        if self.listener:
            self.listener.stop()
        if self.recorder:
            self.recorder.close()
        self.publisher.close()
        for t in self._threads:
            if t is not threading.current_thread():
                t.join(timeout=2.0)

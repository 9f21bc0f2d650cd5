"""Three self-checking rehearsal scenarios plus a BVH stream player.

Each scenario drives the engine offline on a synthetic clock (so runs are
deterministic and recordable), collects per-tick data, and turns the
staging claims it demonstrates into explicit assertions:

* walking  - two avatars pace inside their two-meter acting boxes while
             the manipulator carries them across the much larger digital
             stage; asserts the confined input actually expands and that
             the two trajectories interlace.
* watching - a cue switches one avatar's gaze from its partner to a
             performer standing on the physical stage; asserts the head
             lands on every target within a tick.
* crowd    - two streams fan out onto six avatars; asserts one pose per
             avatar per tick, per-stream fanout independence, zero pose
             drops and the 100 Hz timing budget.
"""

from __future__ import annotations

import math
import socket
import time
from dataclasses import dataclass, field
from pathlib import Path

from .bus import PosePublisher, SessionRecorder
from .manipulator import AxisInput
from .mocap import encode_frame, load_bvh, stream_tick
from .mixer import Mixer, TickInputs, TickOutput
from .pose import SkeletonTopology, UnitQuat, Vec3, WorldPose
from .scene import AssetMissing, SceneConfig, load_scene
from .stage import look_at_yaw, map_a_to_b

ASSETS = Path(__file__).parent / "assets"

SCENARIO_NAMES = ("walking", "watching", "crowd")


class SocketError(OSError):
    pass


@dataclass
class ScenarioAssertion:
    name: str
    passed: bool
    message: str


@dataclass
class ScenarioReport:
    scenario: str
    ticks: int
    assertions: list[ScenarioAssertion] = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def failed(self) -> int:
        return sum(1 for a in self.assertions if not a.passed)

    @property
    def passed(self) -> int:
        return len(self.assertions) - self.failed

    def check(self, name: str, condition: bool, message: str) -> None:
        self.assertions.append(ScenarioAssertion(name, bool(condition), message))

    def lines(self) -> list[str]:
        out = [f"scenario {self.scenario}: {self.ticks} ticks, "
               f"{self.passed} passed / {self.failed} failed"]
        for a in self.assertions:
            out.append(f"  [{'PASS' if a.passed else 'FAIL'}] {a.name}: {a.message}")
        if self.timing:
            out.append(
                "  timing: mean {mean_ms:.3f} ms, p99 {p99_ms:.3f} ms, max {max_ms:.3f} ms"
                .format(**self.timing)
            )
        return out

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "ticks": self.ticks,
            "assertions": [vars(a) for a in self.assertions],
            "timing": self.timing,
            "extras": self.extras,
        }


def head_world_yaw(pose: WorldPose, topology: SkeletonTopology, head_index: int) -> float:
    """World yaw the head joint faces, composed through its parent chain."""
    rot = pose.rotation
    chain = topology.parent_chain(head_index)
    for idx in chain[1:]:
        rot = rot.mul(pose.joint_rotations[idx])
    fwd = rot.rotate(Vec3(0.0, 0.0, 1.0))
    return math.atan2(fwd.x, fwd.z)


def _segments_intersect(p1, p2, p3, p4) -> bool:
    def ccw(a, b, c):
        return (c[1] - a[1]) * (b[0] - a[0]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = ccw(p3, p4, p1), ccw(p3, p4, p2)
    d3, d4 = ccw(p1, p2, p3), ccw(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _polylines_cross(a: list[tuple[float, float]], b: list[tuple[float, float]], step: int = 10) -> bool:
    sa = list(zip(a[::step], a[step::step]))
    sb = list(zip(b[::step], b[step::step]))
    return any(_segments_intersect(p1, p2, p3, p4) for p1, p2 in sa for p3, p4 in sb)


class ScenarioDriver:
    """Runs a mixer against BVH playback on a synthetic clock."""

    def __init__(self, scene: SceneConfig, cue_text: str | None = None,
                 record: str | None = None):
        self.scene = scene
        self.mixer = scene.build_mixer(cue_text)
        self.sources = scene.build_playback_sources(start_us=0)
        self.recorder = SessionRecorder(record, scene, cue_text) if record else None
        self.dt_us = round(1e6 / scene.tick_hz)
        self.tick_times_ns: list[int] = []
        self.outputs: list[TickOutput] = []
        self.raw_roots: dict[int, list[Vec3]] = {sid: [] for sid in self.sources}

    def run(self, ticks: int, axes_for=None, keep_outputs: bool = True) -> None:
        for t in range(ticks):
            now = t * self.dt_us
            frames = {}
            for sid, src in self.sources.items():
                frame = stream_tick(src, now)
                if frame is not None:
                    frames[sid] = frame
                    self.raw_roots[sid].append(frame.root_position)
            axes = axes_for(t, now) if axes_for else {}
            inputs = TickInputs(frames=frames, axes=axes)
            start = time.perf_counter_ns()
            out = self.mixer.tick(inputs)
            self.tick_times_ns.append(time.perf_counter_ns() - start)
            if self.recorder:
                self.recorder.record(inputs, out)
            if keep_outputs:
                self.outputs.append(out)

    def close(self) -> None:
        if self.recorder:
            self.recorder.close()

    def timing_stats(self) -> dict:
        ms = sorted(t / 1e6 for t in self.tick_times_ns)
        n = len(ms)
        return {
            "mean_ms": sum(ms) / n,
            "p99_ms": ms[min(n - 1, int(0.99 * n))],
            "max_ms": ms[-1],
        }


def _asset(name: str) -> Path:
    path = ASSETS / name
    if not path.exists():
        raise AssetMissing(str(path))
    return path


def _displacement(track: list[Vec3]) -> float:
    x0, z0 = track[0].x, track[0].z
    return max(math.hypot(p.x - x0, p.z - z0) for p in track)


def _span(points: list[Vec3]) -> tuple[float, float]:
    xs = [p.x for p in points]
    zs = [p.z for p in points]
    return max(xs) - min(xs), max(zs) - min(zs)


def run_walking(ticks: int = 1000, record: str | None = None,
                manipulator_active: bool = True, scene_path=None) -> ScenarioReport:
    scene = load_scene(scene_path or _asset("walking.json"))
    driver = ScenarioDriver(scene, record=record)
    forward = AxisInput(forward=1.0) if manipulator_active else AxisInput()
    driver.run(ticks, axes_for=lambda t, now: {"A1": forward, "A2": forward})
    driver.close()

    report = ScenarioReport("walking", ticks, timing=driver.timing_stats())
    tracks = {
        aid: [out.poses[aid].position for out in driver.outputs] for aid in ("A1", "A2")
    }
    for sid, roots in driver.raw_roots.items():
        dx, dz = _span(roots)
        report.check(
            f"input_confined_stream{sid}",
            dx <= 2.0 and dz <= 2.0,
            f"mocap root span {dx:.2f} x {dz:.2f} m inside the 2 m box",
        )
    for aid, track in tracks.items():
        d = _displacement(track)
        report.check(
            f"space_expansion_{aid}",
            d > 6.0,
            f"world-root displacement {d:.2f} m (needs > 6 m)",
        )
    crossed = _polylines_cross(
        [(p.x, p.z) for p in tracks["A1"]], [(p.x, p.z) for p in tracks["A2"]]
    )
    report.check("trajectories_interlace", crossed, "avatar ground tracks cross")
    report.extras["displacements"] = {aid: _displacement(t) for aid, t in tracks.items()}
    return report


def run_watching(ticks: int = 1000, record: str | None = None, scene_path=None,
                 cues_path=None) -> ScenarioReport:
    scene = load_scene(scene_path or _asset("watching.json"))
    cue_text = Path(cues_path or _asset("watching_cues.json")).read_text(encoding="utf-8")
    driver = ScenarioDriver(scene, cue_text=cue_text, record=record)
    forward = AxisInput(forward=1.0)
    driver.run(ticks, axes_for=lambda t, now: {"A1": forward, "A2": forward})
    driver.close()

    report = ScenarioReport("watching", ticks, timing=driver.timing_stats())
    watcher = next(a for a in scene.avatars if a.avatar_id == "A2")
    head_index = watcher.topology.index_of(watcher.head_joint)
    performer_b = map_a_to_b(Vec3(1.0, 0.0, 2.0), scene.calibration)

    max_err = {"avatar": 0.0, "performer": 0.0}
    for out in driver.outputs:
        t = out.tick_no
        if t < 100:
            continue
        pose = out.poses["A2"]
        target = out.poses["A1"].position if t < 500 else performer_b
        want = look_at_yaw(pose.position, target)
        got = head_world_yaw(pose, watcher.topology, head_index)
        err = abs(math.remainder(got - want, math.tau))
        key = "avatar" if t < 500 else "performer"
        max_err[key] = max(max_err[key], err)

    report.check(
        "watch_avatar_accuracy",
        max_err["avatar"] < 1e-6,
        f"max head-yaw error toward A1: {max_err['avatar']:.2e} rad",
    )
    report.check(
        "watch_switch_accuracy",
        max_err["performer"] < 1e-6,
        f"max head-yaw error toward performer after switch: {max_err['performer']:.2e} rad",
    )
    report.extras["max_errors_rad"] = max_err
    return report


def run_crowd(ticks: int = 3000, record: str | None = None, scene_path=None,
              posebus: tuple[str, int] | None = None) -> ScenarioReport:
    scene = load_scene(scene_path or _asset("crowd.json"))
    driver = ScenarioDriver(scene, record=record)

    # Publish on a real socket so the drop counter measures actual sends.
    sink = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    if posebus is None:
        sink.bind(("127.0.0.1", 0))
        posebus = sink.getsockname()
    publisher = PosePublisher(*posebus)

    groups: dict[int, list[str]] = {}
    for spec in scene.avatars:
        groups.setdefault(spec.stream_id, []).append(spec.avatar_id)
    refs = {spec.avatar_id: spec.ref for spec in scene.avatars}

    six_poses = True
    fanout_ok = True
    fanout_msg = "per-stream limb lists identical, roots differ by the refs"

    def on_tick(out: TickOutput) -> None:
        nonlocal six_poses, fanout_ok, fanout_msg
        if len(out.poses) != 6:
            six_poses = False
        if not fanout_ok:
            return
        for sid, ids in groups.items():
            limbs = [out.poses[a].joint_rotations for a in ids]
            if not (limbs[0] == limbs[1] == limbs[2]):
                fanout_ok = False
                fanout_msg = f"tick {out.tick_no}: limb lists differ on stream {sid}"
                return
            locals_back = []
            for a in ids:
                ref = refs[a]
                p = out.poses[a].position
                locals_back.append(ref.rotation().conjugate().rotate(p.sub(ref.translation)))
            base = locals_back[0]
            for lb in locals_back[1:]:
                if lb.sub(base).norm() > 1e-9:
                    fanout_ok = False
                    fanout_msg = f"tick {out.tick_no}: root offsets disagree on stream {sid}"
                    return

    for t in range(ticks):
        now = t * driver.dt_us
        frames = {}
        for sid, src in driver.sources.items():
            frame = stream_tick(src, now)
            if frame is not None:
                frames[sid] = frame
        inputs = TickInputs(frames=frames)
        start = time.perf_counter_ns()
        out = driver.mixer.tick(inputs)
        driver.tick_times_ns.append(time.perf_counter_ns() - start)
        publisher.publish(out)
        if driver.recorder:
            driver.recorder.record(inputs, out)
        on_tick(out)
    driver.close()
    publisher.close()
    sink.close()

    stats = driver.timing_stats()
    report = ScenarioReport("crowd", ticks, timing=stats)
    report.check("six_poses_per_tick", six_poses, "every tick produced exactly 6 poses")
    report.check("fanout_independence", fanout_ok, fanout_msg)
    report.check(
        "zero_pose_drops",
        publisher.dropped == 0,
        f"{publisher.sent} pose messages sent, {publisher.dropped} dropped",
    )
    report.check(
        "tick_budget",
        stats["mean_ms"] < 10.0 and stats["p99_ms"] < 10.0,
        "mean {mean_ms:.3f} ms, p99 {p99_ms:.3f} ms against the 10 ms budget".format(**stats),
    )
    report.extras["pose_messages"] = {"sent": publisher.sent, "dropped": publisher.dropped}
    return report


def run_scenario(name: str, *, ticks: int | None = None, record: str | None = None,
                 **kw) -> ScenarioReport:
    if name == "walking":
        return run_walking(ticks or 1000, record, **kw)
    if name == "watching":
        return run_watching(ticks or 1000, record, **kw)
    if name == "crowd":
        return run_crowd(ticks or 3000, record, **kw)
    raise ValueError(f"unknown scenario {name!r}; pick one of {SCENARIO_NAMES}")


def play_bvh(path, host: str, port: int, rate: float | None = None,
             loop: bool = False, max_frames: int | None = None,
             stream_id: int = 0) -> int:
    """Stream a BVH take as MSTREAM/1 datagrams at the given frame rate.

    Returns the number of datagrams sent. Without loop, one pass over the
    file; with loop, runs until max_frames datagrams went out.
    """
    _, frames, frame_time = load_bvh(path, stream_id=stream_id)
    fps = rate if rate is not None else 1.0 / frame_time
    try:
        sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    except OSError as exc:
        raise SocketError(str(exc)) from None
    sent = 0
    total = max_frames if max_frames is not None else (len(frames) if not loop else None)
    start = time.monotonic()
    try:
        i = 0
        while total is None or sent < total:
            src = frames[i % len(frames)]
            frame = src.__class__(
                stream_id=stream_id,
                frame_no=i,
                timestamp_us=round(i * 1e6 / fps),
                root_position=src.root_position,
                joint_rotations=src.joint_rotations,
            )
            try:
                sock.sendto(encode_frame(frame), (host, port))
            except OSError as exc:
                raise SocketError(str(exc)) from None
            sent += 1
            i += 1
            if not loop and i >= len(frames) and max_frames is None:
                break
            next_at = start + i / fps
            delay = next_at - time.monotonic()
            if delay > 0:
                time.sleep(delay)
    finally:
        sock.close()
    return sent

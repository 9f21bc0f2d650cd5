"""The per-tick puppeteering core.

Every avatar's motion is split into six channels (planar root, vertical,
yaw, pitch, limbs, head), each resolved once per tick from the source the
ownership table names:

* mocap       - the channel follows the clamped, retargeted stream frame.
* manipulator - the channel's reference-transform component follows axis
                input; the mocap contribution to that channel is dropped
                so the motion is not applied twice.
* procedural  - planar root and yaw follow an installed path; limbs keep
                coming from mocap when they stay mocap-owned (golem mode).
* blend(w)    - positions interpolate linearly and rotations slerp
                between the mocap value and the other driver, w being the
                non-mocap share.

While the mocap side owns a root channel, manipulator deltas still steer
the reference transform, so operator motion adds on top of the performer's
own movement. Ownership changes, cue firings and input sampling all land
at tick start; within one tick everything resolves against a single table
snapshot. The tick is strictly single-threaded and purely a function of
its inputs, which is what makes session replays bit-exact.

Tick order: ownership changes, cue actions, input sampling, channel
resolution, output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .cues import CueAction, CueEngine, SetOwnership, SetRef, SetWatch, StartPath
from .manipulator import (
    AxisInput,
    ChannelId,
    ChannelOwner,
    ManipulatorConfig,
    OwnerKind,
    OwnershipTable,
    UnknownAvatar,
    axes_to_delta,
)
from .mocap import MocapFrame
from .pathfind import NavGrid, PlannedPath, follow, plan
from .pathfind import BlockedEndpoint, NoPath, OutOfBounds
from .pose import (
    IDENTITY_QUAT,
    ReferenceTransform,
    RootPose,
    SkeletonTopology,
    TransformDelta,
    UnitQuat,
    Vec3,
    WorldPose,
    compose,
    apply_delta,
)
from .retarget import BoneMap, retarget_pose
from .stage import (
    DegenerateTarget,
    StageCalibration,
    WatchKind,
    WatchTarget,
    clamp_to_volume,
    look_at_yaw,
    map_a_to_b,
)

DEFAULT_TICK_HZ = 100


class DuplicateAvatar(ValueError):
    pass


@dataclass(frozen=True)
class AvatarBinding:
    """Static wiring of one avatar: which stream drives it, how joints map
    onto its skeleton, and where its reference frame starts."""

    avatar_id: str
    stream_id: int
    topology: SkeletonTopology
    bone_map: BoneMap
    ref: ReferenceTransform = field(default_factory=ReferenceTransform)
    head_joint: str = "Head"


@dataclass(frozen=True)
class OwnershipEvent:
    avatar_id: str
    channel: ChannelId
    owner: ChannelOwner


@dataclass(frozen=True)
class FireCueEvent:
    cue_id: str


ControlEvent = OwnershipEvent | FireCueEvent


@dataclass(frozen=True)
class TickInputs:
    """Everything one tick consumes: the latest frame per stream, streams
    currently known stale, the latest axis sample per avatar, and control
    events that arrived since the previous tick."""

    frames: dict[int, MocapFrame] = field(default_factory=dict)
    stale: frozenset[int] = frozenset()
    axes: dict[str, AxisInput] = field(default_factory=dict)
    events: tuple[ControlEvent, ...] = ()


TickEvent = tuple[int, str, dict]


@dataclass(frozen=True)
class TickOutput:
    tick_no: int
    poses: dict[str, WorldPose]
    events: tuple[TickEvent, ...]


class _AvatarState:
    def __init__(self, binding: AvatarBinding):
        self.binding = binding
        self.ref = binding.ref
        self.watch: WatchTarget | None = None
        self.path: PlannedPath | None = None
        self.path_speed = 0.0
        self.path_start_tick = 0
        self.path_done_emitted = False
        self.head_index = binding.topology.index_of(binding.head_joint)
        # Mocap side, frozen at the last good frame (bind pose until one arrives).
        self.local = RootPose()
        self.joints: tuple[UnitQuat, ...] = tuple(
            IDENTITY_QUAT for _ in range(binding.topology.joint_count)
        )
        self.stale = False
        # Last composed world root, used for path starts and the console.
        self.world_pos = binding.ref.translation
        self.world_yaw = binding.ref.yaw


def _local_share(owner: ChannelOwner) -> float:
    if owner.kind is OwnerKind.MOCAP:
        return 1.0
    if owner.kind is OwnerKind.BLEND:
        return 1.0 - owner.weight
    return 0.0


class Mixer:
    """Single-threaded tick core; all engine state mutates only in tick()."""

    def __init__(
        self,
        calibration: StageCalibration | None = None,
        cue_engine: CueEngine | None = None,
        manipulator_cfg: ManipulatorConfig | None = None,
        nav_grid: NavGrid | None = None,
        tick_hz: int = DEFAULT_TICK_HZ,
    ):
        self.calibration = calibration or StageCalibration()
        self.cue_engine = cue_engine or CueEngine()
        self.manipulator_cfg = manipulator_cfg or ManipulatorConfig()
        self.nav_grid = nav_grid
        self.tick_hz = tick_hz
        self.dt = 1.0 / tick_hz
        self.tick_no = 0
        self.ownership = OwnershipTable(())
        self._avatars: dict[str, _AvatarState] = {}
        self._clamped_streams: set[int] = set()
        # Channel-source audit of the last tick: avatar -> channel -> source.
        self.last_audit: dict[str, dict[str, str]] = {}

    # --- binding -----------------------------------------------------------

    def bind_avatar(self, binding: AvatarBinding) -> None:
        if binding.avatar_id in self._avatars:
            raise DuplicateAvatar(binding.avatar_id)
        self._avatars[binding.avatar_id] = _AvatarState(binding)
        self.ownership = self.ownership.with_avatar(binding.avatar_id)

    @property
    def avatar_ids(self) -> tuple[str, ...]:
        return tuple(self._avatars)

    def _state(self, avatar_id: str) -> _AvatarState:
        try:
            return self._avatars[avatar_id]
        except KeyError:
            raise UnknownAvatar(avatar_id) from None

    # --- cue actions ---------------------------------------------------------

    def _apply_action(self, action: CueAction, cue_id: str, events: list[TickEvent]) -> None:
        t = self.tick_no
        if isinstance(action, SetRef):
            st = self._state(action.avatar_id)
            st.ref = action.ref
            events.append((t, "set_ref", {"cue": cue_id, **action.to_dict()}))
        elif isinstance(action, SetOwnership):
            self.ownership = self.ownership.set(action.avatar_id, action.channel, action.owner)
            events.append((t, "ownership_changed", {"cue": cue_id, **action.to_dict()}))
        elif isinstance(action, StartPath):
            st = self._state(action.avatar_id)
            if self.nav_grid is None:
                raise ValueError("start_path cue fired but the scene has no nav grid")
            start = self.nav_grid.nearest_cell(st.world_pos)
            try:
                path = plan(self.nav_grid, start, action.goal)
            except (NoPath, OutOfBounds, BlockedEndpoint) as exc:
                events.append(
                    (t, "path_failed",
                     {"cue": cue_id, "avatar": action.avatar_id, "reason": str(exc)})
                )
                return
            st.path = path
            st.path_speed = action.speed
            st.path_start_tick = t
            st.path_done_emitted = False
            events.append(
                (t, "path_started",
                 {"cue": cue_id, "avatar": action.avatar_id, "start": list(start),
                  "goal": list(action.goal), "cells": len(path.cells)})
            )
        elif isinstance(action, SetWatch):
            st = self._state(action.avatar_id)
            if action.target is not None:
                if st.head_index is None:
                    raise ValueError(
                        f"avatar {action.avatar_id!r} has no head joint "
                        f"{st.binding.head_joint!r} to aim"
                    )
                if action.target.kind is WatchKind.AVATAR and action.target.avatar_id not in self._avatars:
                    raise UnknownAvatar(action.target.avatar_id)
            st.watch = action.target
            # Watching hands the head channel to the procedural driver;
            # clearing the target hands it back to mocap.
            head_owner = ChannelOwner(
                OwnerKind.PROCEDURAL if action.target is not None else OwnerKind.MOCAP
            )
            self.ownership = self.ownership.set(action.avatar_id, ChannelId.HEAD, head_owner)
            events.append((t, "watch_changed", {"cue": cue_id, **action.to_dict()}))
            events.append(
                (t, "ownership_changed",
                 {"cue": cue_id, "avatar": action.avatar_id,
                  "channel": ChannelId.HEAD.value, "owner": head_owner.kind.value})
            )
        else:  # pragma: no cover - exhaustive over CueAction
            raise TypeError(f"unknown action {action!r}")

    # --- tick ----------------------------------------------------------------

    def tick(self, inputs: TickInputs) -> TickOutput:
        t = self.tick_no
        events: list[TickEvent] = []

        # 1. Ownership changes from the control channel.
        for ev in inputs.events:
            if isinstance(ev, OwnershipEvent):
                self.ownership = self.ownership.set(ev.avatar_id, ev.channel, ev.owner)
                events.append(
                    (t, "ownership_changed",
                     {"avatar": ev.avatar_id, "channel": ev.channel.value,
                      "owner": ev.owner.describe()})
                )

        # 2. Cue actions: scheduled cues first, then manual fire requests.
        fire_ids = self.cue_engine.due(t)
        fire_ids += [ev.cue_id for ev in inputs.events if isinstance(ev, FireCueEvent)]
        for cue_id in fire_ids:
            for _, action in self.cue_engine.fire(cue_id, t):
                self._apply_action(action, cue_id, events)

        # 3. Input sampling: clamp each fresh frame into its acting volume,
        # retarget onto every avatar bound to the stream.
        for stream_id in sorted(inputs.frames):
            frame = inputs.frames[stream_id]
            vol = self.calibration.volume_for(stream_id)
            if vol is not None:
                pos, clamped = clamp_to_volume(frame.root_position, vol)
                if clamped:
                    frame = replace(frame, root_position=pos)
                    if stream_id not in self._clamped_streams:
                        self._clamped_streams.add(stream_id)
                        events.append((t, "volume_exceeded", {"stream": stream_id}))
                else:
                    self._clamped_streams.discard(stream_id)
            for st in self._avatars.values():
                if st.binding.stream_id != stream_id:
                    continue
                st.local, st.joints = retarget_pose(frame, st.binding.bone_map, st.binding.topology)
                if st.stale:
                    st.stale = False
        for stream_id in sorted(inputs.stale):
            for st in self._avatars.values():
                if st.binding.stream_id == stream_id and not st.stale:
                    st.stale = True
                    events.append(
                        (t, "stream_stale",
                         {"stream": stream_id, "avatar": st.binding.avatar_id})
                    )

        # 4. Channel resolution, phase one: root poses.
        poses: dict[str, WorldPose] = {}
        joint_lists: dict[str, list[UnitQuat]] = {}
        audit: dict[str, dict[str, str]] = {}
        for avatar_id, st in self._avatars.items():
            poses[avatar_id], joint_lists[avatar_id], audit[avatar_id] = self._resolve_root(
                st, inputs.axes.get(avatar_id), events
            )

        # Phase two: watch-driven heads, aimed with this tick's positions.
        for avatar_id, st in self._avatars.items():
            self._resolve_head(st, poses, joint_lists[avatar_id], audit[avatar_id])

        out_poses = {
            avatar_id: replace(pose, joint_rotations=tuple(joint_lists[avatar_id]))
            for avatar_id, pose in poses.items()
        }
        for avatar_id, pose in out_poses.items():
            st = self._avatars[avatar_id]
            st.world_pos = pose.position
            fwd = pose.rotation.rotate(Vec3(0.0, 0.0, 1.0))
            if math.hypot(fwd.x, fwd.z) > 1e-9:
                st.world_yaw = math.atan2(fwd.x, fwd.z)

        self.last_audit = audit
        self.tick_no += 1
        return TickOutput(t, out_poses, tuple(events))

    def _resolve_root(
        self, st: _AvatarState, axes: AxisInput | None, events: list[TickEvent]
    ) -> tuple[WorldPose, list[UnitQuat], dict[str, str]]:
        avatar_id = st.binding.avatar_id
        own = {ch: self.ownership.owner(avatar_id, ch) for ch in ChannelId}
        audit = _ChannelAudit(avatar_id)

        # Manipulator deltas touch only channels the procedural driver does
        # not own; on mocap-owned channels they add on top of the performer.
        delta = axes_to_delta(axes, self.manipulator_cfg, self.dt) if axes else TransformDelta()
        gate = lambda ch: own[ch].kind is not OwnerKind.PROCEDURAL
        gated = TransformDelta(
            d_forward=delta.d_forward if gate(ChannelId.ROOT_XY) else 0.0,
            d_lateral=delta.d_lateral if gate(ChannelId.ROOT_XY) else 0.0,
            d_vertical=delta.d_vertical if gate(ChannelId.ROOT_VERTICAL) else 0.0,
            d_yaw=delta.d_yaw if gate(ChannelId.ROOT_YAW) else 0.0,
            d_pitch=delta.d_pitch if gate(ChannelId.ROOT_PITCH) else 0.0,
        )
        st.ref = apply_delta(st.ref, gated)

        # Path sample for this tick, if one is installed.
        path_pos: Vec3 | None = None
        path_yaw: float | None = None
        if st.path is not None:
            elapsed = (self.tick_no - st.path_start_tick) * self.dt
            path_pos, path_yaw, done = follow(st.path, st.path_speed, elapsed)
            if done and not st.path_done_emitted:
                st.path_done_emitted = True
                events.append((self.tick_no, "path_done", {"avatar": avatar_id}))

        o_xy, o_vert = own[ChannelId.ROOT_XY], own[ChannelId.ROOT_VERTICAL]
        o_yaw, o_pitch = own[ChannelId.ROOT_YAW], own[ChannelId.ROOT_PITCH]

        # Full procedural ownership moves the reference itself, so handing
        # control back later starts from where the path left the avatar.
        if path_pos is not None and o_xy.kind is OwnerKind.PROCEDURAL:
            st.ref = st.ref.with_translation(
                Vec3(path_pos.x, st.ref.translation.y, path_pos.z)
            )
        if path_yaw is not None and o_yaw.kind is OwnerKind.PROCEDURAL:
            st.ref = replace(st.ref, yaw=path_yaw)

        # Mocap contribution per channel: full when mocap-owned, scaled by
        # the mocap share in a blend, suppressed otherwise.
        sxy, sy, syaw = _local_share(o_xy), _local_share(o_vert), _local_share(o_yaw)
        lp = st.local.position
        local_pos = Vec3(lp.x * sxy, lp.y * sy, lp.z * sxy)
        if syaw >= 1.0:
            local_rot = st.local.rotation
        elif syaw <= 0.0:
            local_rot = IDENTITY_QUAT
        else:
            local_rot = IDENTITY_QUAT.slerp(st.local.rotation, syaw)
        world_pos, world_rot = compose(st.ref, RootPose(local_pos, local_rot))

        # Blending against an active path mixes in world space instead.
        if path_pos is not None and o_xy.kind is OwnerKind.BLEND:
            full_pos, _ = compose(st.ref, RootPose(Vec3(lp.x, lp.y * sy, lp.z), IDENTITY_QUAT))
            w = o_xy.weight
            world_pos = Vec3(
                full_pos.x + (path_pos.x - full_pos.x) * w,
                world_pos.y,
                full_pos.z + (path_pos.z - full_pos.z) * w,
            )
        if path_yaw is not None and o_yaw.kind is OwnerKind.BLEND:
            mocap_side = compose(st.ref, RootPose(Vec3(), st.local.rotation))[1]
            path_side = ReferenceTransform(yaw=path_yaw, pitch=st.ref.pitch).rotation()
            world_rot = mocap_side.slerp(path_side, o_yaw.weight)

        audit.record(ChannelId.ROOT_XY, _root_source(o_xy, path_pos is not None))
        audit.record(ChannelId.ROOT_VERTICAL, _root_source(o_vert, False))
        audit.record(ChannelId.ROOT_YAW, _root_source(o_yaw, path_yaw is not None))
        audit.record(ChannelId.ROOT_PITCH, _root_source(o_pitch, False))

        # Limbs: every joint except root and head; head resolves in phase two
        # unless it simply follows the mocap/limb rule.
        o_limbs, o_head = own[ChannelId.LIMBS], own[ChannelId.HEAD]
        s_limbs = _local_share(o_limbs)
        joints: list[UnitQuat] = [IDENTITY_QUAT]
        for i in range(1, st.binding.topology.joint_count):
            q = st.joints[i]
            if i == st.head_index:
                joints.append(q)  # placeholder; phase two may replace it
                continue
            if s_limbs >= 1.0:
                joints.append(q)
            elif s_limbs <= 0.0:
                joints.append(IDENTITY_QUAT)
            else:
                joints.append(IDENTITY_QUAT.slerp(q, s_limbs))
        audit.record(ChannelId.LIMBS, o_limbs.kind.value)
        if not (o_head.kind in (OwnerKind.PROCEDURAL, OwnerKind.BLEND) and st.watch is not None):
            audit.record(ChannelId.HEAD, "mocap")

        pose = WorldPose(world_pos, world_rot, ())
        return pose, joints, audit.sources

    def _resolve_head(
        self,
        st: _AvatarState,
        poses: dict[str, WorldPose],
        joints: list[UnitQuat],
        audit: dict[str, str],
    ) -> None:
        avatar_id = st.binding.avatar_id
        owner = self.ownership.owner(avatar_id, ChannelId.HEAD)
        if st.watch is None or st.head_index is None:
            return
        if owner.kind not in (OwnerKind.PROCEDURAL, OwnerKind.BLEND):
            return
        target = self._watch_position(st.watch, poses)
        try:
            yaw = look_at_yaw(poses[avatar_id].position, target)
        except DegenerateTarget:
            # Target is on top of us; keep the mocap head this tick.
            audit[ChannelId.HEAD.value] = "mocap(degenerate-watch)"
            return
        # Parent chain orientation from the composed root down to the head's
        # parent; the override cancels it so the head's world yaw is exact.
        parent_rot = poses[avatar_id].rotation
        for idx in st.binding.topology.parent_chain(st.head_index)[1:-1]:
            parent_rot = parent_rot.mul(joints[idx])
        head_local = parent_rot.conjugate().mul(UnitQuat.from_yaw(yaw))
        if owner.kind is OwnerKind.BLEND:
            head_local = st.joints[st.head_index].slerp(head_local, owner.weight)
            audit[ChannelId.HEAD.value] = f"blend(mocap,watch):{owner.weight:g}"
        else:
            audit[ChannelId.HEAD.value] = "watch"
        joints[st.head_index] = head_local

    def _watch_position(self, target: WatchTarget, poses: dict[str, WorldPose]) -> Vec3:
        if target.kind is WatchKind.AVATAR:
            return poses[target.avatar_id].position
        if target.kind is WatchKind.PERFORMER:
            return map_a_to_b(target.position, self.calibration)
        return target.position

    # --- snapshot --------------------------------------------------------------

    def snapshot(self) -> dict:
        """JSON-ready state report for the console and test harness."""
        avatars = []
        for avatar_id, st in self._avatars.items():
            avatars.append(
                {
                    "id": avatar_id,
                    "stream": st.binding.stream_id,
                    "ref": {
                        "pos": list(st.ref.translation.as_tuple()),
                        "yaw": st.ref.yaw,
                        "pitch": st.ref.pitch,
                    },
                    "position": list(st.world_pos.as_tuple()),
                    "heading_yaw": st.world_yaw,
                    "watch": None if st.watch is None else st.watch.to_dict(),
                    "path": None
                    if st.path is None
                    else {
                        "cells": [list(c) for c in st.path.cells],
                        "done": st.path_done_emitted,
                    },
                    "stale": st.stale,
                }
            )
        stage = self.calibration.to_dict()
        stage["nav_grid"] = (
            None
            if self.nav_grid is None
            else {
                "cols": self.nav_grid.width,
                "rows": self.nav_grid.height,
                "cell_size": self.nav_grid.cell_size,
                "origin": list(self.nav_grid.origin.as_tuple()),
            }
        )
        return {
            "tick_no": self.tick_no,
            "avatars": avatars,
            "ownership": self.ownership.as_dict(),
            "cues": self.cue_engine.as_dicts(),
            "stage": stage,
        }


def _root_source(owner: ChannelOwner, path_active: bool) -> str:
    if owner.kind is OwnerKind.BLEND:
        other = "path" if path_active else "manipulator"
        return f"blend(mocap,{other}):{owner.weight:g}"
    if owner.kind is OwnerKind.PROCEDURAL:
        return "path" if path_active else "procedural(idle)"
    return owner.kind.value


class _ChannelAudit:
    """Guards the one-writer-per-channel rule during resolution."""

    def __init__(self, avatar_id: str):
        self.avatar_id = avatar_id
        self.sources: dict[str, str] = {}

    def record(self, channel: ChannelId, source: str) -> None:
        if channel.value in self.sources:
            raise AssertionError(
                f"channel {channel.value} of {self.avatar_id} written twice: "
                f"{self.sources[channel.value]} then {source}"
            )
        self.sources[channel.value] = source

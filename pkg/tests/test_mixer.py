import json
import math

import pytest

from stagelink.cues import CueEngine, load_cue_sheet
from stagelink.manipulator import (
    MANIPULATOR,
    PROCEDURAL,
    AxisInput,
    ChannelId,
    OwnershipTable,
    blend,
)
from stagelink.mixer import (
    AvatarBinding,
    DuplicateAvatar,
    FireCueEvent,
    Mixer,
    OwnershipEvent,
    TickInputs,
)
from stagelink.mocap import MocapFrame
from stagelink.pathfind import parse_grid
from stagelink.pose import (
    Joint,
    ReferenceTransform,
    SkeletonTopology,
    UnitQuat,
    Vec3,
)
from stagelink.retarget import BoneMap
from stagelink.stage import StageCalibration, Volume, WatchTarget, look_at_yaw

TOPO = SkeletonTopology(
    [
        Joint("Hips", None, Vec3()),
        Joint("Spine", 0, Vec3(0, 0.4, 0)),
        Joint("Head", 1, Vec3(0, 0.3, 0)),
        Joint("LeftArm", 1, Vec3(0.2, 0.2, 0)),
    ]
)
IDENTITY_MAP = BoneMap.by_name(TOPO, TOPO)


def binding(avatar_id: str, stream_id: int = 0, ref: ReferenceTransform | None = None) -> AvatarBinding:
    return AvatarBinding(avatar_id, stream_id, TOPO, IDENTITY_MAP, ref or ReferenceTransform())


def frame(stream_id: int, frame_no: int, root: Vec3, quats=None) -> MocapFrame:
    quats = quats or tuple(UnitQuat.identity() for _ in range(TOPO.joint_count))
    return MocapFrame(stream_id, frame_no, frame_no * 10_000, root, tuple(quats))


def head_world_rotation(pose) -> UnitQuat:
    # Chain for the Head joint: root rotation, then Spine, then Head local.
    return pose.rotation.mul(pose.joint_rotations[1]).mul(pose.joint_rotations[2])


def world_yaw_of(q: UnitQuat) -> float:
    fwd = q.rotate(Vec3(0, 0, 1))
    return math.atan2(fwd.x, fwd.z)


# --- binding and basics -------------------------------------------------------


def test_six_avatars_two_streams_six_poses_per_tick():
    mixer = Mixer()
    for i in range(3):
        mixer.bind_avatar(binding(f"A{i}", 0))
    for i in range(3):
        mixer.bind_avatar(binding(f"B{i}", 1))
    out = mixer.tick(TickInputs())
    assert len(out.poses) == 6


def test_duplicate_avatar_rejected():
    mixer = Mixer()
    mixer.bind_avatar(binding("A1"))
    with pytest.raises(DuplicateAvatar):
        mixer.bind_avatar(binding("A1"))


def test_bind_pose_before_first_frame():
    mixer = Mixer()
    ref = ReferenceTransform(Vec3(3, 0, -1), yaw=0.4)
    mixer.bind_avatar(binding("A1", ref=ref))
    out = mixer.tick(TickInputs())
    pose = out.poses["A1"]
    assert pose.position == ref.translation
    assert all(q == UnitQuat.identity() for q in pose.joint_rotations)


def test_all_mocap_identity_ref_reproduces_frame():
    mixer = Mixer()
    mixer.bind_avatar(binding("A1"))
    quats = (
        UnitQuat.from_yaw(0.3),
        UnitQuat.from_pitch(0.5),
        UnitQuat.from_roll(-0.2),
        UnitQuat.from_yaw(-0.7),
    )
    f = frame(0, 0, Vec3(0.2, 0.9, -0.3), quats)
    out = mixer.tick(TickInputs(frames={0: f}))
    pose = out.poses["A1"]
    assert pose.position == f.root_position
    assert abs(pose.rotation.dot(quats[0])) > 1.0 - 1e-12
    assert pose.joint_rotations[0] == UnitQuat.identity()
    assert pose.joint_rotations[1:] == quats[1:]


# --- manipulator ownership ------------------------------------------------------


def test_manipulator_owned_root_ignores_mocap_and_advances():
    mixer = Mixer()
    mixer.bind_avatar(binding("A1"))
    mixer.tick(TickInputs(events=(OwnershipEvent("A1", ChannelId.ROOT_XY, MANIPULATOR),)))
    axes = AxisInput(forward=1.0)
    for i in range(100):
        # Mocap root wanders; it must not leak into the planar channels.
        f = frame(0, i + 1, Vec3(math.sin(i), 0.9, math.cos(i)))
        out = mixer.tick(TickInputs(frames={0: f}, axes={"A1": axes}))
    pose = out.poses["A1"]
    assert pose.position.z == pytest.approx(100 * 0.015, abs=1e-9)
    assert pose.position.x == pytest.approx(0.0, abs=1e-12)
    assert pose.position.y == pytest.approx(0.9)  # vertical still mocap-owned


def test_manipulator_advances_along_heading():
    mixer = Mixer()
    mixer.bind_avatar(binding("A1", ref=ReferenceTransform(yaw=math.pi / 2)))
    mixer.tick(TickInputs(events=(OwnershipEvent("A1", ChannelId.ROOT_XY, MANIPULATOR),)))
    for _ in range(100):
        out = mixer.tick(TickInputs(axes={"A1": AxisInput(forward=1.0)}))
    assert out.poses["A1"].position.x == pytest.approx(1.5, abs=1e-9)
    assert out.poses["A1"].position.z == pytest.approx(0.0, abs=1e-9)


def test_mocap_owned_root_adds_manipulator_motion():
    # The operator can carry the performer: both contributions add up.
    mixer = Mixer()
    mixer.bind_avatar(binding("A1"))
    local_z = 0.37
    out = None
    for i in range(50):
        f = frame(0, i, Vec3(0.0, 0.9, local_z))
        out = mixer.tick(TickInputs(frames={0: f}, axes={"A1": AxisInput(forward=1.0)}))
    assert out.poses["A1"].position.z == pytest.approx(50 * 0.015 + local_z, abs=1e-9)


def test_blend_halves_local_share():
    mixer = Mixer()
    mixer.bind_avatar(binding("A1"))
    mixer.tick(TickInputs(events=(OwnershipEvent("A1", ChannelId.ROOT_XY, blend(0.5)),)))
    f = frame(0, 1, Vec3(0.8, 0.9, 0.4))
    out = mixer.tick(TickInputs(frames={0: f}))
    assert out.poses["A1"].position.x == pytest.approx(0.4)
    assert out.poses["A1"].position.z == pytest.approx(0.2)
    assert out.poses["A1"].position.y == pytest.approx(0.9)


# --- golem mode -------------------------------------------------------------------


GOLEM_SHEET = json.dumps(
    {
        "cues": [
            {
                "id": "GO",
                "name": "golem walk",
                "actions": [
                    {"kind": "set_ownership", "avatar": "A1", "channel": "root_xy",
                     "owner": "procedural"},
                    {"kind": "set_ownership", "avatar": "A1", "channel": "root_yaw",
                     "owner": "procedural"},
                    {"kind": "start_path", "avatar": "A1", "goal": [3, 0], "speed": 1.5},
                ],
            }
        ]
    }
)


def golem_mixer() -> Mixer:
    grid = parse_grid("4 1 1.0 0.0 0.0 0.0\n....\n")
    mixer = Mixer(cue_engine=CueEngine(load_cue_sheet(GOLEM_SHEET)), nav_grid=grid)
    mixer.bind_avatar(binding("A1"))
    return mixer

def test_golem_walks_path_limbs_stay_mocap():
    mixer = golem_mixer()
    quats = (
        UnitQuat.from_yaw(0.9),
        UnitQuat.from_pitch(0.4),
        UnitQuat.from_roll(0.3),
        UnitQuat.from_yaw(-0.5),
    )
    mixer.tick(TickInputs(frames={0: frame(0, 0, Vec3(0.3, 0.9, -0.2), quats)}))
    out = mixer.tick(TickInputs(events=(FireCueEvent("GO"),)))
    assert out.poses["A1"].position.x == pytest.approx(0.0)  # path start, elapsed 0

    done_events = []
    for i in range(220):
        out = mixer.tick(TickInputs())
        done_events += [e for e in out.events if e[1] == "path_done"]
        # Limbs keep following the last mocap frame throughout.
        assert out.poses["A1"].joint_rotations[1:] == quats[1:]

    pose = out.poses["A1"]
    assert pose.position.x == pytest.approx(3.0, abs=1e-9)
    assert pose.position.z == pytest.approx(0.0, abs=1e-9)
    assert pose.position.y == pytest.approx(0.9)  # vertical still mocap
    # 3 m at 1.5 m/s: done exactly 200 ticks after the path started.
    assert len(done_events) == 1
    assert done_events[0][0] == 1 + 200
    # Facing along the path (+X), the mocap body yaw suppressed.
    assert world_yaw_of(pose.rotation) == pytest.approx(math.pi / 2, abs=1e-9)


def test_path_failed_emits_event_not_crash():
    grid = parse_grid("4 1 1.0 0.0 0.0 0.0\n...#\n")
    sheet = load_cue_sheet(GOLEM_SHEET)
    mixer = Mixer(cue_engine=CueEngine(sheet), nav_grid=grid)
    mixer.bind_avatar(binding("A1"))
    out = mixer.tick(TickInputs(events=(FireCueEvent("GO"),)))
    assert any(e[1] == "path_failed" for e in out.events)


def test_start_path_without_grid_raises():
    mixer = Mixer(cue_engine=CueEngine(load_cue_sheet(GOLEM_SHEET)))
    mixer.bind_avatar(binding("A1"))
    with pytest.raises(ValueError, match="nav grid"):
        mixer.tick(TickInputs(events=(FireCueEvent("GO"),)))


# --- watch targets -----------------------------------------------------------------


def watch_sheet(target: dict | None) -> CueEngine:
    return CueEngine(
        load_cue_sheet(
            json.dumps(
                {"cues": [{"id": "W", "actions": [
                    {"kind": "set_watch", "avatar": "A1", "target": target}]}]}
            )
        )
    )


def test_watch_point_head_yaw_exact():
    mixer = Mixer(cue_engine=watch_sheet({"kind": "point", "pos": [4.0, 0.0, 7.0]}))
    mixer.bind_avatar(binding("A1"))
    quats = (UnitQuat.from_yaw(0.8), UnitQuat.from_pitch(0.3),
             UnitQuat.from_yaw(0.2), UnitQuat.identity())
    mixer.tick(TickInputs(frames={0: frame(0, 0, Vec3(0.1, 0.9, 0.2), quats)}))
    out = mixer.tick(TickInputs(events=(FireCueEvent("W"),)))
    pose = out.poses["A1"]
    want = look_at_yaw(pose.position, Vec3(4.0, 0.0, 7.0))
    got = world_yaw_of(head_world_rotation(pose))
    assert abs(got - want) < 1e-6


def test_watch_avatar_tracks_same_tick_position():
    mixer = Mixer(cue_engine=watch_sheet({"kind": "avatar", "id": "A2"}))
    mixer.bind_avatar(binding("A1"))
    mixer.bind_avatar(binding("A2", stream_id=1, ref=ReferenceTransform(Vec3(5, 0, 5))))
    mixer.tick(TickInputs(events=(FireCueEvent("W"),)))
    for i in range(1, 20):
        # A2 wanders via its mocap root.
        f2 = frame(1, i, Vec3(math.sin(i / 3), 0.9, math.cos(i / 5)))
        out = mixer.tick(TickInputs(frames={1: f2}))
        pose1, pose2 = out.poses["A1"], out.poses["A2"]
        want = look_at_yaw(pose1.position, pose2.position)
        got = world_yaw_of(head_world_rotation(pose1))
        assert abs(got - want) < 1e-6


def test_watch_performer_goes_through_stage_calibration():
    calib = StageCalibration(a_to_b_translation=Vec3(0, 0, -3), a_to_b_yaw=0.0)
    mixer = Mixer(calibration=calib,
                  cue_engine=watch_sheet({"kind": "performer", "pos": [2.0, 0.0, 0.0]}))
    mixer.bind_avatar(binding("A1"))
    out = mixer.tick(TickInputs(events=(FireCueEvent("W"),)))
    pose = out.poses["A1"]
    want = look_at_yaw(pose.position, Vec3(2.0, 0.0, -3.0))
    assert abs(world_yaw_of(head_world_rotation(pose)) - want) < 1e-6


def test_watch_without_head_joint_raises():
    headless = SkeletonTopology([Joint("Hips", None, Vec3())])
    mixer = Mixer(cue_engine=watch_sheet({"kind": "point", "pos": [1, 0, 1]}))
    mixer.bind_avatar(AvatarBinding("A1", 0, headless, BoneMap.by_name(headless, headless)))
    with pytest.raises(ValueError, match="head joint"):
        mixer.tick(TickInputs(events=(FireCueEvent("W"),)))


def test_clearing_watch_returns_head_to_mocap():
    mixer = Mixer(cue_engine=CueEngine(load_cue_sheet(json.dumps({"cues": [
        {"id": "W", "actions": [{"kind": "set_watch", "avatar": "A1",
                                 "target": {"kind": "point", "pos": [5, 0, 5]}}]},
        {"id": "X", "actions": [{"kind": "set_watch", "avatar": "A1", "target": None}]},
    ]}))))
    mixer.bind_avatar(binding("A1"))
    head_rot = UnitQuat.from_yaw(0.4)
    f = frame(0, 0, Vec3(0, 0.9, 0), (UnitQuat.identity(), UnitQuat.identity(),
                                      head_rot, UnitQuat.identity()))
    mixer.tick(TickInputs(frames={0: f}, events=(FireCueEvent("W"),)))
    out = mixer.tick(TickInputs(events=(FireCueEvent("X"),)))
    assert out.poses["A1"].joint_rotations[2] == head_rot
    assert mixer.last_audit["A1"]["head"] == "mocap"


# --- events and state ----------------------------------------------------------------


def test_volume_clamp_emits_transition_events():
    calib = StageCalibration(c_volumes={0: Volume(Vec3(-2, 0, -2), Vec3(2, 2, 2))})
    mixer = Mixer(calibration=calib)
    mixer.bind_avatar(binding("A1"))
    out1 = mixer.tick(TickInputs(frames={0: frame(0, 0, Vec3(5.0, 0.9, 0.0))}))
    assert out1.poses["A1"].position.x == pytest.approx(2.0)
    assert sum(1 for e in out1.events if e[1] == "volume_exceeded") == 1
    out2 = mixer.tick(TickInputs(frames={0: frame(0, 1, Vec3(5.0, 0.9, 0.0))}))
    assert not any(e[1] == "volume_exceeded" for e in out2.events)  # still clamped
    mixer.tick(TickInputs(frames={0: frame(0, 2, Vec3(0.0, 0.9, 0.0))}))
    out4 = mixer.tick(TickInputs(frames={0: frame(0, 3, Vec3(-9.0, 0.9, 0.0))}))
    assert any(e[1] == "volume_exceeded" for e in out4.events)  # re-entered


def test_stale_stream_freezes_mocap_and_emits_once():
    mixer = Mixer()
    mixer.bind_avatar(binding("A1"))
    f = frame(0, 0, Vec3(0.4, 0.9, -0.1))
    before = mixer.tick(TickInputs(frames={0: f})).poses["A1"]
    out = mixer.tick(TickInputs(stale=frozenset({0})))
    assert out.poses["A1"].position == before.position
    assert sum(1 for e in out.events if e[1] == "stream_stale") == 1
    out2 = mixer.tick(TickInputs(stale=frozenset({0})))
    assert not any(e[1] == "stream_stale" for e in out2.events)


def test_ownership_event_applies_at_tick_start():
    mixer = Mixer()
    mixer.bind_avatar(binding("A1"))
    out = mixer.tick(
        TickInputs(
            frames={0: frame(0, 0, Vec3(0.5, 0.9, 0.5))},
            events=(OwnershipEvent("A1", ChannelId.ROOT_XY, MANIPULATOR),),
        )
    )
    # The change queued for this tick is visible to this tick's resolution.
    assert mixer.last_audit["A1"]["root_xy"] == "manipulator"
    assert out.poses["A1"].position.x == pytest.approx(0.0)


def test_audit_covers_every_channel_once():
    mixer = Mixer(cue_engine=watch_sheet({"kind": "point", "pos": [3, 0, 3]}))
    mixer.bind_avatar(binding("A1"))
    mixer.tick(TickInputs(events=(
        OwnershipEvent("A1", ChannelId.ROOT_XY, blend(0.3)),
        OwnershipEvent("A1", ChannelId.LIMBS, PROCEDURAL),
        FireCueEvent("W"),
    )))
    audit = mixer.last_audit["A1"]
    assert set(audit) == {c.value for c in ChannelId}
    assert audit["root_xy"].startswith("blend")
    assert audit["head"] == "watch"
    assert audit["limbs"] == "procedural"


def test_fanout_shared_stream_independent_refs():
    refs = [
        ReferenceTransform(Vec3(0, 0, 0)),
        ReferenceTransform(Vec3(4, 0, -2), yaw=0.9),
        ReferenceTransform(Vec3(-3, 0.5, 6), yaw=-2.2),
    ]
    mixer = Mixer()
    for i, ref in enumerate(refs):
        mixer.bind_avatar(binding(f"A{i}", 0, ref=ref))
    quats = (UnitQuat.from_yaw(0.3), UnitQuat.from_pitch(-0.4),
             UnitQuat.from_roll(0.8), UnitQuat.from_yaw(1.2))
    local = Vec3(0.6, 0.95, -0.4)
    out = mixer.tick(TickInputs(frames={0: frame(0, 0, local, quats)}))

    limb_lists = [out.poses[f"A{i}"].joint_rotations for i in range(3)]
    assert limb_lists[0] == limb_lists[1] == limb_lists[2]
    for i, ref in enumerate(refs):
        pos = out.poses[f"A{i}"].position
        back = ref.rotation().conjugate().rotate(pos.sub(ref.translation))
        assert back.x == pytest.approx(local.x, abs=1e-9)
        assert back.y == pytest.approx(local.y, abs=1e-9)
        assert back.z == pytest.approx(local.z, abs=1e-9)


def test_set_ref_cue_takes_effect():
    sheet = load_cue_sheet(json.dumps({"cues": [{"id": "Q1", "actions": [
        {"kind": "set_ref", "avatar": "A1", "pos": [1, 0, 2], "yaw_deg": 90}]}]}))
    mixer = Mixer(cue_engine=CueEngine(sheet))
    mixer.bind_avatar(binding("A1"))
    out = mixer.tick(TickInputs(events=(FireCueEvent("Q1"),)))
    assert any(e[1] == "set_ref" for e in out.events)
    snap = mixer.snapshot()
    assert snap["avatars"][0]["ref"]["yaw"] == pytest.approx(math.pi / 2)
    assert out.poses["A1"].position == Vec3(1, 0, 2)


def test_determinism_identical_input_scripts():
    def run() -> list:
        mixer = Mixer(cue_engine=watch_sheet({"kind": "point", "pos": [2, 0, 9]}))
        mixer.bind_avatar(binding("A1"))
        mixer.bind_avatar(binding("A2", 0, ref=ReferenceTransform(Vec3(1, 0, 1))))
        outs = []
        for i in range(120):
            inputs = TickInputs(
                frames={0: frame(0, i, Vec3(math.sin(i / 7) * 0.8, 0.9, math.cos(i / 9)))},
                axes={"A1": AxisInput(forward=0.7, yaw_rate=0.2)},
                events=(FireCueEvent("W"),) if i == 50 else (),
            )
            outs.append(mixer.tick(inputs))
        return outs

    a, b = run(), run()
    assert a == b


def test_snapshot_round_trips_through_json():
    mixer = Mixer(cue_engine=watch_sheet({"kind": "point", "pos": [1, 0, 1]}))
    mixer.bind_avatar(binding("A1"))
    mixer.tick(TickInputs(events=(
        OwnershipEvent("A1", ChannelId.ROOT_XY, blend(0.25)),
        FireCueEvent("W"),
    )))
    snap = mixer.snapshot()
    assert json.loads(json.dumps(snap)) == snap
    assert snap["ownership"]["A1"]["root_xy"] == "blend:0.25"
    assert snap["cues"][0]["fire_count"] == 1
    assert snap["avatars"][0]["watch"] == {"kind": "point", "pos": [1.0, 0.0, 1.0]}

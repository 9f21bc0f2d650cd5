"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s to see them on success).

Criteria and tolerances:
  1. transform oracle        1000 random cases vs homogeneous matrices, <= 1e-6, < 1 s
  2. protocol round trips    10,000 random frames per protocol, bit-exact
  3. pathfinder equivalence  100 random 20x20 grids (20% blocked), exact, < 5 s
  4. determinism             record -> replay "identical", two consecutive runs
  5. crowd                   2 streams x 3 avatars, 6 poses/tick for 3000 ticks,
                             fanout independence every tick, 0 dropped messages
  6. space expansion         2 m confined input -> > 6 m output; negative control fails
  7. watch accuracy          head yaw error < 1e-6 rad within 1 tick of a switch
  8. real-time budget        6 avatars x 50 joints at 100 Hz, mean and p99 < 10 ms
"""

import math
import random
import time

import numpy as np
import pytest

from stagelink import cli
from stagelink.bus import SessionLog, decode_pose_msg, encode_pose_msg, replay
from stagelink.mocap import decode_frame, encode_frame
from stagelink.pathfind import NavGrid, NoPath, plan
from stagelink.pose import RootPose, TransformDelta, Vec3, WorldPose, apply_delta, compose
from stagelink.scenarios import run_crowd, run_walking, run_watching

from oracles import bfs_path_length, quat_to_matrix, ref_homogeneous, transform_point
from test_mocap import random_frame
from test_pose import random_ref, random_root
from test_bus import random_pose


def report(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def crowd_report():
    return run_crowd(ticks=3000)


def test_criterion_transform_oracle():
    rng = random.Random(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        ref = random_ref(rng)
        local = random_root(rng)
        pos, rot = compose(ref, local)
        m = ref_homogeneous(ref.translation.as_tuple(), ref.yaw, ref.pitch)
        expect_pos = transform_point(m, local.position.as_tuple())
        expect_rot = m[:3, :3] @ quat_to_matrix(
            local.rotation.w, local.rotation.x, local.rotation.y, local.rotation.z
        )
        got_rot = quat_to_matrix(rot.w, rot.x, rot.y, rot.z)
        worst = max(
            worst,
            float(np.max(np.abs(np.array([pos.x, pos.y, pos.z]) - expect_pos))),
            float(np.max(np.abs(got_rot - expect_rot))),
        )

        delta = TransformDelta(
            d_forward=rng.uniform(-1, 1),
            d_lateral=rng.uniform(-1, 1),
            d_vertical=rng.uniform(-1, 1),
        )
        moved = apply_delta(ref, delta)
        step = transform_point(
            ref_homogeneous((0, 0, 0), ref.yaw, 0.0),
            (delta.d_lateral, delta.d_vertical, delta.d_forward),
        )
        expect_t = np.array(ref.translation.as_tuple()) + step
        worst = max(worst, float(np.max(np.abs(
            np.array(moved.translation.as_tuple()) - expect_t))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 1.0
    report("transform_oracle",
           ok, f"worst component error {worst:.2e} over 1000 cases in {elapsed:.2f} s")


def test_criterion_protocol_round_trips():
    rng = random.Random(77)
    checked = 0
    for _ in range(10_000):
        frame = random_frame(rng, rng.randrange(0, 41))
        data = encode_frame(frame)
        back = decode_frame(data)
        assert back == frame
        assert encode_frame(back) == data
        checked += 1
    for _ in range(10_000):
        pose = random_pose(rng, rng.randrange(0, 41))
        tick, wid = rng.randrange(2**63), rng.randrange(2**16)
        data = encode_pose_msg(tick, wid, pose)
        msg = decode_pose_msg(data)
        assert (msg.tick_no, msg.avatar_id) == (tick, wid)
        assert encode_pose_msg(
            msg.tick_no, msg.avatar_id,
            WorldPose(msg.position, msg.rotation, msg.joint_rotations)) == data
        checked += 1
    report("protocol_round_trips", True, f"{checked} random frames round-tripped bit-exact")


def test_criterion_pathfinder_equivalence():
    rng = random.Random(404)
    start = time.perf_counter()
    solved = unreachable = 0
    grids = 0
    while grids < 100:
        blocked = {
            (c, r) for c in range(20) for r in range(20) if rng.random() < 0.2
        }
        s = (rng.randrange(20), rng.randrange(20))
        g = (rng.randrange(20), rng.randrange(20))
        if s in blocked or g in blocked:
            continue
        grids += 1
        oracle = bfs_path_length(20, 20, blocked, s, g)
        grid = NavGrid(20, 20, 1.0, frozenset(blocked), Vec3())
        if oracle is None:
            with pytest.raises(NoPath):
                plan(grid, s, g)
            unreachable += 1
            continue
        path = plan(grid, s, g)
        assert len(path.cells) == oracle, f"grid {grids}: {len(path.cells)} vs {oracle}"
        solved += 1
    elapsed = time.perf_counter() - start
    ok = elapsed < 5.0
    report("pathfinder_equivalence", ok,
           f"{solved} solved + {unreachable} no-path grids match BFS exactly in {elapsed:.2f} s")


def test_criterion_determinism(tmp_path):
    logs = []
    for i in (1, 2):
        path = tmp_path / f"walking{i}.log"
        assert cli.main(["scenario", "walking", "--ticks", "600",
                         "--record", str(path)]) == 0
        assert cli.main(["replay", str(path), "--verify"]) == 0
        verdict = replay(SessionLog.load(path))
        assert verdict.identical and verdict.ticks == 600
        logs.append(path.read_bytes())
    ok = logs[0] == logs[1]
    report("determinism", ok,
           "record->replay identical on both runs; the two session logs are byte-equal")


def test_criterion_crowd(crowd_report):
    r = crowd_report
    by_name = {a.name: a for a in r.assertions}
    ok = (
        by_name["six_poses_per_tick"].passed
        and by_name["fanout_independence"].passed
        and by_name["zero_pose_drops"].passed
        and r.ticks == 3000
    )
    report("crowd_scenario", ok,
           f"6 poses/tick for {r.ticks} ticks, fanout independent, "
           f"{r.extras['pose_messages']['dropped']} drops")


def test_criterion_space_expansion():
    positive = run_walking(ticks=1000)
    confined = [a for a in positive.assertions if a.name.startswith("input_confined")]
    expansion = [a for a in positive.assertions if a.name.startswith("space_expansion")]
    ok = all(a.passed for a in confined) and all(a.passed for a in expansion)

    negative = run_walking(ticks=1000, manipulator_active=False)
    neg_expansion = [a for a in negative.assertions if a.name.startswith("space_expansion")]
    ok = ok and all(not a.passed for a in neg_expansion)
    displacement = min(positive.extras["displacements"].values())
    report("space_expansion", ok,
           f"confined 2 m input expanded to {displacement:.1f} m; "
           "negative control correctly fails")


def test_criterion_watch_accuracy():
    r = run_watching(ticks=900)
    errs = r.extras["max_errors_rad"]
    ok = r.failed == 0 and errs["avatar"] < 1e-6 and errs["performer"] < 1e-6
    report("watch_accuracy", ok,
           f"max head-yaw error {max(errs.values()):.2e} rad, "
           "switch honored within 1 tick")


def test_criterion_real_time_budget(crowd_report):
    t = crowd_report.timing
    ok = t["mean_ms"] < 10.0 and t["p99_ms"] < 10.0
    report("real_time_budget", ok,
           f"6x50-joint avatars at 100 Hz: mean {t['mean_ms']:.3f} ms, "
           f"p99 {t['p99_ms']:.3f} ms (budget 10 ms)")

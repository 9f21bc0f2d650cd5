"""Synthetic walk-cycle takes for rehearsal and scenario runs.

No recorded suit data ships with the engine, so the scenario rigs walk on
procedurally generated BVH: the root pads around inside a two-meter
footprint while limbs swing sinusoidally. Generation is deterministic;
the committed assets under assets/ are exactly what generate() writes.

Run `python -m stagelink.fixtures <dir>` to regenerate them.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

# name, parent name (None = root), offset, is_leaf
_CORE_RIG = [
    ("Hips", None, (0.0, 0.9, 0.0), False),
    ("Spine", "Hips", (0.0, 0.15, 0.0), False),
    ("Chest", "Spine", (0.0, 0.25, 0.0), False),
    ("Head", "Chest", (0.0, 0.3, 0.0), True),
    ("LeftUpLeg", "Hips", (0.1, -0.05, 0.0), False),
    ("LeftLeg", "LeftUpLeg", (0.0, -0.4, 0.0), False),
    ("LeftFoot", "LeftLeg", (0.0, -0.4, 0.0), True),
    ("RightUpLeg", "Hips", (-0.1, -0.05, 0.0), False),
    ("RightLeg", "RightUpLeg", (0.0, -0.4, 0.0), False),
    ("RightFoot", "RightLeg", (0.0, -0.4, 0.0), True),
    ("LeftArm", "Chest", (0.18, 0.05, 0.0), False),
    ("LeftForeArm", "LeftArm", (0.25, 0.0, 0.0), False),
    ("LeftHand", "LeftForeArm", (0.22, 0.0, 0.0), True),
    ("RightArm", "Chest", (-0.18, 0.05, 0.0), False),
    ("RightForeArm", "RightArm", (-0.25, 0.0, 0.0), False),
    ("RightHand", "RightForeArm", (-0.22, 0.0, 0.0), True),
]


def _extended_rig() -> list:
    """50-joint variant: extra spine links, a neck, and finger chains."""
    rig = [list(j) for j in _CORE_RIG]
    by_name = {j[0]: j for j in rig}
    # Three extra spine segments between Chest and Head, plus a neck.
    by_name["Head"][1] = "Neck"
    extra = [
        ("Spine1", "Chest", (0.0, 0.08, 0.0), False),
        ("Spine2", "Spine1", (0.0, 0.08, 0.0), False),
        ("Spine3", "Spine2", (0.0, 0.08, 0.0), False),
        ("Neck", "Spine3", (0.0, 0.08, 0.0), False),
    ]
    idx = [j[0] for j in rig].index("Head")
    rig[idx:idx] = [list(j) for j in extra]
    for hand, sign in (("LeftHand", 1.0), ("RightHand", -1.0)):
        by_name = {j[0]: j for j in rig}
        by_name[hand][3] = False
        for f in range(5):
            parent = hand
            for seg in range(3):
                name = f"{hand}Finger{f}_{seg}"
                rig.append([name, parent, (sign * 0.03, 0.0, 0.01 * (f - 2)), seg == 2])
                parent = name
    assert len(rig) == 50, len(rig)
    return rig


def _swing(name: str, phase: float) -> tuple[float, float, float]:
    """Per-joint Euler swing (Z, X, Y degrees) at loop phase [0, 1)."""
    s = math.sin(2 * math.pi * phase)
    c = math.cos(2 * math.pi * phase)
    if "UpLeg" in name:
        side = 1.0 if name.startswith("Left") else -1.0
        return (0.0, 30.0 * s * side, 0.0)
    if name.endswith("Leg"):
        side = 1.0 if name.startswith("Left") else -1.0
        return (0.0, max(0.0, 35.0 * c * side), 0.0)
    if "Foot" in name:
        return (0.0, 10.0 * s, 0.0)
    if "Arm" in name or "Hand" in name:
        side = -1.0 if name.startswith("Left") else 1.0
        return (8.0 * s, 20.0 * s * side, 0.0)
    if "Finger" in name:
        return (0.0, 15.0 + 10.0 * s, 0.0)
    if name in ("Spine", "Spine1", "Spine2", "Spine3", "Chest"):
        return (3.0 * s, 0.0, 4.0 * c)
    if name in ("Neck", "Head"):
        return (0.0, 2.0 * c, 6.0 * s)
    return (0.0, 0.0, 0.0)


def walk_cycle_bvh(rig: list, frames: int = 120, fps: float = 100.0) -> str:
    """One seamless walk loop. The root stays inside x, z in [-1, 1]."""
    children: dict[str | None, list] = {}
    for j in rig:
        children.setdefault(j[1], []).append(j)

    lines = ["HIERARCHY"]
    order: list[str] = []

    def emit(joint, depth: int, keyword: str) -> None:
        name, _, offset, is_leaf = joint
        pad = "\t" * depth
        lines.append(f"{pad}{keyword} {name}")
        lines.append(f"{pad}{{")
        lines.append(f"{pad}\tOFFSET {offset[0]:.6f} {offset[1]:.6f} {offset[2]:.6f}")
        if keyword == "ROOT":
            lines.append(
                f"{pad}\tCHANNELS 6 Xposition Yposition Zposition "
                "Zrotation Xrotation Yrotation"
            )
        else:
            lines.append(f"{pad}\tCHANNELS 3 Zrotation Xrotation Yrotation")
        order.append(name)
        for child in children.get(name, []):
            emit(child, depth + 1, "JOINT")
        if is_leaf or not children.get(name):
            lines.append(f"{pad}\tEnd Site")
            lines.append(f"{pad}\t{{")
            lines.append(f"{pad}\t\tOFFSET 0.000000 0.050000 0.000000")
            lines.append(f"{pad}\t}}")
        lines.append(f"{pad}}}")

    emit(children[None][0], 0, "ROOT")
    lines.append("MOTION")
    lines.append(f"Frames: {frames}")
    lines.append(f"Frame Time: {1.0 / fps:.6f}")

    for i in range(frames):
        phase = i / frames
        values: list[float] = [
            0.2 * math.sin(4 * math.pi * phase),          # x pacing sway
            0.9 + 0.03 * math.sin(8 * math.pi * phase),   # bob
            0.95 * math.sin(2 * math.pi * phase),         # z stride, < 1 m each way
        ]
        for name in order:
            values.extend(_swing(name, phase))
        lines.append(" ".join(f"{v:.6f}" for v in values))
    return "\n".join(lines) + "\n"


def generate(out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, rig in (("walk16.bvh", _CORE_RIG), ("walk50.bvh", _extended_rig())):
        path = out_dir / name
        path.write_text(walk_cycle_bvh(rig), encoding="utf-8")
        written.append(path)
    return written


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else Path(__file__).parent / "assets"
    for p in generate(target):
        print(p)

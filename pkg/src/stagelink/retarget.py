"""Name-based pose retargeting between skeletons.

Mapping is a straight rotation copy per joint name: no bone-length
compensation, no IK. Target joints with no mapped source stay in bind
pose so the output never depends on history.
"""

from __future__ import annotations

import json

from .mocap import MocapFrame
from .pose import IDENTITY_QUAT, RootPose, SkeletonTopology, UnitQuat


class UnknownSourceJoint(ValueError):
    pass


class UnknownTargetJoint(ValueError):
    pass


class DuplicateTarget(ValueError):
    pass


class TopologyMismatch(ValueError):
    pass


class BoneMap:
    """Validated source-joint to target-joint assignment, injective on
    target names."""

    def __init__(self, entries: dict[str, str], src: SkeletonTopology, dst: SkeletonTopology):
        seen_targets: set[str] = set()
        pairs: list[tuple[int, int]] = []
        for src_name, dst_name in entries.items():
            si = src.index_of(src_name)
            if si is None:
                raise UnknownSourceJoint(src_name)
            di = dst.index_of(dst_name)
            if di is None:
                raise UnknownTargetJoint(dst_name)
            if dst_name in seen_targets:
                raise DuplicateTarget(dst_name)
            seen_targets.add(dst_name)
            pairs.append((si, di))
        self.entries = dict(entries)
        self.pairs = tuple(pairs)
        self.src_joint_count = src.joint_count
        self.dst_joint_count = dst.joint_count

    @classmethod
    def by_name(cls, src: SkeletonTopology, dst: SkeletonTopology) -> "BoneMap":
        """Map every target joint whose name also exists in the source."""
        entries = {j.name: j.name for j in dst.joints if src.index_of(j.name) is not None}
        return cls(entries, src, dst)

    def __len__(self) -> int:
        return len(self.pairs)


def load_bone_map(json_text: str, src: SkeletonTopology, dst: SkeletonTopology) -> BoneMap:
    """Parse and validate a bone map document: {"map": {src: dst, ...}}."""
    doc = json.loads(json_text)
    if not isinstance(doc, dict) or not isinstance(doc.get("map"), dict):
        raise ValueError('bone map document must be {"map": {...}}')
    return BoneMap(doc["map"], src, dst)


def retarget_pose(
    src_frame: MocapFrame, bone_map: BoneMap, dst: SkeletonTopology
) -> tuple[RootPose, tuple[UnitQuat, ...]]:
    """Copy mapped joint rotations onto the target skeleton.

    Returns the source-local root pose (position from the stream, rotation
    from the source root joint) and the target's joint rotation list.
    """
    if len(src_frame.joint_rotations) != bone_map.src_joint_count:
        raise TopologyMismatch(
            f"frame has {len(src_frame.joint_rotations)} joints, "
            f"map expects {bone_map.src_joint_count}"
        )
    rotations = [IDENTITY_QUAT] * dst.joint_count
    for si, di in bone_map.pairs:
        rotations[di] = src_frame.joint_rotations[si]
    root_rotation = src_frame.joint_rotations[0] if src_frame.joint_rotations else IDENTITY_QUAT
    return RootPose(src_frame.root_position, root_rotation), tuple(rotations)

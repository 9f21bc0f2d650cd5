"""Geometric core: vectors, unit quaternions, and the reference transform.

Every avatar lives in a right-handed, Y-up world measured in meters, with
forward along +Z. An avatar's mocap-relative root pose is placed into the
world by a reference transform made of a translation, a yaw (about world
up, +Y) and a pitch (about the heading-local +X axis, applied after yaw):

    world_position = R_yaw . R_pitch . local_position + translation
    world_rotation = Q_yaw . Q_pitch . local_rotation

Quaternions are stored (w, x, y, z) and renormalized whenever composition
lets the norm drift beyond 1e-6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

TAU = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

# Norm drift allowed before a quaternion product gets renormalized.
_NORM_DRIFT = 1e-6


def wrap_angle(a: float) -> float:
    """Wrap an angle in radians to (-pi, pi]."""
    r = math.remainder(a, TAU)
    if r <= -math.pi:
        r += TAU
    return r


def clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


@dataclass(frozen=True)
class Vec3:
    """A point or displacement in meters. Components must be finite."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError(f"non-finite Vec3 components: ({self.x}, {self.y}, {self.z})")

    def add(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def sub(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scale(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class UnitQuat:
    """Rotation quaternion, scalar part first.

    Constructors produce exactly normalized values. Wire-decoded rotations
    may carry up to 1% drift (see the stream decoder's acceptance window);
    they regain unit norm on their first composition.
    """

    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def identity(cls) -> "UnitQuat":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_axis_angle(cls, ax: float, ay: float, az: float, angle: float) -> "UnitQuat":
        n = math.sqrt(ax * ax + ay * ay + az * az)
        if n < 1e-12:
            return cls.identity()
        s = math.sin(0.5 * angle) / n
        return cls(math.cos(0.5 * angle), ax * s, ay * s, az * s)

    @classmethod
    def from_yaw(cls, yaw: float) -> "UnitQuat":
        """Rotation about world up (+Y)."""
        return cls(math.cos(0.5 * yaw), 0.0, math.sin(0.5 * yaw), 0.0)

    @classmethod
    def from_pitch(cls, pitch: float) -> "UnitQuat":
        """Rotation about the local lateral axis (+X)."""
        return cls(math.cos(0.5 * pitch), math.sin(0.5 * pitch), 0.0, 0.0)

    @classmethod
    def from_roll(cls, roll: float) -> "UnitQuat":
        """Rotation about the local forward axis (+Z)."""
        return cls(math.cos(0.5 * roll), 0.0, 0.0, math.sin(0.5 * roll))

    def norm(self) -> float:
        return math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)

    def normalized(self) -> "UnitQuat":
        n = self.norm()
        if n < 1e-12:
            return UnitQuat.identity()
        return UnitQuat(self.w / n, self.x / n, self.y / n, self.z / n)

    def conjugate(self) -> "UnitQuat":
        return UnitQuat(self.w, -self.x, -self.y, -self.z)

    def dot(self, other: "UnitQuat") -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z

    def mul(self, other: "UnitQuat") -> "UnitQuat":
        """Hamilton product self * other, renormalized if drift exceeds 1e-6."""
        w = self.w * other.w - self.x * other.x - self.y * other.y - self.z * other.z
        x = self.w * other.x + self.x * other.w + self.y * other.z - self.z * other.y
        y = self.w * other.y - self.x * other.z + self.y * other.w + self.z * other.x
        z = self.w * other.z + self.x * other.y - self.y * other.x + self.z * other.w
        q = UnitQuat(w, x, y, z)
        if abs(q.norm() - 1.0) > _NORM_DRIFT:
            return q.normalized()
        return q

    def rotate(self, v: Vec3) -> Vec3:
        """Rotate a vector: v' = v + 2w(q x v) + 2 q x (q x v)."""
        qx, qy, qz = self.x, self.y, self.z
        ux = qy * v.z - qz * v.y
        uy = qz * v.x - qx * v.z
        uz = qx * v.y - qy * v.x
        vx = qy * uz - qz * uy
        vy = qz * ux - qx * uz
        vz = qx * uy - qy * ux
        return Vec3(
            v.x + 2.0 * (self.w * ux + vx),
            v.y + 2.0 * (self.w * uy + vy),
            v.z + 2.0 * (self.w * uz + vz),
        )

    def slerp(self, other: "UnitQuat", t: float) -> "UnitQuat":
        """Shortest-arc spherical interpolation from self (t=0) to other (t=1)."""
        d = self.dot(other)
        if d < 0.0:
            other = UnitQuat(-other.w, -other.x, -other.y, -other.z)
            d = -d
        if d > 0.9995:
            # Nearly parallel: lerp and renormalize.
            return UnitQuat(
                self.w + (other.w - self.w) * t,
                self.x + (other.x - self.x) * t,
                self.y + (other.y - self.y) * t,
                self.z + (other.z - self.z) * t,
            ).normalized()
        theta = math.acos(clamp(d, -1.0, 1.0))
        s = math.sin(theta)
        a = math.sin((1.0 - t) * theta) / s
        b = math.sin(t * theta) / s
        return UnitQuat(
            a * self.w + b * other.w,
            a * self.x + b * other.x,
            a * self.y + b * other.y,
            a * self.z + b * other.z,
        ).normalized()


IDENTITY_QUAT = UnitQuat.identity()


@dataclass(frozen=True)
class ReferenceTransform:
    """Placement of an avatar's mocap-local frame into the world.

    Yaw is normalized to (-pi, pi] and pitch clamped to [-pi/2, pi/2] on
    construction, so every instance is in canonical form.
    """

    translation: Vec3 = field(default_factory=Vec3)
    yaw: float = 0.0
    pitch: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))
        object.__setattr__(self, "pitch", clamp(self.pitch, -HALF_PI, HALF_PI))

    @classmethod
    def identity(cls) -> "ReferenceTransform":
        return cls()

    def rotation(self) -> UnitQuat:
        """Full orientation of the reference frame: Q_yaw * Q_pitch."""
        return UnitQuat.from_yaw(self.yaw).mul(UnitQuat.from_pitch(self.pitch))

    def with_translation(self, translation: Vec3) -> "ReferenceTransform":
        return replace(self, translation=translation)


@dataclass(frozen=True)
class RootPose:
    """Root of a skeleton relative to its stream origin (mocap space)."""

    position: Vec3 = field(default_factory=Vec3)
    rotation: UnitQuat = IDENTITY_QUAT


@dataclass(frozen=True)
class Joint:
    name: str
    parent_index: int | None
    bind_offset: Vec3


class SkeletonTopology:
    """Joint hierarchy in topological order: index 0 is the unique root and
    every parent index precedes its children."""

    def __init__(self, joints: list[Joint] | tuple[Joint, ...]):
        joints = tuple(joints)
        if not joints:
            raise ValueError("topology needs at least one joint")
        if joints[0].parent_index is not None:
            raise ValueError("joint 0 must be the root (no parent)")
        names: set[str] = set()
        for i, j in enumerate(joints):
            if i > 0 and (j.parent_index is None or not 0 <= j.parent_index < i):
                raise ValueError(f"joint {j.name!r}: parent index must precede joint index {i}")
            if j.name in names:
                raise ValueError(f"duplicate joint name {j.name!r}")
            names.add(j.name)
        self.joints = joints
        self._index = {j.name: i for i, j in enumerate(joints)}

    @property
    def joint_count(self) -> int:
        return len(self.joints)

    def index_of(self, name: str) -> int | None:
        return self._index.get(name)

    def parent_chain(self, index: int) -> list[int]:
        """Indices from the root down to (and including) `index`."""
        chain = [index]
        while True:
            p = self.joints[chain[-1]].parent_index
            if p is None:
                break
            chain.append(p)
        chain.reverse()
        return chain

    def to_dict(self) -> dict:
        return {
            "joints": [
                {"name": j.name, "parent": j.parent_index, "offset": list(j.bind_offset.as_tuple())}
                for j in self.joints
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SkeletonTopology":
        return cls(
            [
                Joint(j["name"], j["parent"], Vec3(*j["offset"]))
                for j in data["joints"]
            ]
        )

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SkeletonTopology) and self.joints == other.joints

    def __repr__(self) -> str:
        return f"SkeletonTopology({self.joint_count} joints, root={self.joints[0].name!r})"


@dataclass(frozen=True)
class WorldPose:
    """World-space pose of one avatar at one tick.

    `rotation` carries the full root orientation; `joint_rotations` holds
    the local rotation of every joint in topology order with index 0 fixed
    to identity (the root's orientation is not duplicated there).
    """

    position: Vec3
    rotation: UnitQuat
    joint_rotations: tuple[UnitQuat, ...]


@dataclass(frozen=True)
class TransformDelta:
    """Heading-relative nudge applied to a reference transform."""

    d_forward: float = 0.0
    d_lateral: float = 0.0
    d_vertical: float = 0.0
    d_yaw: float = 0.0
    d_pitch: float = 0.0

    def is_zero(self) -> bool:
        return not (self.d_forward or self.d_lateral or self.d_vertical or self.d_yaw or self.d_pitch)


ZERO_DELTA = TransformDelta()


def compose(ref: ReferenceTransform, local: RootPose) -> tuple[Vec3, UnitQuat]:
    """Place a mocap-local root pose into the world.

    Returns (position, rotation) with position = R_yaw.R_pitch.local + t
    and rotation = Q_yaw.Q_pitch.local_rotation.
    """
    q = ref.rotation()
    pos = q.rotate(local.position).add(ref.translation)
    return pos, q.mul(local.rotation)


def apply_delta(ref: ReferenceTransform, delta: TransformDelta) -> ReferenceTransform:
    """Advance a reference transform by a heading-relative delta.

    The translational part (lateral, vertical, forward) is rotated by the
    current yaw only, so the vertical component always moves along world
    up. Yaw wraps; pitch clamps to [-pi/2, pi/2].
    """
    if delta.is_zero():
        return ref
    step = UnitQuat.from_yaw(ref.yaw).rotate(
        Vec3(delta.d_lateral, delta.d_vertical, delta.d_forward)
    )
    return ReferenceTransform(
        translation=ref.translation.add(step),
        yaw=wrap_angle(ref.yaw + delta.d_yaw),
        pitch=clamp(ref.pitch + delta.d_pitch, -HALF_PI, HALF_PI),
    )


def heading_frame(ref: ReferenceTransform) -> UnitQuat:
    """Yaw-only orientation of the reference frame, pitch discarded."""
    return UnitQuat.from_yaw(ref.yaw)

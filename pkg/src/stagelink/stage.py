"""Stage geometry: the reduced acting volume each performer moves in, the
rigid mapping from physical-stage coordinates into the digital world, and
the yaw-only gaze used to aim an avatar's head at something on stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .pose import UnitQuat, Vec3


class DegenerateTarget(ValueError):
    pass


@dataclass(frozen=True)
class Volume:
    """Axis-aligned box; min strictly below max on every axis."""

    vmin: Vec3
    vmax: Vec3

    def __post_init__(self) -> None:
        if not (self.vmin.x < self.vmax.x and self.vmin.y < self.vmax.y and self.vmin.z < self.vmax.z):
            raise ValueError("volume min must be strictly below max per axis")

    def to_dict(self) -> dict:
        return {"min": list(self.vmin.as_tuple()), "max": list(self.vmax.as_tuple())}

    @classmethod
    def from_dict(cls, data: dict) -> "Volume":
        return cls(Vec3(*data["min"]), Vec3(*data["max"]))


def clamp_to_volume(p: Vec3, vol: Volume) -> tuple[Vec3, bool]:
    """Clamp a point into the box. The boundary counts as inside; the flag
    reports whether any component moved."""
    cx = min(max(p.x, vol.vmin.x), vol.vmax.x)
    cy = min(max(p.y, vol.vmin.y), vol.vmax.y)
    cz = min(max(p.z, vol.vmin.z), vol.vmax.z)
    clamped = (cx != p.x) or (cy != p.y) or (cz != p.z)
    return (Vec3(cx, cy, cz) if clamped else p), clamped


@dataclass(frozen=True)
class StageCalibration:
    """Per-stream acting volumes plus the physical-to-digital placement.

    The placement is rigid: rotate by yaw about world up, then translate.
    Loaded once per scene and read-only afterwards.
    """

    c_volumes: dict[int, Volume] = field(default_factory=dict)
    a_to_b_translation: Vec3 = field(default_factory=Vec3)
    a_to_b_yaw: float = 0.0

    def volume_for(self, stream_id: int) -> Volume | None:
        return self.c_volumes.get(stream_id)

    def to_dict(self) -> dict:
        return {
            "c_volumes": {str(k): v.to_dict() for k, v in sorted(self.c_volumes.items())},
            "a_to_b": {
                "translation": list(self.a_to_b_translation.as_tuple()),
                "yaw_deg": math.degrees(self.a_to_b_yaw),
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StageCalibration":
        a_to_b = data.get("a_to_b", {})
        return cls(
            c_volumes={int(k): Volume.from_dict(v) for k, v in data.get("c_volumes", {}).items()},
            a_to_b_translation=Vec3(*a_to_b.get("translation", (0, 0, 0))),
            a_to_b_yaw=math.radians(a_to_b.get("yaw_deg", 0.0)),
        )


def map_a_to_b(p_a: Vec3, calib: StageCalibration) -> Vec3:
    """Carry a physical-stage point into digital coordinates."""
    return UnitQuat.from_yaw(calib.a_to_b_yaw).rotate(p_a).add(calib.a_to_b_translation)


def look_at_yaw(from_pos: Vec3, target: Vec3) -> float:
    """Yaw turning forward (+Z) toward the horizontal projection of the
    target direction. Raises DegenerateTarget when the target sits on the
    same vertical axis (horizontal distance at or below 1e-6 m)."""
    dx = target.x - from_pos.x
    dz = target.z - from_pos.z
    if math.hypot(dx, dz) <= 1e-6:
        raise DegenerateTarget(f"horizontal distance {math.hypot(dx, dz):.2e} m")
    return math.atan2(dx, dz)


class WatchKind(Enum):
    AVATAR = "avatar"
    PERFORMER = "performer"
    POINT = "point"


@dataclass(frozen=True)
class WatchTarget:
    """What an avatar's head tracks: another avatar, a performer standing
    on the physical stage, or a fixed digital-space point."""

    kind: WatchKind
    avatar_id: str | None = None
    position: Vec3 | None = None

    @classmethod
    def avatar(cls, avatar_id: str) -> "WatchTarget":
        return cls(WatchKind.AVATAR, avatar_id=avatar_id)

    @classmethod
    def performer(cls, position_a: Vec3) -> "WatchTarget":
        return cls(WatchKind.PERFORMER, position=position_a)

    @classmethod
    def point(cls, position_b: Vec3) -> "WatchTarget":
        return cls(WatchKind.POINT, position=position_b)

    def to_dict(self) -> dict:
        if self.kind is WatchKind.AVATAR:
            return {"kind": "avatar", "id": self.avatar_id}
        return {"kind": self.kind.value, "pos": list(self.position.as_tuple())}

    @classmethod
    def from_dict(cls, data: dict) -> "WatchTarget":
        kind = WatchKind(data["kind"])
        if kind is WatchKind.AVATAR:
            return cls.avatar(data["id"])
        return cls(kind, position=Vec3(*data["pos"]))

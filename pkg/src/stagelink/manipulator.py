"""Operator-side control: axis input shaping and the channel-ownership
table that decides who drives each slice of an avatar's motion.

Avatar motion splits into six channels (planar root position, vertical,
yaw, pitch, limbs, head). Each is owned by the mocap performer, the
manipulator, a procedural driver, or a weighted blend of mocap with the
other active driver. Ownership changes queue up and land at a tick
boundary so one tick always resolves against a single table snapshot.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .pose import TransformDelta, clamp


class ChannelId(Enum):
    ROOT_XY = "root_xy"
    ROOT_VERTICAL = "root_vertical"
    ROOT_YAW = "root_yaw"
    ROOT_PITCH = "root_pitch"
    LIMBS = "limbs"
    HEAD = "head"

    @classmethod
    def parse(cls, name: str) -> "ChannelId":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown channel {name!r}") from None


class OwnerKind(Enum):
    MOCAP = "mocap"
    MANIPULATOR = "manipulator"
    PROCEDURAL = "procedural"
    BLEND = "blend"

    @classmethod
    def parse(cls, name: str) -> "OwnerKind":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValueError(f"unknown owner {name!r}") from None


@dataclass(frozen=True)
class ChannelOwner:
    """Owner of one channel; weight is the manipulator/procedural share
    and only meaningful for BLEND."""

    kind: OwnerKind
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.kind is OwnerKind.BLEND and not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"blend weight {self.weight} outside [0, 1]")

    def describe(self) -> str:
        if self.kind is OwnerKind.BLEND:
            return f"blend:{self.weight:g}"
        return self.kind.value


MOCAP = ChannelOwner(OwnerKind.MOCAP)
MANIPULATOR = ChannelOwner(OwnerKind.MANIPULATOR)
PROCEDURAL = ChannelOwner(OwnerKind.PROCEDURAL)


def blend(weight: float) -> ChannelOwner:
    return ChannelOwner(OwnerKind.BLEND, weight)


class UnknownAvatar(KeyError):
    pass


class OwnershipTable:
    """Immutable (avatar, channel) -> owner assignment.

    set() returns a new table, so the mixer can hand one snapshot to a
    whole tick while the next tick's table is being built.
    """

    def __init__(self, avatar_ids: tuple[str, ...], entries: dict | None = None):
        self.avatar_ids = tuple(avatar_ids)
        self._entries: dict[tuple[str, ChannelId], ChannelOwner] = {
            (a, ch): MOCAP for a in avatar_ids for ch in ChannelId
        }
        if entries:
            self._entries.update(entries)

    def owner(self, avatar_id: str, channel: ChannelId) -> ChannelOwner:
        try:
            return self._entries[(avatar_id, channel)]
        except KeyError:
            raise UnknownAvatar(avatar_id) from None

    def set(self, avatar_id: str, channel: ChannelId, owner: ChannelOwner) -> "OwnershipTable":
        if avatar_id not in self.avatar_ids:
            raise UnknownAvatar(avatar_id)
        entries = dict(self._entries)
        entries[(avatar_id, channel)] = owner
        return OwnershipTable(self.avatar_ids, entries)

    def with_avatar(self, avatar_id: str) -> "OwnershipTable":
        if avatar_id in self.avatar_ids:
            return self
        return OwnershipTable(self.avatar_ids + (avatar_id,), self._entries)

    def as_dict(self) -> dict[str, dict[str, str]]:
        out: dict[str, dict[str, str]] = {a: {} for a in self.avatar_ids}
        for (a, ch), owner in self._entries.items():
            out[a][ch.value] = owner.describe()
        return out

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, OwnershipTable)
            and self.avatar_ids == other.avatar_ids
            and self._entries == other._entries
        )


set_ownership = OwnershipTable.set


@dataclass(frozen=True)
class AxisInput:
    """One manipulator sample; every component is clamped to [-1, 1]."""

    forward: float = 0.0
    lateral: float = 0.0
    vertical: float = 0.0
    yaw_rate: float = 0.0
    pitch_rate: float = 0.0
    timestamp_us: int = 0

    def __post_init__(self) -> None:
        for name in ("forward", "lateral", "vertical", "yaw_rate", "pitch_rate"):
            object.__setattr__(self, name, clamp(float(getattr(self, name)), -1.0, 1.0))


ZERO_AXES = AxisInput()


@dataclass(frozen=True)
class ManipulatorConfig:
    """Axis-to-motion scaling. Defaults give a natural walking pace."""

    linear_speed: float = 1.5      # m/s
    vertical_speed: float = 0.5    # m/s
    yaw_speed: float = 1.5707963267948966    # rad/s (90 deg)
    pitch_speed: float = 0.7853981633974483  # rad/s (45 deg)
    dead_zone: float = 0.1

    def __post_init__(self) -> None:
        if min(self.linear_speed, self.vertical_speed, self.yaw_speed, self.pitch_speed) <= 0:
            raise ValueError("speeds must be positive")
        if not 0.0 <= self.dead_zone < 0.5:
            raise ValueError("dead zone must be in [0, 0.5)")


def _shape(axis: float, dead_zone: float) -> float:
    # Rescale so the dead-zone edge maps to 0 and full deflection to 1.
    mag = abs(axis)
    if mag <= dead_zone:
        return 0.0
    scaled = (mag - dead_zone) / (1.0 - dead_zone)
    return scaled if axis > 0 else -scaled


def axes_to_delta(axes: AxisInput, cfg: ManipulatorConfig, dt: float) -> TransformDelta:
    """Convert one axis sample into a reference-transform delta over dt."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    dz = cfg.dead_zone
    return TransformDelta(
        d_forward=_shape(axes.forward, dz) * cfg.linear_speed * dt,
        d_lateral=_shape(axes.lateral, dz) * cfg.linear_speed * dt,
        d_vertical=_shape(axes.vertical, dz) * cfg.vertical_speed * dt,
        d_yaw=_shape(axes.yaw_rate, dz) * cfg.yaw_speed * dt,
        d_pitch=_shape(axes.pitch_rate, dz) * cfg.pitch_speed * dt,
    )

"""Cue sheets: named, fireable bundles of staging actions.

A cue groups reference placements, ownership transfers, path starts and
watch-target changes under one id, optionally scheduled at a tick. Cues
are re-runnable (the same cue rehearses many times in one session); fire
counts are tracked for the console.

Sheet document shape:

    {"cues": [{"id": "Q1", "name": "entrance", "at_tick": 500,
               "actions": [{"kind": "set_ref", "avatar": "A1",
                            "pos": [0, 0, -2], "yaw_deg": 90, "pitch_deg": 0},
                           {"kind": "set_ownership", "avatar": "A1",
                            "channel": "root_xy", "owner": "manipulator"},
                           {"kind": "start_path", "avatar": "A1",
                            "goal": [4, 7], "speed": 1.5},
                           {"kind": "set_watch", "avatar": "A1",
                            "target": {"kind": "performer", "pos": [1, 0, 2]}}]}]}
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .manipulator import ChannelId, ChannelOwner, OwnerKind
from .pose import ReferenceTransform, Vec3
from .stage import WatchTarget


class DuplicateCueId(ValueError):
    pass


class UnknownActionKind(ValueError):
    pass


class MalformedAction(ValueError):
    """Invalid action payload; the message starts with a path into the
    sheet document (e.g. cues[1].actions[0].goal)."""


class UnknownCue(KeyError):
    pass


@dataclass(frozen=True)
class SetRef:
    avatar_id: str
    ref: ReferenceTransform

    def to_dict(self) -> dict:
        return {
            "kind": "set_ref",
            "avatar": self.avatar_id,
            "pos": list(self.ref.translation.as_tuple()),
            "yaw_deg": math.degrees(self.ref.yaw),
            "pitch_deg": math.degrees(self.ref.pitch),
        }


@dataclass(frozen=True)
class SetOwnership:
    avatar_id: str
    channel: ChannelId
    owner: ChannelOwner

    def to_dict(self) -> dict:
        out = {
            "kind": "set_ownership",
            "avatar": self.avatar_id,
            "channel": self.channel.value,
            "owner": self.owner.kind.value,
        }
        if self.owner.kind is OwnerKind.BLEND:
            out["weight"] = self.owner.weight
        return out


@dataclass(frozen=True)
class StartPath:
    avatar_id: str
    goal: tuple[int, int]
    speed: float

    def to_dict(self) -> dict:
        return {
            "kind": "start_path",
            "avatar": self.avatar_id,
            "goal": list(self.goal),
            "speed": self.speed,
        }


@dataclass(frozen=True)
class SetWatch:
    avatar_id: str
    target: WatchTarget | None

    def to_dict(self) -> dict:
        return {
            "kind": "set_watch",
            "avatar": self.avatar_id,
            "target": None if self.target is None else self.target.to_dict(),
        }


CueAction = SetRef | SetOwnership | StartPath | SetWatch


@dataclass(frozen=True)
class Cue:
    cue_id: str
    name: str
    actions: tuple[CueAction, ...]
    at_tick: int | None = None


class CueSheet:
    def __init__(self, cues: list[Cue] | tuple[Cue, ...]):
        self.cues = tuple(cues)
        self.by_id: dict[str, Cue] = {}
        for cue in self.cues:
            if cue.cue_id in self.by_id:
                raise DuplicateCueId(cue.cue_id)
            self.by_id[cue.cue_id] = cue
        # Scheduled cues in firing order: by tick, then sheet order.
        order = {c.cue_id: i for i, c in enumerate(self.cues)}
        self.scheduled = tuple(
            sorted(
                (c for c in self.cues if c.at_tick is not None),
                key=lambda c: (c.at_tick, order[c.cue_id]),
            )
        )

    def __len__(self) -> int:
        return len(self.cues)


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise MalformedAction(f"{path}.{key} is missing")
    return doc[key]


def _vec3(value, path: str) -> Vec3:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise MalformedAction(f"{path} must be [x, y, z]")
    try:
        return Vec3(float(value[0]), float(value[1]), float(value[2]))
    except (TypeError, ValueError) as exc:
        raise MalformedAction(f"{path}: {exc}") from None


def _parse_action(doc: dict, path: str) -> CueAction:
    if not isinstance(doc, dict):
        raise MalformedAction(f"{path} must be an object")
    kind = doc.get("kind")
    avatar = _require(doc, "avatar", path)
    if kind == "set_ref":
        pos = _vec3(_require(doc, "pos", path), f"{path}.pos")
        return SetRef(
            avatar,
            ReferenceTransform(
                pos,
                yaw=math.radians(float(doc.get("yaw_deg", 0.0))),
                pitch=math.radians(float(doc.get("pitch_deg", 0.0))),
            ),
        )
    if kind == "set_ownership":
        try:
            channel = ChannelId.parse(str(_require(doc, "channel", path)))
            owner_kind = OwnerKind.parse(str(_require(doc, "owner", path)))
            owner = ChannelOwner(owner_kind, float(doc.get("weight", 1.0)))
        except ValueError as exc:
            raise MalformedAction(f"{path}: {exc}") from None
        return SetOwnership(avatar, channel, owner)
    if kind == "start_path":
        goal = _require(doc, "goal", path)
        if not isinstance(goal, (list, tuple)) or len(goal) != 2:
            raise MalformedAction(f"{path}.goal must be [col, row]")
        speed = float(_require(doc, "speed", path))
        if speed <= 0:
            raise MalformedAction(f"{path}.speed must be positive")
        return StartPath(avatar, (int(goal[0]), int(goal[1])), speed)
    if kind == "set_watch":
        target = _require(doc, "target", path)
        if target is None:
            return SetWatch(avatar, None)
        try:
            return SetWatch(avatar, WatchTarget.from_dict(target))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedAction(f"{path}.target: {exc}") from None
    raise UnknownActionKind(f"{path}.kind: {kind!r}")


def load_cue_sheet(json_text: str) -> CueSheet:
    """Parse and validate a cue sheet document."""
    doc = json.loads(json_text)
    if not isinstance(doc, dict) or not isinstance(doc.get("cues"), list):
        raise MalformedAction('document must be {"cues": [...]}')
    cues: list[Cue] = []
    for i, cue_doc in enumerate(doc["cues"]):
        path = f"cues[{i}]"
        if not isinstance(cue_doc, dict):
            raise MalformedAction(f"{path} must be an object")
        cue_id = str(_require(cue_doc, "id", path))
        actions_doc = _require(cue_doc, "actions", path)
        if not isinstance(actions_doc, list) or not actions_doc:
            raise MalformedAction(f"{path}.actions must be a non-empty list")
        actions = tuple(
            _parse_action(a, f"{path}.actions[{j}]") for j, a in enumerate(actions_doc)
        )
        at_tick = cue_doc.get("at_tick")
        if at_tick is not None:
            at_tick = int(at_tick)
            if at_tick < 0:
                raise MalformedAction(f"{path}.at_tick must be non-negative")
        cues.append(Cue(cue_id, str(cue_doc.get("name", cue_id)), actions, at_tick))
    return CueSheet(cues)


class CueEngine:
    """Tracks which cues fired and hands their actions to the tick loop.

    Scheduled cues auto-fire exactly once at their tick; any cue can also
    be re-fired manually at any time.
    """

    def __init__(self, sheet: CueSheet | None = None):
        self.sheet = sheet or CueSheet([])
        self.fire_counts: dict[str, int] = {c.cue_id: 0 for c in self.sheet.cues}
        self._auto_done: set[str] = set()

    def due(self, tick_no: int) -> list[str]:
        """Ids of scheduled cues reaching their tick, in schedule order."""
        out = []
        for cue in self.sheet.scheduled:
            if cue.cue_id not in self._auto_done and cue.at_tick <= tick_no:
                out.append(cue.cue_id)
                self._auto_done.add(cue.cue_id)
        return out

    def fire(self, cue_id: str, tick_no: int) -> list[tuple[int, CueAction]]:
        """Emit the cue's actions stamped with the firing tick, in order."""
        cue = self.sheet.by_id.get(cue_id)
        if cue is None:
            raise UnknownCue(cue_id)
        self.fire_counts[cue_id] += 1
        return [(tick_no, action) for action in cue.actions]

    def as_dicts(self) -> list[dict]:
        return [
            {
                "id": c.cue_id,
                "name": c.name,
                "at_tick": c.at_tick,
                "fire_count": self.fire_counts[c.cue_id],
            }
            for c in self.sheet.cues
        ]

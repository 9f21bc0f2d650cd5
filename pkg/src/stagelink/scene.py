"""Scene files: one JSON document wires streams, avatars, stage geometry
and the nav grid together.

    {
      "tick_hz": 100,
      "c_volumes": {"0": {"min": [-1, 0, -1], "max": [1, 2.2, 1]}},
      "a_to_b": {"translation": [0, 0, -3], "yaw_deg": 0},
      "manipulator": {"linear_speed": 1.5, "dead_zone": 0.1},
      "avatars": [
        {"id": "A1", "topology": "rig.bvh", "bone_map": null, "stream": 0,
         "ref": {"pos": [0, 0, 0], "yaw_deg": 0, "pitch_deg": 0}}
      ],
      "nav_grid": "stage.grid",
      "streams": {"0": {"kind": "bvh", "path": "take.bvh", "fps": 100,
                        "loop": true, "start_frame": 0}}
    }

Topologies come from the HIERARCHY section of a BVH file (or an inline
joint list); a null bone map maps joints by shared name. Relative paths
resolve against the scene file's directory. The optional "streams"
section selects playback sources; streams without an entry arrive over
the UDP listener. An embedded form with every file inlined makes session
logs self-contained.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .manipulator import ManipulatorConfig
from .mixer import DEFAULT_TICK_HZ, AvatarBinding, Mixer
from .mocap import BvhSource, UdpSource, load_bvh
from .pathfind import NavGrid, load_grid, parse_grid
from .pose import ReferenceTransform, SkeletonTopology, Vec3
from .retarget import BoneMap, load_bone_map
from .stage import StageCalibration
from .cues import CueEngine, load_cue_sheet


class AssetMissing(FileNotFoundError):
    pass


@dataclass(frozen=True)
class StreamSpec:
    kind: str = "udp"  # "udp" | "bvh"
    path: str | None = None
    fps: float | None = None
    loop: bool = False
    start_frame: int = 0


@dataclass(frozen=True)
class AvatarSpec:
    avatar_id: str
    stream_id: int
    topology: SkeletonTopology
    bone_map: BoneMap
    ref: ReferenceTransform
    head_joint: str = "Head"

    def binding(self) -> AvatarBinding:
        return AvatarBinding(
            self.avatar_id, self.stream_id, self.topology, self.bone_map,
            self.ref, self.head_joint,
        )


@dataclass
class SceneConfig:
    tick_hz: int = DEFAULT_TICK_HZ
    calibration: StageCalibration = field(default_factory=StageCalibration)
    manipulator: ManipulatorConfig = field(default_factory=ManipulatorConfig)
    avatars: list[AvatarSpec] = field(default_factory=list)
    nav_grid: NavGrid | None = None
    streams: dict[int, StreamSpec] = field(default_factory=dict)
    base_dir: Path | None = None

    def build_mixer(self, cue_text: str | None = None) -> Mixer:
        engine = CueEngine(load_cue_sheet(cue_text)) if cue_text else CueEngine()
        mixer = Mixer(
            calibration=self.calibration,
            cue_engine=engine,
            manipulator_cfg=self.manipulator,
            nav_grid=self.nav_grid,
            tick_hz=self.tick_hz,
        )
        for spec in self.avatars:
            mixer.bind_avatar(spec.binding())
        return mixer

    def stream_ids(self) -> tuple[int, ...]:
        return tuple(sorted({a.stream_id for a in self.avatars}))

    def stream_topology(self, stream_id: int) -> SkeletonTopology:
        # The retarget source skeleton: declared by the stream's BVH when
        # present, otherwise by the first avatar bound to the stream.
        for a in self.avatars:
            if a.stream_id == stream_id:
                return a.topology
        raise KeyError(stream_id)

    def build_playback_sources(self, start_us: int = 0) -> dict[int, BvhSource]:
        """BVH-backed sources for every stream declaring one."""
        out: dict[int, BvhSource] = {}
        for sid, spec in self.streams.items():
            if spec.kind != "bvh":
                continue
            path = self._resolve(spec.path)
            out[sid] = BvhSource.from_file(
                path, stream_id=sid, fps=spec.fps, loop=spec.loop,
                start_frame=spec.start_frame, start_us=start_us,
            )
        return out

    def build_udp_sources(self) -> dict[int, UdpSource]:
        """Live sources for every stream not covered by playback."""
        return {
            sid: UdpSource(self.stream_topology(sid), stream_id=sid)
            for sid in self.stream_ids()
            if self.streams.get(sid, StreamSpec()).kind == "udp"
        }

    def _resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = self.base_dir / p
        if not p.exists():
            raise AssetMissing(str(p))
        return p

    # --- embedding (session logs) ------------------------------------------

    def to_embedded(self) -> dict:
        """Self-contained form: everything a replay needs, files inlined."""
        return {
            "tick_hz": self.tick_hz,
            "calibration": self.calibration.to_dict(),
            "manipulator": {
                "linear_speed": self.manipulator.linear_speed,
                "vertical_speed": self.manipulator.vertical_speed,
                "yaw_speed": self.manipulator.yaw_speed,
                "pitch_speed": self.manipulator.pitch_speed,
                "dead_zone": self.manipulator.dead_zone,
            },
            "avatars": [
                {
                    "id": a.avatar_id,
                    "stream": a.stream_id,
                    "head_joint": a.head_joint,
                    "ref": {
                        "pos": list(a.ref.translation.as_tuple()),
                        "yaw": a.ref.yaw,
                        "pitch": a.ref.pitch,
                    },
                    "topology": a.topology.to_dict(),
                    "bone_map": a.bone_map.entries,
                }
                for a in self.avatars
            ],
            "nav_grid": None if self.nav_grid is None else self.nav_grid.to_text(),
        }

    @classmethod
    def from_embedded(cls, doc: dict) -> "SceneConfig":
        manip = doc.get("manipulator", {})
        avatars = []
        for a in doc.get("avatars", []):
            topology = SkeletonTopology.from_dict(a["topology"])
            avatars.append(
                AvatarSpec(
                    avatar_id=a["id"],
                    stream_id=int(a["stream"]),
                    topology=topology,
                    bone_map=BoneMap(a["bone_map"], topology, topology),
                    ref=ReferenceTransform(
                        Vec3(*a["ref"]["pos"]), a["ref"]["yaw"], a["ref"]["pitch"]
                    ),
                    head_joint=a.get("head_joint", "Head"),
                )
            )
        grid_text = doc.get("nav_grid")
        return cls(
            tick_hz=int(doc.get("tick_hz", DEFAULT_TICK_HZ)),
            calibration=StageCalibration.from_dict(doc.get("calibration", {})),
            manipulator=ManipulatorConfig(**manip) if manip else ManipulatorConfig(),
            avatars=avatars,
            nav_grid=None if grid_text is None else parse_grid(grid_text),
        )


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def content_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj)).hexdigest()


def parse_scene(text: str, base_dir: Path | None = None) -> SceneConfig:
    doc = json.loads(text)
    scene = SceneConfig(base_dir=base_dir)
    scene.tick_hz = int(doc.get("tick_hz", DEFAULT_TICK_HZ))
    scene.calibration = StageCalibration.from_dict(doc)
    if "manipulator" in doc:
        m = doc["manipulator"]
        scene.manipulator = ManipulatorConfig(
            linear_speed=m.get("linear_speed", 1.5),
            vertical_speed=m.get("vertical_speed", 0.5),
            yaw_speed=math.radians(m["yaw_speed_deg"]) if "yaw_speed_deg" in m else m.get(
                "yaw_speed", ManipulatorConfig.yaw_speed),
            pitch_speed=math.radians(m["pitch_speed_deg"]) if "pitch_speed_deg" in m else m.get(
                "pitch_speed", ManipulatorConfig.pitch_speed),
            dead_zone=m.get("dead_zone", 0.1),
        )

    topologies: dict[str, SkeletonTopology] = {}
    for a in doc.get("avatars", []):
        topo_ref = a["topology"]
        if isinstance(topo_ref, dict):
            topology = SkeletonTopology.from_dict(topo_ref)
        else:
            if topo_ref not in topologies:
                topologies[topo_ref], _, _ = load_bvh(scene._resolve(topo_ref))
            topology = topologies[topo_ref]
        map_ref = a.get("bone_map")
        if map_ref is None:
            bone_map = BoneMap.by_name(topology, topology)
        else:
            bone_map = load_bone_map(
                scene._resolve(map_ref).read_text(encoding="utf-8"), topology, topology
            )
        ref_doc = a.get("ref", {})
        scene.avatars.append(
            AvatarSpec(
                avatar_id=str(a["id"]),
                stream_id=int(a.get("stream", 0)),
                topology=topology,
                bone_map=bone_map,
                ref=ReferenceTransform(
                    Vec3(*ref_doc.get("pos", (0, 0, 0))),
                    yaw=math.radians(ref_doc.get("yaw_deg", 0.0)),
                    pitch=math.radians(ref_doc.get("pitch_deg", 0.0)),
                ),
                head_joint=a.get("head_joint", "Head"),
            )
        )

    if doc.get("nav_grid"):
        scene.nav_grid = load_grid(scene._resolve(doc["nav_grid"]))

    for sid, s in doc.get("streams", {}).items():
        scene.streams[int(sid)] = StreamSpec(
            kind=s.get("kind", "udp"),
            path=s.get("path"),
            fps=s.get("fps"),
            loop=bool(s.get("loop", False)),
            start_frame=int(s.get("start_frame", 0)),
        )
    return scene


def load_scene(path) -> SceneConfig:
    path = Path(path)
    if not path.exists():
        raise AssetMissing(str(path))
    return parse_scene(path.read_text(encoding="utf-8"), base_dir=path.parent)

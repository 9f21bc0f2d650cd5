"""Command-line front end.

    stagelink run --scene scene.json [--cues cues.json] [--listen 7000]
                  [--posebus 127.0.0.1:7001] [--control 7002] [--ws 7003]
                  [--record out.log] [--ticks N | --duration S]
    stagelink scenario {walking|watching|crowd} [--record out.log] [--ticks N]
    stagelink play --bvh take.bvh --to host:7000 [--rate 100] [--loop]
                   [--stream-id 0] [--max-frames N]
    stagelink replay session.log [--verify]

STAGELINK_TICK_HZ overrides the scene's tick rate (default 100).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .bus import (
    DEFAULT_CONTROL_PORT,
    DEFAULT_POSEBUS_PORT,
    DEFAULT_WS_PORT,
    SessionLog,
    replay as replay_log,
)
from .mocap import DEFAULT_STREAM_PORT
from .scene import load_scene
from .scenarios import SCENARIO_NAMES, play_bvh, run_scenario
from .server import EngineRuntime


def _host_port(text: str, default_port: int) -> tuple[str, int]:
    if ":" in text:
        host, port = text.rsplit(":", 1)
        return host or "127.0.0.1", int(port)
    return text, default_port


def _tick_hz_override() -> int | None:
    value = os.environ.get("STAGELINK_TICK_HZ")
    return int(value) if value else None


def _cmd_run(args) -> int:
    scene = load_scene(args.scene)
    if _tick_hz_override():
        scene.tick_hz = _tick_hz_override()
    cue_text = Path(args.cues).read_text(encoding="utf-8") if args.cues else None
    runtime = EngineRuntime(
        scene,
        cue_text,
        listen_port=args.listen,
        posebus=_host_port(args.posebus, DEFAULT_POSEBUS_PORT),
        control_port=args.control,
        ws_port=None if args.no_ws else args.ws,
        record=args.record,
        host=args.host,
    )
    runtime.start()
    ports = f"control tcp:{runtime.control_port}"
    if runtime.listener:
        ports += f", mocap udp:{runtime.listener.port}"
    if runtime.ws_port is not None:
        ports += f", console ws:{runtime.ws_port}"
    print(f"stagelink engine up ({ports}), {len(scene.avatars)} avatars "
          f"at {scene.tick_hz} Hz", flush=True)
    try:
        runtime.run(max_ticks=args.ticks, duration_s=args.duration)
    except KeyboardInterrupt:
        pass
    finally:
        runtime.stop()
    print(f"ran {runtime.ticks_run} ticks, {runtime.publisher.sent} pose messages "
          f"({runtime.publisher.dropped} dropped)")
    return 0


def _cmd_scenario(args) -> int:
    kw = {}
    if args.ticks:
        kw["ticks"] = args.ticks
    report = run_scenario(args.name, record=args.record, **kw)
    print("\n".join(report.lines()))
    return 0 if report.failed == 0 else 1


def _cmd_play(args) -> int:
    host, port = _host_port(args.to, DEFAULT_STREAM_PORT)
    sent = play_bvh(
        args.bvh, host, port,
        rate=args.rate, loop=args.loop,
        max_frames=args.max_frames, stream_id=args.stream_id,
    )
    print(f"sent {sent} frames to {host}:{port}")
    return 0


def _cmd_replay(args) -> int:
    log = SessionLog.load(args.log)
    print(f"session log: {len(log.records)} ticks at {log.header['tick_hz']} Hz, "
          f"scene {log.header['scene_hash'][:12]}")
    if not args.verify:
        return 0
    verdict = replay_log(log)
    print(verdict.describe())
    return 0 if verdict.identical else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stagelink", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the live engine")
    run_p.add_argument("--scene", required=True)
    run_p.add_argument("--cues")
    run_p.add_argument("--host", default="127.0.0.1")
    run_p.add_argument("--listen", type=int, default=DEFAULT_STREAM_PORT,
                       help="UDP port for incoming skeleton streams")
    run_p.add_argument("--posebus", default=f"127.0.0.1:{DEFAULT_POSEBUS_PORT}",
                       help="host:port pose messages broadcast to")
    run_p.add_argument("--control", type=int, default=DEFAULT_CONTROL_PORT)
    run_p.add_argument("--ws", type=int, default=DEFAULT_WS_PORT)
    run_p.add_argument("--no-ws", action="store_true")
    run_p.add_argument("--record")
    run_p.add_argument("--ticks", type=int)
    run_p.add_argument("--duration", type=float)
    run_p.set_defaults(func=_cmd_run)

    sc_p = sub.add_parser("scenario", help="run a self-checking scenario")
    sc_p.add_argument("name", choices=SCENARIO_NAMES)
    sc_p.add_argument("--record")
    sc_p.add_argument("--ticks", type=int)
    sc_p.set_defaults(func=_cmd_scenario)

    play_p = sub.add_parser("play", help="stream a BVH file as skeleton datagrams")
    play_p.add_argument("--bvh", required=True)
    play_p.add_argument("--to", required=True, help="host:port")
    play_p.add_argument("--rate", type=float)
    play_p.add_argument("--loop", action="store_true")
    play_p.add_argument("--stream-id", type=int, default=0)
    play_p.add_argument("--max-frames", type=int)
    play_p.set_defaults(func=_cmd_play)

    rp_p = sub.add_parser("replay", help="inspect or verify a session log")
    rp_p.add_argument("log")
    rp_p.add_argument("--verify", action="store_true")
    rp_p.set_defaults(func=_cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

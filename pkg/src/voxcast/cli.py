"""Command-line entry points for the streaming pipeline.

    voxcast scene    write a built-in scene description to a file
    voxcast sim      record a scripted scanning session
    voxcast serve    run the central streaming server
    voxcast fuse     replay a recording into a server
    voxcast explore  replicate, mesh, export, benchmark, host the UI gateway
    voxcast capture  live robot simulation with teleop, fusing and uploading
    voxcast bench    deterministic benchmark over a recording, with report
"""

from __future__ import annotations

import argparse
import asyncio
import logging
import sys

from voxcast.blocks import VolumeParams

log = logging.getLogger("voxcast")


def _addr(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def _params_args(p: argparse.ArgumentParser):
    p.add_argument("--voxel-size", type=float, default=0.005, help="meters")
    p.add_argument("--trunc", type=float, default=0.06, help="truncation distance, meters")
    p.add_argument("--block-dim", type=int, default=8)


def _params_of(args) -> VolumeParams:
    return VolumeParams(
        voxel_size=args.voxel_size, trunc_dist=args.trunc, block_dim=args.block_dim
    )


def cmd_scene(args):
    from voxcast.sim.scene import save_scene
    from voxcast.sim.scenes import BUILTIN_SCENES

    scene = BUILTIN_SCENES[args.name]()
    save_scene(scene, args.out)
    print(f"wrote {args.name} scene to {args.out}")


def cmd_sim(args):
    from voxcast.sim.camera import CameraIntrinsics
    from voxcast.sim.drive import corridor_script, orbit_script, record_script
    from voxcast.sim.robot import RobotState
    from voxcast.sim.scenes import get_scene

    scene = get_scene(args.scene)
    intr = CameraIntrinsics.scaled(args.width, args.height)
    scripts = {"corridor": corridor_script, "orbit": orbit_script}
    script = scripts[args.script]()
    start = RobotState(x=args.start_x, y=args.start_y, yaw=args.start_yaw)
    frames = record_script(
        args.record,
        scene,
        script,
        intr,
        _params_of(args),
        start=start,
        render_every=args.render_every,
        noise_sigma=args.noise_sigma,
        seed=args.seed,
    )
    print(f"recorded {frames} frames to {args.record}")


def cmd_serve(args):
    from voxcast.server import TelecastServer

    async def main():
        host, port = args.listen
        server = TelecastServer(
            _params_of(args), host=host, port=port, max_clients=args.max_clients
        )
        await server.start()
        print(f"serving on {server.host}:{server.port}")
        try:
            await asyncio.Event().wait()
        finally:
            await server.stop()

    asyncio.run(main())


def cmd_fuse(args):
    from voxcast.uplink import replay_session

    async def main():
        host, port = args.server
        core = await replay_session(
            args.replay, host, port, batch=args.batch, upload_every=args.upload_every
        )
        print(f"replayed {args.replay}: {len(core.store)} blocks fused and uploaded")

    asyncio.run(main())


def cmd_explore(args):
    from voxcast.explore import ExplorationClient
    from voxcast.protocol import Strategy

    strategies = {
        "view": Strategy.VIEW_BASED,
        "order": Strategy.RECONSTRUCTION_ORDER,
        "arbitrary": Strategy.ARBITRARY,
    }

    async def main():
        host, port = args.server
        client = ExplorationClient(
            host,
            port,
            _params_of(args),
            strategy=strategies[args.strategy],
            count=args.count,
            rate=args.rate,
            benchmark=args.benchmark,
        )
        await client.connect()
        gateway = None
        teleop = None
        if args.gateway is not None:
            from voxcast.capture import TeleopLink
            from voxcast.gateway import Gateway, run_gateway_session

            if args.teleop is not None:
                teleop = TeleopLink(*args.teleop)
                await teleop.connect()
            ghost, gport = args.gateway
            gateway = Gateway(client, teleop_link=teleop, host=ghost, port=gport)
            await gateway.start()
            print(f"gateway on ws://{gateway.host}:{gateway.port}")
            await run_gateway_session(client, gateway, duration=args.duration)
        else:
            if args.duration is not None:
                await client.run(duration=args.duration)
            else:
                await client.drain()
        if args.benchmark:
            rep = client.core.stats.report()
            print(
                f"benchmark: mean {rep['mean_mbit_s']:.2f} MBit/s, "
                f"peak {rep['peak_mbit_s']:.2f} MBit/s, "
                f"{rep['blocks_received']} blocks"
            )
            if args.report_dir:
                from voxcast.report import write_benchmark_report

                for path in write_benchmark_report(rep, args.report_dir):
                    print(f"wrote {path}")
        if args.export_mesh:
            merged = client.core.export_mesh(args.export_mesh)
            print(
                f"exported {len(merged.vertices)} vertices / "
                f"{len(merged.triangles)} triangles to {args.export_mesh}"
            )
        if gateway is not None:
            await gateway.stop()
        if teleop is not None:
            await teleop.close()
        await client.close()

    asyncio.run(main())


def cmd_capture(args):
    from voxcast.capture import LiveRig, TeleopServer
    from voxcast.sim.camera import CameraIntrinsics
    from voxcast.sim.scenes import get_scene

    async def main():
        scene = get_scene(args.scene)
        intr = CameraIntrinsics.scaled(args.width, args.height)
        thost, tport = args.listen_teleop
        teleop = await TeleopServer(thost, tport).start()
        print(f"teleop on {teleop.host}:{teleop.port}")
        rig = LiveRig(
            scene,
            _params_of(args),
            intr,
            args.server,
            teleop,
            noise_sigma=args.noise_sigma,
            record_path=args.record,
        )
        await rig.start()
        try:
            ticks = int(args.duration * 30) if args.duration else sys.maxsize
            await rig.run_ticks(ticks)
        finally:
            await rig.stop()
            await teleop.stop()

    asyncio.run(main())


def cmd_bench(args):
    from voxcast.bench import BenchConfig, run_benchmark
    from voxcast.report import write_benchmark_report

    config = BenchConfig(
        rate_hz=args.rate,
        package_blocks=args.count,
        compress=not args.raw,
    )
    report = run_benchmark(args.replay, config)
    print(
        f"mean {report['mean_mbit_s']:.2f} MBit/s, peak {report['peak_mbit_s']:.2f} "
        f"MBit/s over {report['duration_s']:.0f} s, "
        f"{report['blocks_received']} blocks ({report['bytes_received'] / 1e6:.1f} MB)"
    )
    if args.report_dir:
        for path in write_benchmark_report(report, args.report_dir):
            print(f"wrote {path}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="voxcast", description=__doc__)
    parser.add_argument("--log-level", default="info")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scene", help="write a built-in scene file")
    p.add_argument("--name", choices=("corridor", "room"), default="corridor")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_scene)

    p = sub.add_parser("sim", help="record a scripted session")
    p.add_argument("--scene", default="builtin:corridor")
    p.add_argument("--script", choices=("corridor", "orbit"), default="corridor")
    p.add_argument("--record", required=True)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=424)
    p.add_argument("--render-every", type=int, default=3)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start-x", type=float, default=0.5)
    p.add_argument("--start-y", type=float, default=0.0)
    p.add_argument("--start-yaw", type=float, default=0.0)
    _params_args(p)
    p.set_defaults(fn=cmd_sim)

    p = sub.add_parser("serve", help="run the streaming server")
    p.add_argument("--listen", type=_addr, default=("127.0.0.1", 7777))
    p.add_argument("--max-clients", type=int, default=64)
    _params_args(p)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("fuse", help="replay a recording into a server")
    p.add_argument("--replay", required=True)
    p.add_argument("--server", type=_addr, required=True)
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--upload-every", type=int, default=1)
    _params_args(p)
    p.set_defaults(fn=cmd_fuse)

    p = sub.add_parser("explore", help="run an exploration client")
    p.add_argument("--server", type=_addr, required=True)
    p.add_argument("--strategy", choices=("view", "order", "arbitrary"), default="view")
    p.add_argument("--rate", type=float, default=30.0)
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--benchmark", action="store_true")
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--gateway", type=_addr, default=None)
    p.add_argument("--teleop", type=_addr, default=None)
    p.add_argument("--export-mesh", default=None)
    p.add_argument("--report-dir", default=None)
    _params_args(p)
    p.set_defaults(fn=cmd_explore)

    p = sub.add_parser("capture", help="live sim + fusion with teleop")
    p.add_argument("--scene", default="builtin:room")
    p.add_argument("--server", type=_addr, required=True)
    p.add_argument("--listen-teleop", type=_addr, default=("127.0.0.1", 7801))
    p.add_argument("--width", type=int, default=160)
    p.add_argument("--height", type=int, default=132)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--record", default=None)
    p.add_argument("--duration", type=float, default=None)
    _params_args(p)
    p.set_defaults(fn=cmd_capture)

    p = sub.add_parser("bench", help="deterministic benchmark over a recording")
    p.add_argument("--replay", required=True)
    p.add_argument("--rate", type=float, default=100.0)
    p.add_argument("--count", type=int, default=512)
    p.add_argument("--raw", action="store_true", help="disable compression")
    p.add_argument("--report-dir", default=None)
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args.fn(args)


if __name__ == "__main__":
    main()

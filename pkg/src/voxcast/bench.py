"""Deterministic streaming benchmark over a recorded session.

Reproduces the benchmark protocol in-process on a logical clock: the
reconstruction side replays a recording and uploads finished blocks,
while a benchmark client requests fixed-size packages at a fixed rate
and discards the payload, counting wire bytes.  Logical time makes the
numbers independent of host speed, so runs are exactly repeatable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from voxcast.explore import BenchmarkStats
from voxcast.fusion import FusionCore
from voxcast.protocol import BlockRequest, McBlockPackage, Strategy, encode
from voxcast.recording import read_frames, read_header
from voxcast.server import ServerCore

log = logging.getLogger("voxcast.bench")


@dataclass(frozen=True)
class BenchConfig:
    rate_hz: float = 100.0
    package_blocks: int = 512
    strategy: int = Strategy.ARBITRARY
    compress: bool = True
    upload_batch: int = 512
    drain_grace_s: float = 2.0


def run_benchmark(recording_path, config: BenchConfig = BenchConfig()) -> dict:
    """Replay a session through a server core against a discard client."""
    header = read_header(recording_path)
    fusion = FusionCore(header.params)
    server = ServerCore(header.params)
    state = server.register_client()
    stats = BenchmarkStats(rate_hz=config.rate_hz)

    frames = list(read_frames(recording_path))
    if not frames:
        return stats.report() | {"blocks_uploaded": 0, "raw_bytes": 0}

    duration = frames[-1].timestamp
    total_ticks = int(duration * config.rate_hz) + 1
    frame_idx = 0
    last_pos = None
    raw_bytes = 0
    blocks_uploaded = 0

    def pump_uploads(now: float):
        nonlocal frame_idx, last_pos, blocks_uploaded
        while frame_idx < len(frames) and frames[frame_idx].timestamp <= now:
            frame = frames[frame_idx]
            pos = np.asarray(frame.pose, dtype=np.float64)[:, 3]
            if last_pos is None:
                speed = 0.0
            else:
                dt = 1.0 / 30.0
                speed = float(np.linalg.norm(pos - last_pos)) / dt
            last_pos = pos
            fusion.process_frame(frame, commanded_speed=speed)
            while fusion.pending:
                batch = fusion.pop_batch(config.upload_batch)
                server.on_block_upload(batch)
                blocks_uploaded += len(batch)
            frame_idx += 1

    def bench_tick(tick: int):
        nonlocal raw_bytes
        req = BlockRequest(strategy=config.strategy, count=config.package_blocks)
        blocks = server.serve_request(state.client_id, req)
        pkg = McBlockPackage(blocks=blocks, block_dim=header.params.block_dim)
        frame_bytes = encode(pkg, compress=config.compress)
        raw_bytes += len(encode(pkg, compress=False))
        stats.note_package(tick, len(frame_bytes), len(blocks))

    for tick in range(total_ticks):
        pump_uploads(tick / config.rate_hz)
        bench_tick(tick)

    # session over: flush the tail and drain whatever is still pending
    pump_uploads(float("inf"))
    fusion.flush_session_end()
    while fusion.pending:
        batch = fusion.pop_batch(config.upload_batch)
        server.on_block_upload(batch)
        blocks_uploaded += len(batch)
    tick = total_ticks
    grace = int(config.drain_grace_s * config.rate_hz)
    idle = 0
    while state.pending or idle < 1:
        bench_tick(tick)
        idle = 0 if state.pending else idle + 1
        tick += 1
        if tick > total_ticks + 10 * grace:
            log.warning("benchmark drain did not settle")
            break

    report = stats.report()
    report["blocks_uploaded"] = blocks_uploaded
    report["raw_bytes"] = raw_bytes
    report["server_blocks"] = len(server.model)
    report["compress"] = config.compress
    report["rate_hz"] = config.rate_hz
    report["package_blocks"] = config.package_blocks
    return report

"""Exploration client: model replication, meshing, interaction, benchmark.

The client drains the server's stream with one of three request
strategies, keeps a local copy of every received MC block, and meshes
changed blocks at four detail levels.  In benchmark mode received data
is counted and discarded so the measurement reflects pure streaming
throughput.
"""

from __future__ import annotations

import asyncio
import logging
import math
import random
from collections import OrderedDict, deque
from dataclasses import dataclass, field

import numpy as np

from voxcast.blocks import BlockId, VolumeParams
from voxcast.mc_codec import McBlock, McStore
from voxcast.meshing import LOD_LEVELS, Mesh, extract_block_meshes, merge_meshes
from voxcast.pick import measure_between, pick_nearest
from voxcast.protocol import (
    Annotation,
    BlockRemoval,
    BlockRequest,
    CameraPose,
    Hello,
    McBlockPackage,
    ProtocolError,
    ResetRegion,
    RobotLinkPoses,
    Role,
    SessionEnd,
    Strategy,
    StreamDecoder,
    encode,
)
from voxcast.tsdf import SHELL_OFFSETS

log = logging.getLogger("voxcast.explore")

# Mesh LOD shown at a given camera distance; thresholds in meters.
LOD_DISTANCES = (2.0, 5.0, 10.0)


def lod_for_distance(distance: float) -> int:
    for level, limit in enumerate(LOD_DISTANCES):
        if distance < limit:
            return level
    return 3


@dataclass
class PoseFilter:
    """Exponential low-pass on the robot base pose (x, y, yaw)."""

    alpha: float = 0.2
    state: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")

    def update(self, raw: tuple[float, float, float]) -> tuple[float, float, float]:
        if self.state is None or self.alpha == 1.0:
            self.state = (float(raw[0]), float(raw[1]), float(raw[2]))
            return self.state
        x, y, yaw = self.state
        a = self.alpha
        dyaw = math.remainder(raw[2] - yaw, 2.0 * math.pi)
        self.state = (
            x + a * (raw[0] - x),
            y + a * (raw[1] - y),
            _wrap(yaw + a * dyaw),
        )
        return self.state


def _wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@dataclass
class BenchmarkStats:
    """Received-bytes accounting over one-second logical windows."""

    rate_hz: float
    windows: dict[int, int] = field(default_factory=dict)
    bytes_received: int = 0
    blocks_received: int = 0
    packages: int = 0
    last_tick: int = -1

    def note_package(self, tick: int, wire_bytes: int, n_blocks: int):
        window = int(tick / self.rate_hz)
        self.windows[window] = self.windows.get(window, 0) + wire_bytes
        self.bytes_received += wire_bytes
        self.blocks_received += n_blocks
        self.packages += 1
        self.last_tick = max(self.last_tick, tick)

    def report(self) -> dict:
        if not self.windows:
            return {
                "mean_mbit_s": 0.0,
                "peak_mbit_s": 0.0,
                "bytes_received": 0,
                "blocks_received": 0,
                "packages": 0,
                "duration_s": 0.0,
                "windows": [],
            }
        span = max(self.windows) + 1
        series = [self.windows.get(i, 0) for i in range(span)]
        bits = [8.0 * b / 1e6 for b in series]
        return {
            "mean_mbit_s": sum(bits) / len(bits),
            "peak_mbit_s": max(bits),
            "bytes_received": self.bytes_received,
            "blocks_received": self.blocks_received,
            "packages": self.packages,
            "duration_s": float(span),
            "windows": series,
        }


class ExplorationCore:
    """Local replicated model plus meshing and interaction state."""

    def __init__(
        self,
        params: VolumeParams,
        benchmark: bool = False,
        request_rate: float = 30.0,
        author_id: int | None = None,
    ):
        self.params = params
        self.store = McStore(params)
        self.meshes: dict[tuple[BlockId, int], Mesh] = {}
        self.mesh_revision: dict[BlockId, int] = {}
        self.annotations: "OrderedDict[tuple[int, int], Annotation]" = OrderedDict()
        self.base_filter = PoseFilter()
        self.benchmark = benchmark
        self.stats = BenchmarkStats(rate_hz=request_rate)
        self.latest_camera_pose: CameraPose | None = None
        self.latest_robot_links: RobotLinkPoses | None = None
        self.filtered_base: tuple[float, float, float] | None = None
        self.author_id = (
            author_id if author_id is not None else random.getrandbits(32)
        )
        self._annotation_seq = 0

    # -- replication ---------------------------------------------------------

    def apply_package(
        self, blocks: list[McBlock], wire_bytes: int = 0, tick: int = 0
    ) -> set[BlockId]:
        """Upsert received blocks; returns the set meshed again.

        Benchmark mode only counts the traffic and drops the payload.
        """
        if self.benchmark:
            self.stats.note_package(tick, wire_bytes, len(blocks))
            return set()
        changed = [b.id for b in blocks if self.store.insert(b)]
        if not changed:
            return set()
        stale = set()
        for bid in changed:
            stale.add(bid)
            for off in SHELL_OFFSETS:
                nb = (bid[0] - off[0], bid[1] - off[1], bid[2] - off[2])
                if nb in self.store:
                    stale.add(nb)
        self.remesh(stale)
        return stale

    def remesh(self, ids):
        ids = [b for b in ids if b in self.store]
        if not ids:
            return
        self.meshes.update(
            extract_block_meshes(self.store, ids, self.params, lods=LOD_LEVELS)
        )
        for bid in ids:
            self.mesh_revision[bid] = self.store.revision[bid]

    def handle_removal(self, ids) -> int:
        removed = 0
        stale = set()
        for bid in ids:
            if self.store.remove(bid):
                removed += 1
            self.mesh_revision.pop(bid, None)
            for lod in LOD_LEVELS:
                self.meshes.pop((bid, lod), None)
            for off in SHELL_OFFSETS:
                nb = (bid[0] - off[0], bid[1] - off[1], bid[2] - off[2])
                if nb in self.store:
                    stale.add(nb)
        self.remesh(stale)
        return removed

    def block_ids(self) -> set[BlockId]:
        return set(self.store.ids())

    # -- poses ------------------------------------------------------------------

    def on_camera_pose(self, msg: CameraPose):
        self.latest_camera_pose = msg

    def on_robot_links(self, msg: RobotLinkPoses):
        self.latest_robot_links = msg
        base = next((p for n, p in msg.links if n == "base"), None)
        if base is not None:
            yaw = math.atan2(float(base[1, 0]), float(base[0, 0]))
            self.filtered_base = self.base_filter.update(
                (float(base[0, 3]), float(base[1, 3]), yaw)
            )

    # -- interaction ---------------------------------------------------------------

    def lod0_meshes(self):
        return [m for (bid, lod), m in self.meshes.items() if lod == 0 and not m.empty]

    def measure_distance(self, ray_a, ray_b):
        """Distance between two mesh surface points picked by rays.

        Returns (distance, hit_a, hit_b) or None when a ray misses.
        """
        return measure_between(self.lod0_meshes(), ray_a, ray_b)

    def pick(self, origin, direction):
        return pick_nearest(self.lod0_meshes(), origin, direction)

    def make_annotation(self, lo, hi, label: int) -> Annotation:
        self._annotation_seq += 1
        ann = Annotation(
            lo=lo, hi=hi, label=label, author=self.author_id, seq=self._annotation_seq
        )
        self.handle_annotation(ann)
        return ann

    def handle_annotation(self, ann: Annotation):
        self.annotations[ann.key] = ann

    def export_mesh(self, path, lod: int = 0):
        from voxcast.meshing import save_ply

        merged = merge_meshes(
            m for (bid, level), m in self.meshes.items() if level == lod
        )
        save_ply(merged, path)
        return merged


class ExplorationClient:
    """asyncio network client wrapping :class:`ExplorationCore`.

    request_tick() sends one block request per logical tick; the pull
    loop keeps exactly one request in flight and reconnects with a
    fresh hello (triggering the server's full replay) after any drop.
    """

    def __init__(
        self,
        host: str,
        port: int,
        params: VolumeParams,
        strategy: int = Strategy.VIEW_BASED,
        count: int = 64,
        rate: float = 30.0,
        benchmark: bool = False,
        name: str = "explorer",
        pace: bool = True,
    ):
        self.host = host
        self.port = port
        self.params = params
        self.strategy = strategy
        self.count = count
        self.rate = rate
        self.pace = pace
        self.name = name
        self.core = ExplorationCore(params, benchmark=benchmark, request_rate=rate)
        self.view_pose = np.hstack(
            [np.eye(3, dtype=np.float32), np.zeros((3, 1), np.float32)]
        )
        self.session_ended = asyncio.Event()
        self.connected = asyncio.Event()
        self.delivery_log: list[tuple[BlockId, int]] = []
        self.replay_marks: list[int] = []
        self._reader: asyncio.StreamReader | None = None
        self._writer: asyncio.StreamWriter | None = None
        self._decoder = StreamDecoder()
        self._inbox: "deque[tuple[object, int]]" = deque()
        self._tick = 0
        self._stop = False

    async def connect(self):
        self._reader, self._writer = await asyncio.open_connection(self.host, self.port)
        self._decoder = StreamDecoder()
        self._inbox.clear()
        self._writer.write(encode(Hello(role=Role.EXPLORATION, name=self.name)))
        await self._writer.drain()
        self.replay_marks.append(len(self.delivery_log))
        self.connected.set()

    async def close(self):
        self._stop = True
        if self._writer is not None:
            self._writer.close()
            try:
                await self._writer.wait_closed()
            except (ConnectionError, OSError):
                pass
        self.connected.clear()

    async def send(self, msg):
        if self._writer is None:
            raise ConnectionError("not connected")
        self._writer.write(encode(msg))
        await self._writer.drain()

    def _build_request(self) -> BlockRequest:
        pose = self.view_pose if self.strategy == Strategy.VIEW_BASED else None
        return BlockRequest(strategy=self.strategy, count=self.count, view_pose=pose)

    async def request_once(self) -> list[McBlock]:
        """Send one request and wait for its package."""
        await self.send(self._build_request())
        while True:
            msg, size = await self._read_message()
            if msg is None:
                raise ConnectionError("server closed")
            if isinstance(msg, McBlockPackage):
                for b in msg.blocks:
                    self.delivery_log.append((b.id, b.revision))
                self.core.apply_package(msg.blocks, wire_bytes=size, tick=self._tick)
                self._tick += 1
                return msg.blocks
            self._handle_push(msg)

    async def drain(self, idle_limit: int = 3) -> int:
        """Request until the pending stream stays empty; returns blocks pulled."""
        total = 0
        idle = 0
        while idle < idle_limit:
            blocks = await self.request_once()
            total += len(blocks)
            if blocks:
                idle = 0
            else:
                idle += 1
                if self.pace:
                    await asyncio.sleep(1.0 / self.rate)
        return total

    async def run(self, duration: float | None = None):
        """Continuous request loop with reconnect-and-replay."""
        deadline = None
        if duration is not None:
            deadline = asyncio.get_running_loop().time() + duration
        while not self._stop:
            try:
                if not self.connected.is_set():
                    await self.connect()
                await self.request_once()
                if self.pace:
                    await asyncio.sleep(1.0 / self.rate)
            except (ConnectionError, ProtocolError, asyncio.IncompleteReadError):
                self.connected.clear()
                if self._stop:
                    return
                await asyncio.sleep(0.05)
            if deadline is not None and asyncio.get_running_loop().time() >= deadline:
                return

    async def _read_message(self):
        assert self._reader is not None
        while not self._inbox:
            data = await self._reader.read(256 * 1024)
            if not data:
                return None, 0
            msgs = self._decoder.feed(data)
            self._inbox.extend(zip(msgs, self._decoder.last_sizes))
        return self._inbox.popleft()

    def _handle_push(self, msg):
        core = self.core
        if isinstance(msg, CameraPose):
            core.on_camera_pose(msg)
        elif isinstance(msg, RobotLinkPoses):
            core.on_robot_links(msg)
        elif isinstance(msg, Annotation):
            core.handle_annotation(msg)
        elif isinstance(msg, BlockRemoval):
            core.handle_removal(msg.ids)
        elif isinstance(msg, SessionEnd):
            self.session_ended.set()
        else:
            log.debug("unhandled push %s", type(msg).__name__)

"""Central streaming server.

Owns the global MC model and one stream state per exploration client.
Uploaded TSDF blocks are retained so conversions can read the +1
neighbor shell: when a block arrives, it is converted, and any already
converted lower neighbor (for which the new block supplies shell data)
is re-converted with a bumped revision so block seams stay watertight.

Clients pull blocks with explicit requests; poses, annotations, resets
and removals are pushed.  Reconnection is a fresh hello and always
replays the complete block list.
"""

from __future__ import annotations

import asyncio
import logging
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from voxcast.blocks import BlockId, VolumeParams, block_center
from voxcast.mc_codec import McBlock, McStore, convert_blocks
from voxcast.protocol import (
    Annotation,
    BlockRemoval,
    BlockRequest,
    CameraPose,
    Hello,
    McBlockPackage,
    ProtocolError,
    ResetRegion,
    Role,
    SessionEnd,
    StatusReply,
    StatusRequest,
    Strategy,
    StreamDecoder,
    TsdfBlockPackage,
    RobotLinkPoses,
    encode,
)
from voxcast.tsdf import SHELL_OFFSETS, BlockStore, TsdfBlock

log = logging.getLogger("voxcast.server")

# Neighbor offsets whose conversion reads a newly uploaded block.
_LOWER_NEIGHBORS = tuple((-dx, -dy, -dz) for dx, dy, dz in SHELL_OFFSETS)


@dataclass
class StreamState:
    client_id: int
    pending: OrderedDict[BlockId, None] = field(default_factory=OrderedDict)
    connected: bool = True

    def enqueue(self, block_id: BlockId):
        if block_id not in self.pending:
            self.pending[block_id] = None

    def drop(self, block_id: BlockId):
        self.pending.pop(block_id, None)


class ServerCore:
    """Protocol-agnostic server state machine."""

    def __init__(self, params: VolumeParams):
        self.params = params
        self.model = McStore(params)
        self.tsdf = BlockStore(params)
        self.insertion_log: list[BlockId] = []
        self._log_pos: dict[BlockId, int] = {}
        self.revisions: dict[BlockId, int] = {}
        self.streams: dict[int, StreamState] = {}
        self.annotations: "OrderedDict[tuple[int, int], Annotation]" = OrderedDict()
        self.latest_camera_pose: CameraPose | None = None
        self.latest_robot_links: RobotLinkPoses | None = None
        self.session_ended = False
        self._next_client = 1

    # -- clients ---------------------------------------------------------------

    def register_client(self, client_id: int | None = None) -> StreamState:
        """Fresh hello: stream state starts with the full model replay."""
        if client_id is None:
            client_id = self._next_client
            self._next_client += 1
        state = StreamState(client_id=client_id)
        for bid in self.insertion_log:
            state.pending[bid] = None
        self.streams[client_id] = state
        return state

    def drop_client(self, client_id: int):
        self.streams.pop(client_id, None)

    # -- uploads -----------------------------------------------------------------

    def on_block_upload(self, blocks: list[TsdfBlock]) -> list[BlockId]:
        """Store uploads, convert them plus affected neighbors, queue all."""
        if not blocks:
            return []
        uploaded: list[BlockId] = []
        for b in blocks:
            self.tsdf.insert(b)
            uploaded.append(b.id)

        convert_list: list[BlockId] = []
        seen = set()
        for bid in uploaded:
            if bid not in seen:
                seen.add(bid)
                convert_list.append(bid)
        neighbors = set()
        for bid in uploaded:
            for off in _LOWER_NEIGHBORS:
                nb = (bid[0] + off[0], bid[1] + off[1], bid[2] + off[2])
                if nb not in seen and nb in self.model:
                    neighbors.add(nb)
        convert_list.extend(sorted(neighbors))

        for bid in convert_list:
            self.revisions[bid] = self.revisions.get(bid, 0) + 1
        converted = convert_blocks(self.tsdf, convert_list, self.revisions)
        for mc in converted:
            fresh = mc.id not in self.model
            self.model.insert(mc)
            if fresh:
                self._log_pos[mc.id] = len(self.insertion_log)
                self.insertion_log.append(mc.id)
        for state in self.streams.values():
            for bid in convert_list:
                state.enqueue(bid)
        return convert_list

    # -- serving -----------------------------------------------------------------

    def serve_request(self, client_id: int, req: BlockRequest) -> list[McBlock]:
        state = self.streams[client_id]
        if not state.pending:
            return []
        ids = list(state.pending.keys())
        if req.strategy == Strategy.VIEW_BASED:
            pos = np.asarray(req.view_pose, dtype=np.float64)[:, 3]
            arr = np.asarray(ids, dtype=np.float64)
            centers = (arr + 0.5) * self.params.block_extent
            d2 = ((centers - pos) ** 2).sum(axis=1)
            iarr = np.asarray(ids, dtype=np.int64)
            order = np.lexsort((iarr[:, 2], iarr[:, 1], iarr[:, 0], d2))
            picked = [ids[i] for i in order[: req.count]]
        elif req.strategy == Strategy.RECONSTRUCTION_ORDER:
            picked = sorted(ids, key=self._log_pos.__getitem__)[: req.count]
        else:  # Arbitrary: stream-state iteration order
            picked = ids[: req.count]
        out = []
        for bid in picked:
            state.drop(bid)
            block = self.model.get(bid)
            if block is not None:
                out.append(block)
        return out

    # -- resets, poses, annotations ------------------------------------------------

    def handle_reset(self, region: ResetRegion) -> list[BlockId]:
        lo = np.asarray(region.lo)
        hi = np.asarray(region.hi)
        ext = self.params.block_extent
        removed = []
        for bid in self.model.ids():
            b_lo = np.asarray(bid, dtype=np.float64) * ext
            b_hi = b_lo + ext
            if np.all(b_lo <= hi) and np.all(b_hi >= lo):
                removed.append(bid)
        if not removed:
            return []
        gone = set(removed)
        for bid in removed:
            self.model.remove(bid)
            self.tsdf.remove(bid)
            self.revisions.pop(bid, None)
        self.insertion_log = [b for b in self.insertion_log if b not in gone]
        self._log_pos = {b: i for i, b in enumerate(self.insertion_log)}
        for state in self.streams.values():
            for bid in removed:
                state.drop(bid)
        return removed

    def on_camera_pose(self, msg: CameraPose):
        self.latest_camera_pose = msg

    def on_robot_links(self, msg: RobotLinkPoses):
        self.latest_robot_links = msg

    def add_annotation(self, ann: Annotation):
        self.annotations[ann.key] = ann

    def status_text(self) -> str:
        lines = [
            f"blocks_stored {len(self.model)}",
            f"insertion_log {len(self.insertion_log)}",
            f"clients {len(self.streams)}",
            f"annotations {len(self.annotations)}",
            f"session_ended {int(self.session_ended)}",
        ]
        for cid, state in sorted(self.streams.items()):
            lines.append(f"client {cid} pending {len(state.pending)}")
        return "\n".join(lines)


class _Outbox:
    """Per-connection ordered writer with drop-oldest pose coalescing.

    Block packages and control messages are never dropped; a queued but
    unsent pose is replaced when a newer one of the same kind arrives,
    so slow readers see fresh poses instead of a growing backlog.
    """

    _POSE_TAGS = (CameraPose.TAG, RobotLinkPoses.TAG)

    def __init__(self):
        self._items: OrderedDict[object, bytes] = OrderedDict()
        self._seq = 0
        self._event = asyncio.Event()
        self.closed = False
        self.bytes_out = 0

    def push(self, msg) -> bytes:
        frame = encode(msg)
        key: object
        if msg.TAG in self._POSE_TAGS:
            key = ("pose", msg.TAG)
            self._items.pop(key, None)
        else:
            key = self._seq
            self._seq += 1
        self._items[key] = frame
        self._event.set()
        return frame

    async def drain(self, writer: asyncio.StreamWriter):
        while True:
            while not self._items:
                self._event.clear()
                if self.closed:
                    return
                await self._event.wait()
            _, frame = self._items.popitem(last=False)
            writer.write(frame)
            self.bytes_out += len(frame)
            await writer.drain()

    def close(self):
        self.closed = True
        self._event.set()


@dataclass
class _Connection:
    client_id: int
    role: int
    outbox: _Outbox
    writer: asyncio.StreamWriter | None = None
    bytes_in: int = 0


class TelecastServer:
    """asyncio TCP front end around :class:`ServerCore`."""

    def __init__(
        self,
        params: VolumeParams,
        host: str = "127.0.0.1",
        port: int = 0,
        max_clients: int = 64,
    ):
        self.core = ServerCore(params)
        self.host = host
        self.port = port
        self.max_clients = max_clients
        self._server: asyncio.AbstractServer | None = None
        self._conns: dict[int, _Connection] = {}
        self._writers: set[asyncio.StreamWriter] = set()
        self._next_conn = 1

    async def start(self):
        self._server = await asyncio.start_server(self._handle, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        log.info("listening on %s:%d", self.host, self.port)
        return self

    async def stop(self):
        for conn in list(self._conns.values()):
            conn.outbox.close()
        for writer in list(self._writers):
            transport = writer.transport
            if transport is not None:
                transport.abort()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    @property
    def address(self) -> tuple[str, int]:
        return self.host, self.port

    def _broadcast(self, msg, roles=(Role.EXPLORATION,)):
        for conn in self._conns.values():
            if conn.role in roles:
                conn.outbox.push(msg)

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        if len(self._conns) >= self.max_clients:
            log.warning("refusing connection: at max_clients")
            writer.close()
            return
        self._writers.add(writer)
        decoder = StreamDecoder()
        conn: _Connection | None = None
        writer_task: asyncio.Task | None = None
        try:
            backlog: list = []
            while not backlog:
                data = await reader.read(256 * 1024)
                if not data:
                    writer.close()
                    return
                backlog = decoder.feed(data)
            hello, backlog = backlog[0], backlog[1:]
            if not isinstance(hello, Hello):
                raise ProtocolError("first message must be hello")
            cid = self._next_conn
            self._next_conn += 1
            conn = _Connection(
                client_id=cid, role=hello.role, outbox=_Outbox(), writer=writer
            )
            self._conns[cid] = conn
            writer_task = asyncio.create_task(conn.outbox.drain(writer))
            log.info("client %d connected (role %d, %r)", cid, hello.role, hello.name)

            if hello.role == Role.EXPLORATION:
                self.core.register_client(cid)
                if self.core.latest_camera_pose is not None:
                    conn.outbox.push(self.core.latest_camera_pose)
                if self.core.latest_robot_links is not None:
                    conn.outbox.push(self.core.latest_robot_links)
                for ann in self.core.annotations.values():
                    conn.outbox.push(ann)
                if self.core.session_ended:
                    conn.outbox.push(SessionEnd())

            for queued in backlog:
                self._dispatch(conn, queued)
            while True:
                data = await reader.read(256 * 1024)
                if not data:
                    break
                conn.bytes_in += len(data)
                for msg in decoder.feed(data):
                    self._dispatch(conn, msg)
        except (ProtocolError, ConnectionError, asyncio.IncompleteReadError) as exc:
            log.warning("connection error: %s", exc)
        finally:
            if conn is not None:
                self._conns.pop(conn.client_id, None)
                if conn.role == Role.EXPLORATION:
                    self.core.drop_client(conn.client_id)
                conn.outbox.close()
                if writer_task is not None:
                    try:
                        await asyncio.wait_for(writer_task, timeout=1.0)
                    except (asyncio.TimeoutError, ConnectionError):
                        writer_task.cancel()
                log.info("client %d disconnected", conn.client_id)
            self._writers.discard(writer)
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass

    def _dispatch(self, conn: _Connection, msg):
        core = self.core
        if isinstance(msg, TsdfBlockPackage):
            if msg.block_dim != core.params.block_dim:
                raise ProtocolError("block dim mismatch")
            core.on_block_upload(msg.blocks)
        elif isinstance(msg, CameraPose):
            core.on_camera_pose(msg)
            self._broadcast(msg)
        elif isinstance(msg, RobotLinkPoses):
            core.on_robot_links(msg)
            self._broadcast(msg)
        elif isinstance(msg, BlockRequest):
            blocks = core.serve_request(conn.client_id, msg)
            conn.outbox.push(
                McBlockPackage(blocks=blocks, block_dim=core.params.block_dim)
            )
        elif isinstance(msg, ResetRegion):
            removed = core.handle_reset(msg)
            removal = BlockRemoval(ids=removed)
            self._broadcast(removal, roles=(Role.EXPLORATION, Role.FUSION))
        elif isinstance(msg, Annotation):
            core.add_annotation(msg)
            self._broadcast(msg)
        elif isinstance(msg, SessionEnd):
            core.session_ended = True
            self._broadcast(SessionEnd())
        elif isinstance(msg, StatusRequest):
            conn.outbox.push(StatusReply(text=core.status_text()))
        elif isinstance(msg, Hello):
            raise ProtocolError("duplicate hello")
        else:
            log.warning("ignoring unexpected message %s", type(msg).__name__)

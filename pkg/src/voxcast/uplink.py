"""Network clients on the robot side: block uploads and link poses.

The fusion uplink drains the reconstruction queue toward the server in
fixed-size packages, each accompanied by the current camera pose.  A
dropped connection re-queues any unacknowledged batch at the front of
the queue, so no block is ever lost.  The robot client is a tiny
publisher forwarding named link transforms for avatar rendering.
"""

from __future__ import annotations

import asyncio
import logging

import numpy as np

from voxcast.fusion import FusionCore
from voxcast.protocol import (
    BlockRemoval,
    CameraPose,
    Hello,
    ProtocolError,
    Role,
    RobotLinkPoses,
    SessionEnd,
    StreamDecoder,
    TsdfBlockPackage,
    encode,
)
from voxcast.recording import read_frames, read_header

log = logging.getLogger("voxcast.uplink")


class FusionUplink:
    def __init__(self, core: FusionCore, host: str, port: int, name: str = "fusion"):
        self.core = core
        self.host = host
        self.port = port
        self.name = name
        self._reader: asyncio.StreamReader | None = None
        self._writer: asyncio.StreamWriter | None = None
        self._decoder = StreamDecoder()
        self.bytes_sent = 0
        self.blocks_sent = 0

    async def connect(self):
        self._reader, self._writer = await asyncio.open_connection(self.host, self.port)
        self._decoder = StreamDecoder()
        await self._send(Hello(role=Role.FUSION, name=self.name))

    async def close(self):
        if self._writer is not None:
            self._writer.close()
            try:
                await self._writer.wait_closed()
            except (ConnectionError, OSError):
                pass
            self._writer = None

    async def _send(self, msg):
        if self._writer is None:
            raise ConnectionError("uplink not connected")
        frame = encode(msg)
        self._writer.write(frame)
        await self._writer.drain()
        self.bytes_sent += len(frame)

    async def poll_inbound(self):
        """Apply any pushed messages (non-blocking); resets drop blocks."""
        if self._reader is None:
            return
        while True:
            try:
                data = await asyncio.wait_for(self._reader.read(64 * 1024), timeout=0.001)
            except asyncio.TimeoutError:
                return
            if not data:
                raise ConnectionError("server closed uplink")
            for msg in self._decoder.feed(data):
                if isinstance(msg, BlockRemoval):
                    dropped = self.core.drop_blocks(msg.ids)
                    log.info("reset dropped %d local blocks", dropped)

    async def upload_tick(self, pose, timestamp: float, batch: int | None = None) -> int:
        """Send up to one batch of queued blocks plus the camera pose.

        An empty queue still sends the pose as a heartbeat.  Returns the
        number of blocks shipped; on connection loss the popped batch
        goes back to the front of the queue and the error propagates.
        """
        blocks = self.core.pop_batch(batch)
        try:
            if blocks:
                await self._send(
                    TsdfBlockPackage(
                        blocks=blocks, block_dim=self.core.params.block_dim
                    )
                )
            await self._send(
                CameraPose(timestamp=timestamp, pose=np.asarray(pose, np.float32))
            )
        except ConnectionError:
            self.core.requeue_front(blocks)
            raise
        self.blocks_sent += len(blocks)
        return len(blocks)

    async def flush_all(self, pose, timestamp: float):
        """Queue every remaining update and drain the queue completely."""
        self.core.flush_session_end()
        while self.core.pending:
            await self.upload_tick(pose, timestamp)

    async def end_session(self):
        await self._send(SessionEnd())


async def replay_session(
    path,
    host: str,
    port: int,
    batch: int | None = None,
    core: FusionCore | None = None,
    upload_every: int = 1,
    speeds: list[float] | None = None,
) -> FusionCore:
    """Replay a recorded session into a server over the wire.

    Recorded frames carry no velocity, so the commanded speed per frame
    may be supplied externally; without it the motion state is derived
    from pose deltas between consecutive frames.
    """
    header = read_header(path)
    if core is None:
        core = FusionCore(header.params)
    uplink = FusionUplink(core, host, port)
    await uplink.connect()
    last_pos = None
    try:
        for i, frame in enumerate(read_frames(path)):
            pos = np.asarray(frame.pose, dtype=np.float64)[:, 3]
            if speeds is not None:
                speed = speeds[i]
            elif last_pos is None:
                speed = 0.0
            else:
                speed = float(np.linalg.norm(pos - last_pos)) * 30.0
            last_pos = pos
            core.process_frame(frame, commanded_speed=speed)
            if i % upload_every == 0:
                await uplink.upload_tick(frame.pose, frame.timestamp, batch)
                await uplink.poll_inbound()
        final = core.store.ids()
        if final:
            last_frame_pose = frame.pose
            await uplink.flush_all(last_frame_pose, frame.timestamp)
        await uplink.end_session()
    finally:
        await uplink.close()
    return core


class RobotClient:
    """Publishes robot link poses to the server for avatar rendering."""

    def __init__(self, host: str, port: int, name: str = "robot"):
        self.host = host
        self.port = port
        self.name = name
        self._writer: asyncio.StreamWriter | None = None

    async def connect(self):
        _, self._writer = await asyncio.open_connection(self.host, self.port)
        self._writer.write(encode(Hello(role=Role.ROBOT, name=self.name)))
        await self._writer.drain()

    async def publish(self, timestamp: float, links):
        """Send one RobotLinkPoses message (links: [(name, 3x4 pose)])."""
        if self._writer is None:
            raise ConnectionError("robot client not connected")
        self._writer.write(
            encode(RobotLinkPoses(timestamp=timestamp, links=list(links)))
        )
        await self._writer.drain()

    async def close(self):
        if self._writer is not None:
            self._writer.close()
            try:
                await self._writer.wait_closed()
            except (ConnectionError, OSError):
                pass
            self._writer = None

"""Live capture rig: simulator, fusion and uplink in one process.

This is the robot-side stack for interactive runs: a teleop listener
feeds velocity commands into the simulated base (last writer wins), the
arm sweeps and renders frames, fusion integrates them, finished blocks
stream to the server and link poses go out for avatar rendering.

Teleop wire format: newline-delimited JSON objects
{"vx": float, "vy": float, "omega": float, "stop": bool} over TCP.
"""

from __future__ import annotations

import asyncio
import json
import logging

import numpy as np

from voxcast.blocks import VolumeParams
from voxcast.fusion import FusionConfig, FusionCore
from voxcast.recording import RecordingWriter
from voxcast.sim.camera import CameraIntrinsics, render_frame
from voxcast.sim.robot import (
    RobotConfig,
    RobotState,
    TeleopCommand,
    arm_camera_pose,
    link_poses,
    step,
)
from voxcast.sim.scene import SceneSdf
from voxcast.uplink import FusionUplink, RobotClient

log = logging.getLogger("voxcast.capture")

SIM_DT = 1.0 / 30.0


class TeleopServer:
    """JSON-lines TCP listener holding the latest velocity command.

    A watchdog zeroes the command when no writer has spoken for
    `timeout` seconds, so a dead operator link stops the robot.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0, timeout: float = 0.5):
        self.host = host
        self.port = port
        self.timeout = timeout
        self.command = TeleopCommand()
        self.last_update: float | None = None
        self.commands_seen = 0
        self._server: asyncio.AbstractServer | None = None

    async def start(self):
        self._server = await asyncio.start_server(self._handle, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        return self

    async def stop(self):
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        try:
            while True:
                line = await reader.readline()
                if not line:
                    break
                try:
                    data = json.loads(line)
                    cmd = TeleopCommand(
                        vx=float(data.get("vx", 0.0)),
                        vy=float(data.get("vy", 0.0)),
                        omega=float(data.get("omega", 0.0)),
                        stop=bool(data.get("stop", False)),
                    )
                except (ValueError, TypeError) as exc:
                    log.warning("bad teleop line %r: %s", line[:80], exc)
                    continue
                self.command = cmd
                self.commands_seen += 1
                self.last_update = asyncio.get_running_loop().time()
        finally:
            writer.close()

    def current(self) -> TeleopCommand:
        now = asyncio.get_running_loop().time()
        if self.last_update is not None and now - self.last_update > self.timeout:
            return TeleopCommand(stop=True)
        return self.command


class TeleopLink:
    """Client side of the teleop channel (gateway or scripts)."""

    def __init__(self, host: str, port: int):
        self.host = host
        self.port = port
        self._writer: asyncio.StreamWriter | None = None

    async def connect(self):
        _, self._writer = await asyncio.open_connection(self.host, self.port)

    async def send(self, vx=0.0, vy=0.0, omega=0.0, stop=False):
        if self._writer is None:
            raise ConnectionError("teleop link not connected")
        line = json.dumps({"vx": vx, "vy": vy, "omega": omega, "stop": stop}) + "\n"
        self._writer.write(line.encode())
        await self._writer.drain()

    async def send_zero(self):
        await self.send(stop=True)

    async def close(self):
        if self._writer is not None:
            self._writer.close()
            try:
                await self._writer.wait_closed()
            except (ConnectionError, OSError):
                pass
            self._writer = None


class LiveRig:
    """Steps the robot, renders, fuses and streams, in real or hurried time."""

    def __init__(
        self,
        scene: SceneSdf,
        params: VolumeParams,
        intrinsics: CameraIntrinsics,
        server_addr: tuple[str, int],
        teleop: TeleopServer,
        robot_cfg: RobotConfig = RobotConfig(),
        fusion_cfg: FusionConfig = FusionConfig(),
        render_every: int = 3,
        upload_every: int = 3,
        noise_sigma: float = 0.0,
        record_path=None,
        start: RobotState = RobotState(),
        realtime: bool = True,
        seed: int = 0,
    ):
        self.scene = scene
        self.params = params
        self.intrinsics = intrinsics
        self.teleop = teleop
        self.robot_cfg = robot_cfg
        self.render_every = render_every
        self.upload_every = upload_every
        self.noise_sigma = noise_sigma
        self.realtime = realtime
        self.state = start
        self.core = FusionCore(params, fusion_cfg)
        self.uplink = FusionUplink(self.core, *server_addr)
        self.robot_client = RobotClient(*server_addr)
        self.rng = np.random.default_rng(seed)
        self.writer = (
            RecordingWriter(record_path, intrinsics, params) if record_path else None
        )
        self.tick = 0
        self.running = False

    async def start(self):
        await self.uplink.connect()
        await self.robot_client.connect()
        self.running = True

    async def stop(self, end_session: bool = True):
        self.running = False
        pose = arm_camera_pose(self.state, self.robot_cfg)
        if end_session:
            try:
                await self.uplink.flush_all(pose.astype(np.float32), self.tick * SIM_DT)
                await self.uplink.end_session()
            except ConnectionError:
                log.warning("uplink lost during session end")
        await self.uplink.close()
        await self.robot_client.close()
        if self.writer is not None:
            self.writer.close()

    async def run_ticks(self, n: int):
        for _ in range(n):
            if not self.running:
                return
            await self.step_once()
            if self.realtime:
                await asyncio.sleep(SIM_DT)
            else:
                await asyncio.sleep(0)

    async def step_once(self):
        cmd = self.teleop.current()
        self.state = step(self.state, cmd, SIM_DT, self.scene, self.robot_cfg)
        t = self.tick * SIM_DT
        if self.tick % self.render_every == 0:
            pose = arm_camera_pose(self.state, self.robot_cfg)
            frame = render_frame(
                pose,
                self.intrinsics,
                self.scene,
                timestamp=t,
                noise_sigma=self.noise_sigma,
                rng=self.rng,
            )
            if self.writer is not None:
                self.writer.append(frame)
            self.core.process_frame(frame, commanded_speed=self.state.speed)
        if self.tick % self.upload_every == 0:
            pose = arm_camera_pose(self.state, self.robot_cfg).astype(np.float32)
            await self.uplink.upload_tick(pose, t)
            await self.uplink.poll_inbound()
            await self.robot_client.publish(t, link_poses(self.state, self.robot_cfg))
        self.tick += 1

"""WebSocket gateway between an exploration client and the browser UI.

Everything is JSON for UI friendliness; mesh buffers travel base64.
Outbound messages: hello, mesh_patch, block_removed, camera_pose,
robot, annotation, measurement, reset_done.  Inbound commands: teleop,
measure, annotate, reset.

Dead-man rule: when a UI socket disconnects (or the gateway shuts
down), a zero-velocity stop command goes to the simulator immediately.
"""

from __future__ import annotations

import asyncio
import base64
import json
import logging
import math

import numpy as np
import websockets

from voxcast.explore import ExplorationClient, lod_for_distance
from voxcast.meshing import Mesh
from voxcast.protocol import Annotation, Label, ResetRegion

log = logging.getLogger("voxcast.gateway")


def _b64(arr: np.ndarray, dtype) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype=dtype).tobytes()).decode()


def mesh_patch_message(block_id, lod: int, revision: int, mesh: Mesh) -> dict:
    return {
        "type": "mesh_patch",
        "block": list(block_id),
        "lod": lod,
        "revision": revision,
        "vertices": _b64(mesh.vertices, "<f4"),
        "colors": _b64(mesh.colors, np.uint8),
        "indices": _b64(mesh.triangles, "<u4"),
    }


def robot_message(client: ExplorationClient) -> dict | None:
    links = client.core.latest_robot_links
    if links is None:
        return None
    return {
        "type": "robot",
        "ts": links.timestamp,
        "links": {
            name: [float(v) for v in pose.reshape(-1)] for name, pose in links.links
        },
        "base": list(client.core.filtered_base or (0.0, 0.0, 0.0)),
    }


def annotation_message(ann: Annotation) -> dict:
    return {
        "type": "annotation",
        "lo": list(ann.lo),
        "hi": list(ann.hi),
        "label": Label.NAMES[ann.label],
        "author": ann.author,
        "seq": ann.seq,
    }


class Gateway:
    def __init__(
        self,
        client: ExplorationClient,
        teleop_link=None,
        host: str = "127.0.0.1",
        port: int = 0,
        patch_lod: int | None = 0,
    ):
        self.client = client
        self.teleop = teleop_link
        self.host = host
        self.port = port
        self.patch_lod = patch_lod
        self._sockets: set = set()
        self._server = None
        self._known: dict[tuple, int] = {}  # (block, lod) -> revision sent

    async def start(self):
        self._server = await websockets.serve(self._handle, self.host, self.port)
        self.port = next(iter(self._server.sockets)).getsockname()[1]
        log.info("gateway listening on ws://%s:%d", self.host, self.port)
        return self

    async def stop(self):
        for ws in list(self._sockets):
            await ws.close()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        await self._dead_man()

    async def _dead_man(self):
        if self.teleop is not None:
            try:
                await self.teleop.send_zero()
            except (ConnectionError, OSError):
                log.warning("dead-man stop could not reach the simulator")

    # -- outbound -----------------------------------------------------------

    async def _send(self, ws, payload: dict):
        await ws.send(json.dumps(payload))

    async def broadcast(self, payload: dict):
        dead = []
        for ws in self._sockets:
            try:
                await self._send(ws, payload)
            except websockets.ConnectionClosed:
                dead.append(ws)
        for ws in dead:
            self._sockets.discard(ws)

    def _patch_levels(self, block_id):
        if self.patch_lod is not None:
            return (self.patch_lod,)
        base = self.client.core.filtered_base
        if base is None:
            return (0,)
        center = (np.asarray(block_id) + 0.5) * self.client.params.block_extent
        dist = math.hypot(center[0] - base[0], center[1] - base[1])
        return (lod_for_distance(dist),)

    async def push_updates(self, stale_ids) -> int:
        """Send mesh patches for blocks whose meshes changed."""
        sent = 0
        core = self.client.core
        for bid in stale_ids:
            rev = core.store.revision.get(bid)
            if rev is None:
                continue
            for lod in self._patch_levels(bid):
                mesh = core.meshes.get((bid, lod))
                if mesh is None:
                    continue
                if self._known.get((bid, lod)) == rev:
                    continue
                self._known[(bid, lod)] = rev
                await self.broadcast(mesh_patch_message(bid, lod, rev, mesh))
                sent += 1
        return sent

    async def push_removal(self, ids):
        for bid in ids:
            for lod in range(4):
                self._known.pop((bid, lod), None)
        await self.broadcast({"type": "block_removed", "blocks": [list(i) for i in ids]})

    async def push_poses(self):
        cam = self.client.core.latest_camera_pose
        if cam is not None:
            await self.broadcast(
                {
                    "type": "camera_pose",
                    "ts": cam.timestamp,
                    "pose": [float(v) for v in np.asarray(cam.pose).reshape(-1)],
                }
            )
        robot = robot_message(self.client)
        if robot is not None:
            await self.broadcast(robot)

    # -- inbound ----------------------------------------------------------------

    async def _handle(self, ws):
        self._sockets.add(ws)
        core = self.client.core
        try:
            await self._send(ws, {"type": "hello", "author": core.author_id})
            # replay current state to the fresh UI
            for (bid, lod), mesh in list(core.meshes.items()):
                if lod in self._patch_levels(bid) and not mesh.empty:
                    rev = core.store.revision.get(bid)
                    if rev is not None:
                        await self._send(ws, mesh_patch_message(bid, lod, rev, mesh))
            for ann in core.annotations.values():
                await self._send(ws, annotation_message(ann))
            robot = robot_message(self.client)
            if robot is not None:
                await self._send(ws, robot)
            async for raw in ws:
                try:
                    msg = json.loads(raw)
                    await self._dispatch(ws, msg)
                except (ValueError, KeyError, TypeError) as exc:
                    await self._send(ws, {"type": "error", "message": str(exc)})
        except websockets.ConnectionClosed:
            pass
        finally:
            self._sockets.discard(ws)
            await self._dead_man()

    async def _dispatch(self, ws, msg: dict):
        kind = msg.get("type")
        if kind == "teleop":
            if self.teleop is not None:
                await self.teleop.send(
                    vx=float(msg.get("vx", 0.0)),
                    vy=float(msg.get("vy", 0.0)),
                    omega=float(msg.get("omega", 0.0)),
                    stop=bool(msg.get("stop", False)),
                )
        elif kind == "measure":
            result = self.client.core.measure_distance(
                (msg["a"]["origin"], msg["a"]["dir"]),
                (msg["b"]["origin"], msg["b"]["dir"]),
            )
            reply = {"type": "measurement", "id": msg.get("id")}
            if result is None:
                reply["miss"] = True
            else:
                dist, hit_a, hit_b = result
                reply.update(
                    distance=dist,
                    a=[float(v) for v in hit_a.point],
                    b=[float(v) for v in hit_b.point],
                )
            await self._send(ws, reply)
        elif kind == "annotate":
            label = Label.FROM_NAME.get(msg.get("label"))
            if label is None:
                raise ValueError(f"unknown label {msg.get('label')!r}")
            ann = self.client.core.make_annotation(
                tuple(msg["lo"]), tuple(msg["hi"]), label
            )
            await self.client.send(ann)
            await self.broadcast(annotation_message(ann))
        elif kind == "reset":
            await self.client.send(ResetRegion(lo=tuple(msg["lo"]), hi=tuple(msg["hi"])))
            await self._send(ws, {"type": "reset_requested"})
        else:
            raise ValueError(f"unknown command {kind!r}")


async def run_gateway_session(client: ExplorationClient, gateway: Gateway, duration=None):
    """Drive the request loop while pushing UI updates as they land."""
    loop = asyncio.get_running_loop()
    deadline = loop.time() + duration if duration is not None else None
    while deadline is None or loop.time() < deadline:
        try:
            if not client.connected.is_set():
                await client.connect()
            blocks = await client.request_once()
            if blocks:
                stale = set()
                for b in blocks:
                    stale.add(b.id)
                    stale.update(
                        nb for nb in _lower_neighbors(b.id) if nb in client.core.store
                    )
                await gateway.push_updates(stale)
            await gateway.push_poses()
            if client.pace:
                await asyncio.sleep(1.0 / client.rate)
        except (ConnectionError, OSError):
            client.connected.clear()
            await asyncio.sleep(0.1)


def _lower_neighbors(bid):
    from voxcast.tsdf import SHELL_OFFSETS

    for off in SHELL_OFFSETS:
        yield (bid[0] - off[0], bid[1] - off[1], bid[2] - off[2])

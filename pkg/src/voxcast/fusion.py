"""Reconstruction client core: frame integration and upload scheduling.

Frames with known camera poses are fused into the sparse TSDF volume.
A block is considered finished for now when it leaves the camera
frustum, at which point it is queued for upload; when the robot stops
moving, or when the session ends, the currently visible updated blocks
are queued as well.  The queue deduplicates and preserves FIFO order so
the server receives blocks roughly in reconstruction order.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from voxcast.blocks import (
    BlockId,
    VolumeParams,
    pack_block_ids,
    unpack_block_ids,
)
from voxcast.sim.camera import CameraIntrinsics, FrameRGBD, check_pose_orthonormal
from voxcast.tsdf import WEIGHT_CAP, BlockStore, SDF_SCALE, TsdfBlock

MOVING = "moving"
STOPPED = "stopped"


@dataclass(frozen=True)
class FusionConfig:
    z_min: float = 0.1
    z_max: float = 5.0
    stop_speed: float = 1e-3  # m/s below which the base counts as stationary
    stop_duration: float = 0.5  # s the speed must stay below stop_speed
    upload_batch: int = 512
    update_chunk: int = 4096  # blocks per vectorized update pass


class Frustum:
    """Six inward-facing planes (n, d): inside means n.p + d >= 0."""

    def __init__(self, planes: np.ndarray):
        self.planes = np.asarray(planes, dtype=np.float64).reshape(6, 4)

    @classmethod
    def from_camera(
        cls, pose, intrinsics: CameraIntrinsics, z_min: float, z_max: float
    ) -> "Frustum":
        pose = np.asarray(pose, dtype=np.float64)
        rot, pos = pose[:, :3], pose[:, 3]
        w, h = intrinsics.width, intrinsics.height

        def ray(u, v):
            return np.array(
                [(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0]
            )

        tl, tr = ray(-0.5, -0.5), ray(w - 0.5, -0.5)
        bl, br = ray(-0.5, h - 0.5), ray(w - 0.5, h - 0.5)
        center = np.array([0.0, 0.0, 1.0])
        planes = [
            (np.array([0.0, 0.0, 1.0]), -z_min),
            (np.array([0.0, 0.0, -1.0]), z_max),
        ]
        for a, b in ((bl, tl), (tr, br), (tl, tr), (br, bl)):
            n = np.cross(a, b)
            if n @ center < 0:
                n = -n
            n /= np.linalg.norm(n)
            planes.append((n, 0.0))

        world = np.empty((6, 4))
        for i, (n_c, d_c) in enumerate(planes):
            n_w = rot @ n_c
            world[i, :3] = n_w
            world[i, 3] = d_c - n_w @ pos
        return cls(world)

    def intersects_spheres(self, centers: np.ndarray, radius: float) -> np.ndarray:
        """Conservative sphere-vs-frustum test, vectorized over centers."""
        centers = np.atleast_2d(centers)
        inside = np.ones(len(centers), dtype=bool)
        for n0, n1, n2, d in self.planes:
            inside &= centers @ np.array([n0, n1, n2]) + d >= -radius
        return inside


@lru_cache(maxsize=4)
def _pixel_dirs(intr: CameraIntrinsics):
    """Unnormalized camera-frame directions (z = 1) per pixel, flattened."""
    u = np.arange(intr.width, dtype=np.float64)
    v = np.arange(intr.height, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    return np.stack(
        [(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy, np.ones_like(uu)],
        axis=-1,
    ).reshape(-1, 3)


@lru_cache(maxsize=4)
def _voxel_template(dim: int):
    """(dim^3, 3) voxel lattice offsets in x-fastest order."""
    zz, yy, xx = np.meshgrid(
        np.arange(dim), np.arange(dim), np.arange(dim), indexing="ij"
    )
    return np.stack([xx.ravel(), yy.ravel(), zz.ravel()], axis=1).astype(np.float64)


class FusionCore:
    def __init__(self, params: VolumeParams, config: FusionConfig = FusionConfig()):
        self.params = params
        self.config = config
        self.store = BlockStore(params)
        self.dirty: set[BlockId] = set()
        self.pending: OrderedDict[BlockId, None] = OrderedDict()
        self.in_frustum: set[BlockId] = set()
        self.uploaded: set[BlockId] = set()
        self.motion_state = MOVING
        self._slow_since: float | None = None
        self._id_cache: np.ndarray | None = None

    # -- motion -------------------------------------------------------------

    def note_motion(self, commanded_speed: float, timestamp: float) -> str:
        if commanded_speed < self.config.stop_speed:
            if self._slow_since is None:
                self._slow_since = timestamp
            if timestamp - self._slow_since >= self.config.stop_duration:
                self.motion_state = STOPPED
        else:
            self._slow_since = None
            self.motion_state = MOVING
        return self.motion_state

    # -- integration ----------------------------------------------------------

    def integrate_frame(self, frame: FrameRGBD) -> set[BlockId]:
        """Fuse one posed frame; returns the blocks whose voxels changed."""
        check_pose_orthonormal(frame.pose)
        params, cfg = self.params, self.config
        intr = frame.intrinsics
        pose = np.asarray(frame.pose, dtype=np.float64)
        rot, pos = pose[:, :3], pose[:, 3]

        depth_m = frame.depth.reshape(-1).astype(np.float64) * intr.depth_scale
        valid = (frame.depth.reshape(-1) > 0) & (depth_m >= cfg.z_min) & (
            depth_m <= cfg.z_max
        )
        if not valid.any():
            return set()

        dirs = _pixel_dirs(intr)[valid]
        z_hit = depth_m[valid]

        # Allocate every block the truncation band touches along each ray.
        n_samples = int(np.ceil(4.0 * params.trunc_dist / params.block_extent)) + 1
        span = np.linspace(-params.trunc_dist, params.trunc_dist, n_samples)
        z_band = np.maximum(z_hit[:, None] + span[None, :], 1e-3)
        pts = dirs[:, None, :] * z_band[:, :, None]
        pts = pts.reshape(-1, 3) @ rot.T + pos
        packed = np.unique(
            pack_block_ids(np.floor(pts / params.block_extent).astype(np.int64))
        )
        cand_ids = [tuple(r) for r in unpack_block_ids(packed).tolist()]
        for bid in cand_ids:
            if bid not in self.store:
                self.store.allocate(bid)
                self._id_cache = None

        # Update every voxel of the candidate blocks that projects into
        # the frame within the truncation band.  Projection runs over
        # whole blocks; the weighted average touches only in-band voxels
        # through a flat scatter, which keeps the per-frame cost near
        # the amount of surface actually observed.
        touched: set[BlockId] = set()
        depth_flat = depth_m.astype(np.float32)
        color_flat = frame.color.reshape(-1, 3)
        d3 = params.voxels_per_block
        template_cam = (
            (_voxel_template(params.block_dim) * params.voxel_size) @ rot
        ).astype(np.float32)
        cap = self.store.sdf.shape[0]
        sdf_rows = self.store.sdf.reshape(cap, d3)
        wgt_rows = self.store.weight.reshape(cap, d3)
        col_rows = self.store.color.reshape(cap, d3, 3)
        voxel_col = np.tile(np.arange(d3, dtype=np.int64), cfg.update_chunk)

        for lo in range(0, len(cand_ids), cfg.update_chunk):
            part = cand_ids[lo : lo + cfg.update_chunk]
            nb = len(part)
            slots = self.store.slots_for(part)
            origins = np.asarray(part, dtype=np.float64) * params.block_extent
            block_cam = ((origins - pos) @ rot).astype(np.float32)
            cam = (block_cam[:, None, :] + template_cam[None, :, :]).reshape(-1, 3)
            z = cam[:, 2]
            ok = z > cfg.z_min
            inv = np.where(ok, 1.0 / np.where(ok, z, 1.0), 0.0).astype(np.float32)
            u = (cam[:, 0] * inv * intr.fx + (intr.cx + 0.5)).astype(np.int32)
            v = (cam[:, 1] * inv * intr.fy + (intr.cy + 0.5)).astype(np.int32)
            ok &= (u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)
            pix = np.where(ok, v.astype(np.int64) * intr.width + u, 0)
            d_px = depth_flat[pix]
            sdf_m = d_px - z
            ok &= (d_px >= cfg.z_min) & (d_px <= cfg.z_max)
            ok &= np.abs(sdf_m) <= params.trunc_dist
            flat = np.nonzero(ok)[0]
            if len(flat) == 0:
                continue

            rows = slots[flat // d3]
            cols = voxel_col[: nb * d3][flat]
            w_old = wgt_rows[rows, cols].astype(np.float32)
            w_new = w_old + 1.0
            d_old = sdf_rows[rows, cols].astype(np.float32) * (1.0 / SDF_SCALE)
            sdf_n = sdf_m[flat] * (1.0 / params.trunc_dist)
            d_avg = (w_old * d_old + sdf_n) / w_new
            c_old = col_rows[rows, cols].astype(np.float32)
            c_new = color_flat[pix[flat]].astype(np.float32)
            c_avg = (w_old[:, None] * c_old + c_new) / w_new[:, None]

            sdf_rows[rows, cols] = np.clip(
                np.rint(d_avg * SDF_SCALE), -SDF_SCALE, SDF_SCALE
            ).astype(np.int16)
            wgt_rows[rows, cols] = np.minimum(w_new, WEIGHT_CAP).astype(np.uint8)
            col_rows[rows, cols] = np.clip(c_avg + 0.5, 0, 255).astype(np.uint8)

            hit_blocks = np.unique(flat // d3)
            touched.update(part[i] for i in hit_blocks.tolist())

        self.dirty.update(touched)
        return touched

    # -- streaming decisions ---------------------------------------------------

    def _block_id_array(self) -> np.ndarray:
        if self._id_cache is None or len(self._id_cache) != len(self.store):
            self._id_cache = self.store.id_array()
        return self._id_cache

    def visible_blocks(self, frustum: Frustum) -> set[BlockId]:
        ids = self._block_id_array()
        if len(ids) == 0:
            return set()
        centers = (ids.astype(np.float64) + 0.5) * self.params.block_extent
        radius = self.params.block_extent * np.sqrt(3.0) / 2.0
        mask = frustum.intersects_spheres(centers, radius)
        return {tuple(r) for r in ids[mask].tolist()}

    def _enqueue(self, ids) -> list[BlockId]:
        queued = []
        for bid in ids:
            if bid in self.dirty:
                self.dirty.discard(bid)
                if bid not in self.pending:
                    self.pending[bid] = None
                queued.append(bid)
        return queued

    def select_streamable(self, frustum: Frustum) -> list[BlockId]:
        """Queue blocks that left the frustum; all visible ones when stopped.

        Only blocks actually updated since their last upload are queued;
        re-sending unchanged content would waste the uplink.
        """
        visible = self.visible_blocks(frustum)
        left = self.in_frustum - visible
        queued = self._enqueue(sorted(left))
        if self.motion_state == STOPPED:
            queued += self._enqueue(sorted(visible))
        self.in_frustum = visible
        return queued

    def flush_session_end(self) -> list[BlockId]:
        return self._enqueue(sorted(self.dirty))

    def process_frame(
        self, frame: FrameRGBD, commanded_speed: float = 0.0
    ) -> list[BlockId]:
        """Convenience tick: integrate, update motion, apply queueing rules."""
        self.integrate_frame(frame)
        self.note_motion(commanded_speed, frame.timestamp)
        frustum = Frustum.from_camera(
            frame.pose, frame.intrinsics, self.config.z_min, self.config.z_max
        )
        return self.select_streamable(frustum)

    # -- upload queue ----------------------------------------------------------

    def pop_batch(self, limit: int | None = None) -> list[TsdfBlock]:
        """Dequeue up to `limit` blocks FIFO as immutable snapshots."""
        n = limit if limit is not None else self.config.upload_batch
        out = []
        while self.pending and len(out) < n:
            bid, _ = self.pending.popitem(last=False)
            out.append(self.store.snapshot(bid))
            self.uploaded.add(bid)
            # content as-of-now is leaving; edits after this are new dirt
            self.dirty.discard(bid)
        return out

    def requeue_front(self, blocks: list[TsdfBlock]):
        """Return unsent blocks to the head of the queue (connection loss)."""
        head = OrderedDict((b.id, None) for b in blocks)
        head.update(self.pending)
        self.pending = head

    def drop_blocks(self, ids) -> int:
        """Forget blocks entirely (server-driven region reset)."""
        dropped = 0
        for bid in ids:
            if self.store.remove(bid):
                dropped += 1
            self.dirty.discard(bid)
            self.pending.pop(bid, None)
            self.uploaded.discard(bid)
            self.in_frustum.discard(bid)
        if dropped:
            self._id_cache = None
        return dropped

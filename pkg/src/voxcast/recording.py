"""Session recording files: posed RGB-D streams for replay and tests.

Layout (little-endian):

    magic  "VCREC1"
    u32    width, u32 height
    f64    fx, fy, cx, cy, depth_scale
    f64    voxel_size, trunc_dist
    u32    block_dim
    frames until EOF, each:
        f64   timestamp
        12xf32  camera-to-world pose, row-major 3x4
        w*h   u16 depth units (0 = invalid)
        3*w*h u8 RGB
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from voxcast.blocks import VolumeParams
from voxcast.sim.camera import CameraIntrinsics, FrameRGBD

MAGIC = b"VCREC1"
_HEADER = struct.Struct("<II5d2dI")


@dataclass(frozen=True)
class RecordingHeader:
    intrinsics: CameraIntrinsics
    params: VolumeParams


class RecordingWriter:
    def __init__(self, path, intrinsics: CameraIntrinsics, params: VolumeParams):
        self.intrinsics = intrinsics
        self.params = params
        self._fh = open(path, "wb")
        self._fh.write(MAGIC)
        self._fh.write(
            _HEADER.pack(
                intrinsics.width,
                intrinsics.height,
                intrinsics.fx,
                intrinsics.fy,
                intrinsics.cx,
                intrinsics.cy,
                intrinsics.depth_scale,
                params.voxel_size,
                params.trunc_dist,
                params.block_dim,
            )
        )
        self.frames = 0

    def append(self, frame: FrameRGBD):
        intr = self.intrinsics
        if frame.depth.shape != (intr.height, intr.width):
            raise ValueError("frame resolution does not match recording header")
        self._fh.write(struct.pack("<d", frame.timestamp))
        self._fh.write(np.ascontiguousarray(frame.pose, dtype="<f4").tobytes())
        self._fh.write(np.ascontiguousarray(frame.depth, dtype="<u2").tobytes())
        self._fh.write(np.ascontiguousarray(frame.color, dtype=np.uint8).tobytes())
        self.frames += 1

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_header(path) -> RecordingHeader:
    with open(path, "rb") as fh:
        return _parse_header(fh)


def _parse_header(fh) -> RecordingHeader:
    magic = fh.read(len(MAGIC))
    if magic != MAGIC:
        raise ValueError(f"not a session recording (magic {magic!r})")
    fields = _HEADER.unpack(fh.read(_HEADER.size))
    w, h, fx, fy, cx, cy, depth_scale, voxel, trunc, dim = fields
    return RecordingHeader(
        intrinsics=CameraIntrinsics(
            width=w, height=h, fx=fx, fy=fy, cx=cx, cy=cy, depth_scale=depth_scale
        ),
        params=VolumeParams(voxel_size=voxel, trunc_dist=trunc, block_dim=dim),
    )


def read_frames(path) -> Iterator[FrameRGBD]:
    """Stream frames from a recording; the header is re-read internally."""
    with open(path, "rb") as fh:
        header = _parse_header(fh)
        intr = header.intrinsics
        w, h = intr.width, intr.height
        frame_bytes = 8 + 48 + 2 * w * h + 3 * w * h
        while True:
            blob = fh.read(frame_bytes)
            if not blob:
                return
            if len(blob) != frame_bytes:
                raise ValueError("truncated recording frame")
            (ts,) = struct.unpack_from("<d", blob)
            pose = np.frombuffer(blob, "<f4", count=12, offset=8).reshape(3, 4).copy()
            depth = (
                np.frombuffer(blob, "<u2", count=w * h, offset=56)
                .reshape(h, w)
                .copy()
            )
            color = (
                np.frombuffer(blob, np.uint8, count=3 * w * h, offset=56 + 2 * w * h)
                .reshape(h, w, 3)
                .copy()
            )
            yield FrameRGBD(
                timestamp=ts, depth=depth, color=color, pose=pose, intrinsics=intr
            )

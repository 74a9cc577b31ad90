"""Compact marching-cubes voxel blocks and TSDF conversion.

An MC voxel stores the 8-bit cell configuration of the cell based at
that voxel, plus quantized surface intersections on the three edges the
voxel owns (toward +x/+y/+z) and an RGB color.  Fusion weights are
dropped in the conversion; the result is the bandwidth-efficient unit
streamed to exploration clients.

Wire layout per block (bit-exact, little-endian): 12-byte id
(3 x int32), 8-byte revision (uint64), then block_dim^3 voxels of
7 bytes each (mc_index, off_x, off_y, off_z, r, g, b), x-fastest.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from voxcast.blocks import BlockId, VolumeParams
from voxcast.mc_tables import CORNER_OFFSETS
from voxcast.tsdf import SDF_SCALE, BlockStore, TsdfBlock

_BLOCK_HEADER = struct.Struct("<iiiQ")
_TSDF_HEADER = struct.Struct("<iii")

NO_SURFACE = 0  # cell emits nothing; also the forced value at observation frontiers


def mc_index(corner_sdf) -> int:
    """Cell configuration: bit k set iff corner k is inside (sdf < 0)."""
    idx = 0
    for k, s in enumerate(corner_sdf):
        if s < 0:
            idx |= 1 << k
    return idx


def edge_offset(sdf_a: float, sdf_b: float) -> int:
    """Quantized intersection parameter along an edge with a sign change.

    t = a / (a - b), mapped to [0, 255] with round-half-up.  Undefined
    without a sign change; callers store 0 and never read it.
    """
    t = sdf_a / (sdf_a - sdf_b)
    t = min(max(t, 0.0), 1.0)
    return int(np.floor(t * 255.0 + 0.5))


@dataclass
class McBlock:
    id: BlockId
    revision: int
    mc: np.ndarray  # uint8 (d, d, d) [z, y, x]
    offsets: np.ndarray  # uint8 (d, d, d, 3), axis order x, y, z
    color: np.ndarray  # uint8 (d, d, d, 3)

    @property
    def dim(self) -> int:
        return self.mc.shape[0]


def serialized_block_size(block_dim: int) -> int:
    return _BLOCK_HEADER.size + 7 * block_dim**3


def serialize_mc_block(block: McBlock) -> bytes:
    d = block.dim
    body = np.empty((d**3, 7), dtype=np.uint8)
    body[:, 0] = block.mc.ravel()
    body[:, 1:4] = block.offsets.reshape(-1, 3)
    body[:, 4:7] = block.color.reshape(-1, 3)
    head = _BLOCK_HEADER.pack(block.id[0], block.id[1], block.id[2], block.revision)
    return head + body.tobytes()


def deserialize_mc_block(buf: bytes, block_dim: int, offset: int = 0) -> McBlock:
    x, y, z, revision = _BLOCK_HEADER.unpack_from(buf, offset)
    n = block_dim**3
    body = np.frombuffer(
        buf, dtype=np.uint8, count=n * 7, offset=offset + _BLOCK_HEADER.size
    ).reshape(n, 7)
    d = block_dim
    return McBlock(
        id=(x, y, z),
        revision=revision,
        mc=body[:, 0].reshape(d, d, d).copy(),
        offsets=body[:, 1:4].reshape(d, d, d, 3).copy(),
        color=body[:, 4:7].reshape(d, d, d, 3).copy(),
    )


def serialize_tsdf_block(block: TsdfBlock) -> bytes:
    d = block.sdf.shape[0]
    n = d**3
    body = np.empty((n, 6), dtype=np.uint8)
    body[:, 0:2] = (
        block.sdf.astype("<i2").ravel().view(np.uint8).reshape(n, 2)
    )
    body[:, 2] = block.weight.ravel()
    body[:, 3:6] = block.color.reshape(-1, 3)
    return _TSDF_HEADER.pack(*block.id) + body.tobytes()


def deserialize_tsdf_block(buf: bytes, block_dim: int, offset: int = 0) -> TsdfBlock:
    x, y, z = _TSDF_HEADER.unpack_from(buf, offset)
    d = block_dim
    n = d**3
    body = np.frombuffer(
        buf, dtype=np.uint8, count=n * 6, offset=offset + _TSDF_HEADER.size
    ).reshape(n, 6)
    sdf = body[:, 0:2].reshape(-1).view("<i2").astype(np.int16).reshape(d, d, d)
    return TsdfBlock(
        id=(x, y, z),
        sdf=sdf,
        weight=body[:, 2].reshape(d, d, d).copy(),
        color=body[:, 3:6].reshape(d, d, d, 3).copy(),
    )


def serialized_tsdf_block_size(block_dim: int) -> int:
    return _TSDF_HEADER.size + 6 * block_dim**3


def convert_blocks(
    store: BlockStore, ids: list[BlockId], revisions: dict[BlockId, int] | None = None
) -> list[McBlock]:
    """Convert TSDF blocks to MC blocks, reading the +1 neighbor shell.

    Cells touching any zero-weight corner are forced to NO_SURFACE so
    observation frontiers never emit geometry.  Edge offsets are stored
    for every observed sign change, shared by all cells using the edge.
    """
    if not ids:
        return []
    params = store.params
    d = params.block_dim
    sdf, wgt, col = store.padded(ids)
    inside = sdf < 0
    observed = wgt > 0

    idx = np.zeros((len(ids), d, d, d), dtype=np.uint8)
    obs_all = np.ones((len(ids), d, d, d), dtype=bool)
    for k in range(8):
        dx, dy, dz = CORNER_OFFSETS[k]
        corner_in = inside[:, dz : dz + d, dy : dy + d, dx : dx + d]
        idx |= corner_in.astype(np.uint8) << k
        obs_all &= observed[:, dz : dz + d, dy : dy + d, dx : dx + d]
    idx[~obs_all] = NO_SURFACE

    offsets = np.zeros((len(ids), d, d, d, 3), dtype=np.uint8)
    units = ((1, 0, 0), (0, 1, 0), (0, 0, 1))
    sa = sdf[:, :d, :d, :d]
    in_a = inside[:, :d, :d, :d]
    ob_a = observed[:, :d, :d, :d]
    for axis, (ux, uy, uz) in enumerate(units):
        sb = sdf[:, uz : uz + d, uy : uy + d, ux : ux + d]
        in_b = inside[:, uz : uz + d, uy : uy + d, ux : ux + d]
        ob_b = observed[:, uz : uz + d, uy : uy + d, ux : ux + d]
        crossed = (in_a != in_b) & ob_a & ob_b
        denom = sa - sb
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(crossed, sa / denom, 0.0)
        t = np.clip(t, 0.0, 1.0)
        q = np.floor(t * 255.0 + 0.5).astype(np.uint8)
        offsets[..., axis] = np.where(crossed, q, 0)

    out = []
    for i, bid in enumerate(ids):
        rev = revisions[bid] if revisions is not None else 1
        out.append(
            McBlock(
                id=bid,
                revision=rev,
                mc=idx[i],
                offsets=offsets[i],
                color=col[i, :d, :d, :d],
            )
        )
    return out


class McStore:
    """Stacked storage of MC blocks keyed by block id.

    Mirrors :class:`BlockStore` so meshing can stitch padded
    neighborhoods for thousands of blocks without per-block overhead.
    """

    def __init__(self, params: VolumeParams, capacity: int = 1024):
        self.params = params
        d = params.block_dim
        self._slot: dict[BlockId, int] = {}
        self._ids: list[BlockId] = []
        self.revision: dict[BlockId, int] = {}
        self.mc = np.zeros((capacity, d, d, d), dtype=np.uint8)
        self.offsets = np.zeros((capacity, d, d, d, 3), dtype=np.uint8)
        self.color = np.zeros((capacity, d, d, d, 3), dtype=np.uint8)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, block_id: BlockId) -> bool:
        return block_id in self._slot

    def ids(self) -> list[BlockId]:
        return list(self._ids)

    def _grow(self, need: int):
        cap = self.mc.shape[0]
        if need <= cap:
            return
        new_cap = cap
        while new_cap < need:
            new_cap *= 2
        for name in ("mc", "offsets", "color"):
            old = getattr(self, name)
            arr = np.zeros((new_cap,) + old.shape[1:], dtype=old.dtype)
            arr[:cap] = old
            setattr(self, name, arr)

    def slot(self, block_id: BlockId) -> int | None:
        return self._slot.get(block_id)

    def slots_for(self, ids) -> np.ndarray:
        get = self._slot.get
        return np.fromiter((get(i, -1) for i in ids), dtype=np.int64)

    def insert(self, block: McBlock) -> bool:
        """Upsert with latest-wins revisions; returns False on stale data."""
        old = self.revision.get(block.id)
        if old is not None and block.revision < old:
            return False
        slot = self._slot.get(block.id)
        if slot is None:
            slot = len(self._ids)
            self._grow(slot + 1)
            self._slot[block.id] = slot
            self._ids.append(block.id)
        self.mc[slot] = block.mc
        self.offsets[slot] = block.offsets
        self.color[slot] = block.color
        self.revision[block.id] = block.revision
        return True

    def get(self, block_id: BlockId) -> McBlock | None:
        slot = self._slot.get(block_id)
        if slot is None:
            return None
        return McBlock(
            id=block_id,
            revision=self.revision[block_id],
            mc=self.mc[slot].copy(),
            offsets=self.offsets[slot].copy(),
            color=self.color[slot].copy(),
        )

    def remove(self, block_id: BlockId) -> bool:
        slot = self._slot.pop(block_id, None)
        if slot is None:
            return False
        self.revision.pop(block_id, None)
        last = len(self._ids) - 1
        if slot != last:
            moved = self._ids[last]
            self._ids[slot] = moved
            self._slot[moved] = slot
            self.mc[slot] = self.mc[last]
            self.offsets[slot] = self.offsets[last]
            self.color[slot] = self.color[last]
        self._ids.pop()
        self.mc[last] = 0
        self.offsets[last] = 0
        self.color[last] = 0
        return True

    def padded(self, ids: list[BlockId]):
        """(mc, offsets, color, present) padded to (d+1)^3 per block.

        present marks lattice points whose owning block exists; absent
        neighbors read as mc_index 0 / not present.
        """
        d = self.params.block_dim
        n = len(ids)
        mc = np.zeros((n, d + 1, d + 1, d + 1), dtype=np.uint8)
        off = np.zeros((n, d + 1, d + 1, d + 1, 3), dtype=np.uint8)
        col = np.zeros((n, d + 1, d + 1, d + 1, 3), dtype=np.uint8)
        present = np.zeros((n, d + 1, d + 1, d + 1), dtype=bool)

        own = self.slots_for(ids)
        if np.any(own < 0):
            raise KeyError("padded() requires all base blocks present")
        mc[:, :d, :d, :d] = self.mc[own]
        off[:, :d, :d, :d] = self.offsets[own]
        col[:, :d, :d, :d] = self.color[own]
        present[:, :d, :d, :d] = True

        from voxcast.tsdf import SHELL_OFFSETS

        id_arr = np.asarray(ids, dtype=np.int64).reshape(n, 3)
        for shell_off in SHELL_OFFSETS:
            nb_ids = id_arr + np.asarray(shell_off, dtype=np.int64)
            slots = self.slots_for(map(tuple, nb_ids.tolist()))
            mask = slots >= 0
            if not mask.any():
                continue
            src = slots[mask]
            dz = slice(0, d) if shell_off[2] == 0 else d
            dy = slice(0, d) if shell_off[1] == 0 else d
            dx = slice(0, d) if shell_off[0] == 0 else d
            sz = slice(0, d) if shell_off[2] == 0 else 0
            sy = slice(0, d) if shell_off[1] == 0 else 0
            sx = slice(0, d) if shell_off[0] == 0 else 0
            rows = np.nonzero(mask)[0]
            mc[rows, dz, dy, dx] = self.mc[src][:, sz, sy, sx]
            off[rows, dz, dy, dx] = self.offsets[src][:, sz, sy, sx]
            col[rows, dz, dy, dx] = self.color[src][:, sz, sy, sx]
            present[rows, dz, dy, dx] = True

        return mc, off, col, present

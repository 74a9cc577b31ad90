"""Sparse TSDF volume storage and the weighted-average fusion rule.

Blocks hold signed distances normalized to the truncation distance and
quantized to int16, an uint8 observation weight and an RGB color per
voxel.  Storage is one set of stacked numpy arrays for the whole volume
(slot-indexed, grown geometrically) so frame integration and meshing can
gather thousands of blocks without per-block Python overhead.

Array axis order is [z, y, x]; raveling therefore yields the x-fastest
linear voxel order used on the wire.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from voxcast.blocks import BlockId, VolumeParams

SDF_SCALE = 32767  # int16 quantization of sdf in [-1, 1]
WEIGHT_CAP = 255


class TsdfVoxel(NamedTuple):
    sdf: float
    weight: int
    color: tuple[int, int, int]

    @property
    def empty(self) -> bool:
        return self.weight == 0


def tsdf_update(old: TsdfVoxel, sample: TsdfVoxel) -> TsdfVoxel:
    """Running weighted average of signed distance and color.

    A zero-weight old voxel is overwritten by the sample; otherwise both
    distance and color average with the accumulated weight, which is
    capped at WEIGHT_CAP so old observations can still be displaced by
    bounded amounts of new evidence.
    """
    w_old, w_new = old.weight, sample.weight
    if w_new <= 0:
        raise ValueError("sample weight must be positive")
    if w_old == 0:
        return TsdfVoxel(sample.sdf, min(w_new, WEIGHT_CAP), sample.color)
    total = w_old + w_new
    sdf = (w_old * old.sdf + w_new * sample.sdf) / total
    color = tuple(
        (w_old * c_old + w_new * c_new) / total
        for c_old, c_new in zip(old.color, sample.color)
    )
    return TsdfVoxel(sdf, min(total, WEIGHT_CAP), color)


@dataclass
class TsdfBlock:
    """One block's voxel data, detached from the store (a snapshot)."""

    id: BlockId
    sdf: np.ndarray  # int16, (d, d, d), [z, y, x]
    weight: np.ndarray  # uint8, (d, d, d)
    color: np.ndarray  # uint8, (d, d, d, 3)

    def voxel(self, x: int, y: int, z: int) -> TsdfVoxel:
        return TsdfVoxel(
            float(self.sdf[z, y, x]) / SDF_SCALE,
            int(self.weight[z, y, x]),
            tuple(int(c) for c in self.color[z, y, x]),
        )

    def sdf_float(self) -> np.ndarray:
        return self.sdf.astype(np.float32) / SDF_SCALE


def empty_block(block_id: BlockId, dim: int) -> TsdfBlock:
    return TsdfBlock(
        id=block_id,
        sdf=np.zeros((dim, dim, dim), dtype=np.int16),
        weight=np.zeros((dim, dim, dim), dtype=np.uint8),
        color=np.zeros((dim, dim, dim, 3), dtype=np.uint8),
    )


def quantize_sdf(sdf: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(sdf) * SDF_SCALE), -SDF_SCALE, SDF_SCALE).astype(
        np.int16
    )


# Upper-shell neighbor offsets: the +1 layer a block borrows from when
# its cells read corner samples past the block edge.
SHELL_OFFSETS = (
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (1, 1, 0),
    (1, 0, 1),
    (0, 1, 1),
    (1, 1, 1),
)


class BlockStore:
    """Spatially-hashed sparse volume backed by stacked slot arrays."""

    def __init__(self, params: VolumeParams, capacity: int = 1024):
        self.params = params
        d = params.block_dim
        self._slot: dict[BlockId, int] = {}
        self._ids: list[BlockId] = []
        self.sdf = np.zeros((capacity, d, d, d), dtype=np.int16)
        self.weight = np.zeros((capacity, d, d, d), dtype=np.uint8)
        self.color = np.zeros((capacity, d, d, d, 3), dtype=np.uint8)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, block_id: BlockId) -> bool:
        return block_id in self._slot

    def ids(self) -> list[BlockId]:
        return list(self._ids)

    def id_array(self) -> np.ndarray:
        if not self._ids:
            return np.empty((0, 3), dtype=np.int64)
        return np.asarray(self._ids, dtype=np.int64)

    def _grow(self, need: int):
        cap = self.sdf.shape[0]
        if need <= cap:
            return
        new_cap = cap
        while new_cap < need:
            new_cap *= 2
        for name in ("sdf", "weight", "color"):
            old = getattr(self, name)
            arr = np.zeros((new_cap,) + old.shape[1:], dtype=old.dtype)
            arr[:cap] = old
            setattr(self, name, arr)

    def allocate(self, block_id: BlockId) -> int:
        slot = self._slot.get(block_id)
        if slot is not None:
            return slot
        slot = len(self._ids)
        self._grow(slot + 1)
        self._slot[block_id] = slot
        self._ids.append(block_id)
        return slot

    def allocate_many(self, ids: Iterable[BlockId]) -> np.ndarray:
        return np.fromiter((self.allocate(i) for i in ids), dtype=np.int64)

    def slot(self, block_id: BlockId) -> int | None:
        return self._slot.get(block_id)

    def slots_for(self, ids: Iterable[BlockId]) -> np.ndarray:
        """Slot per id, -1 where the block is absent."""
        get = self._slot.get
        return np.fromiter((get(i, -1) for i in ids), dtype=np.int64)

    def remove(self, block_id: BlockId) -> bool:
        """Drop a block.  Swaps the last slot into the hole (O(1))."""
        slot = self._slot.pop(block_id, None)
        if slot is None:
            return False
        last = len(self._ids) - 1
        if slot != last:
            moved = self._ids[last]
            self._ids[slot] = moved
            self._slot[moved] = slot
            self.sdf[slot] = self.sdf[last]
            self.weight[slot] = self.weight[last]
            self.color[slot] = self.color[last]
        self._ids.pop()
        self.weight[last] = 0
        self.sdf[last] = 0
        self.color[last] = 0
        return True

    def snapshot(self, block_id: BlockId) -> TsdfBlock:
        slot = self._slot[block_id]
        return TsdfBlock(
            id=block_id,
            sdf=self.sdf[slot].copy(),
            weight=self.weight[slot].copy(),
            color=self.color[slot].copy(),
        )

    def insert(self, block: TsdfBlock):
        slot = self.allocate(block.id)
        self.sdf[slot] = block.sdf
        self.weight[slot] = block.weight
        self.color[slot] = block.color

    def padded(self, ids: list[BlockId]):
        """(sdf f32, weight u8, color u8) padded to (d+1)^3 per block.

        The +1 layer comes from the seven upper-shell neighbors; absent
        neighbors read as weight 0.  Returned sdf is dequantized.
        """
        d = self.params.block_dim
        n = len(ids)
        sdf = np.full((n, d + 1, d + 1, d + 1), SDF_SCALE, dtype=np.int16)
        wgt = np.zeros((n, d + 1, d + 1, d + 1), dtype=np.uint8)
        col = np.zeros((n, d + 1, d + 1, d + 1, 3), dtype=np.uint8)

        own = self.slots_for(ids)
        if np.any(own < 0):
            raise KeyError("padded() requires all base blocks present")
        sdf[:, :d, :d, :d] = self.sdf[own]
        wgt[:, :d, :d, :d] = self.weight[own]
        col[:, :d, :d, :d] = self.color[own]

        id_arr = np.asarray(ids, dtype=np.int64).reshape(n, 3)
        for off in SHELL_OFFSETS:
            nb_ids = id_arr + np.asarray(off, dtype=np.int64)
            slots = self.slots_for(map(tuple, nb_ids.tolist()))
            mask = slots >= 0
            if not mask.any():
                continue
            src = slots[mask]
            # destination region: where off has 1 the padded index is d
            # and the source index is 0; where off has 0 both span [0, d).
            dz = slice(0, d) if off[2] == 0 else d
            dy = slice(0, d) if off[1] == 0 else d
            dx = slice(0, d) if off[0] == 0 else d
            sz = slice(0, d) if off[2] == 0 else 0
            sy = slice(0, d) if off[1] == 0 else 0
            sx = slice(0, d) if off[0] == 0 else 0
            idx = np.nonzero(mask)[0]
            sdf[idx, dz, dy, dx] = self.sdf[src][:, sz, sy, sx]
            wgt[idx, dz, dy, dx] = self.weight[src][:, sz, sy, sx]
            col[idx, dz, dy, dx] = self.color[src][:, sz, sy, sx]

        return sdf.astype(np.float32) / SDF_SCALE, wgt, col

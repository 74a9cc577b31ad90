"""Volume parameters and sparse voxel-block addressing.

The world is partitioned into cubic blocks of ``block_dim`` voxels per
edge.  Voxels are lattice samples: voxel ``(i, j, k)`` of block
``(bx, by, bz)`` sits at ``(b * block_dim + (i, j, k)) * voxel_size``.
Block ids are plain integer triples so they can be hashed, ordered and
shipped over the wire without ceremony.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BlockId = tuple[int, int, int]

# Coordinate-mixing primes; the de-facto standard choice for sparse
# voxel block hashing.
HASH_PRIMES = (73856093, 19349669, 83492791)

_U64 = 1 << 64
_I64_MIN = 1 << 63


@dataclass(frozen=True)
class VolumeParams:
    """Reconstruction volume configuration.

    voxel_size and trunc_dist are in meters.  trunc_dist must cover at
    least two voxels so a surface always produces a sign change between
    adjacent samples.  block_dim is fixed for the lifetime of a session;
    every component of the pipeline shares one instance.
    """

    voxel_size: float = 0.005
    trunc_dist: float = 0.06
    block_dim: int = 8

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise ValueError(f"voxel_size must be positive, got {self.voxel_size}")
        if self.trunc_dist < 2 * self.voxel_size:
            raise ValueError(
                f"trunc_dist {self.trunc_dist} must be >= 2 * voxel_size "
                f"({2 * self.voxel_size})"
            )
        if self.block_dim < 2:
            raise ValueError(f"block_dim must be >= 2, got {self.block_dim}")

    @property
    def block_extent(self) -> float:
        """Edge length of one block in meters."""
        return self.voxel_size * self.block_dim

    @property
    def voxels_per_block(self) -> int:
        return self.block_dim**3


# Quotients this close to an integer snap to it, so lattice points that
# land an ulp below a block boundary still address the block they open.
_BOUNDARY_SNAP = 1e-7


def _floor_snapped(q: np.ndarray) -> np.ndarray:
    r = np.rint(q)
    return np.where(np.abs(q - r) < _BOUNDARY_SNAP, r, np.floor(q)).astype(np.int64)


def block_id_from_world(point, params: VolumeParams) -> BlockId:
    """Block containing a world-space point (floor division by block extent)."""
    p = np.asarray(point, dtype=np.float64)
    ids = _floor_snapped(p / params.block_extent)
    return (int(ids[0]), int(ids[1]), int(ids[2]))


def block_ids_from_world(points: np.ndarray, params: VolumeParams) -> np.ndarray:
    """Vectorized :func:`block_id_from_world` for an (N, 3) array."""
    return _floor_snapped(np.asarray(points, dtype=np.float64) / params.block_extent)


def block_origin(block_id, params: VolumeParams) -> np.ndarray:
    """World position of the block's (0, 0, 0) voxel sample."""
    return np.asarray(block_id, dtype=np.float64) * params.block_extent


def block_center(block_id, params: VolumeParams) -> np.ndarray:
    return (np.asarray(block_id, dtype=np.float64) + 0.5) * params.block_extent


def voxel_world_position(block_id, voxel, params: VolumeParams) -> np.ndarray:
    """World position of voxel (i, j, k) inside a block."""
    b = np.asarray(block_id, dtype=np.float64)
    v = np.asarray(voxel, dtype=np.float64)
    return (b * params.block_dim + v) * params.voxel_size


def _wrap_i64(v: int) -> int:
    """Two's-complement 64-bit wrap of a Python int."""
    return ((v + _I64_MIN) % _U64) - _I64_MIN


def spatial_hash(block_id, table_size: int) -> int:
    """Bucket index for a block id.

    XOR of the prime-multiplied coordinates over two's-complement 64-bit
    integers, reduced modulo the table size.  Deterministic; equal ids
    always collide.
    """
    if table_size <= 0:
        raise ValueError(f"table_size must be positive, got {table_size}")
    x, y, z = block_id
    h = _wrap_i64(x * HASH_PRIMES[0]) ^ _wrap_i64(y * HASH_PRIMES[1]) ^ _wrap_i64(
        z * HASH_PRIMES[2]
    )
    return h % table_size


def spatial_hash_array(ids: np.ndarray, table_size: int) -> np.ndarray:
    """Vectorized :func:`spatial_hash` over an (N, 3) int array."""
    if table_size <= 0:
        raise ValueError(f"table_size must be positive, got {table_size}")
    ids = np.asarray(ids, dtype=np.int64)
    with np.errstate(over="ignore"):
        h = (
            (ids[:, 0] * HASH_PRIMES[0])
            ^ (ids[:, 1] * HASH_PRIMES[1])
            ^ (ids[:, 2] * HASH_PRIMES[2])
        )
    return np.mod(h, table_size)


def pack_block_ids(ids: np.ndarray, bits: int = 21) -> np.ndarray:
    """Pack (N, 3) signed block coordinates into one int64 per id.

    Used to deduplicate large id sets with np.unique.  Coordinates must
    fit in ``bits`` bits signed; at 21 bits and 4 cm blocks that is a
    +-40 km world, far beyond desk scale.
    """
    ids = np.asarray(ids, dtype=np.int64)
    half = 1 << (bits - 1)
    if np.any(np.abs(ids) >= half):
        raise ValueError("block coordinates out of packable range")
    off = ids + half
    return (off[:, 0] << (2 * bits)) | (off[:, 1] << bits) | off[:, 2]


def unpack_block_ids(packed: np.ndarray, bits: int = 21) -> np.ndarray:
    packed = np.asarray(packed, dtype=np.int64)
    half = 1 << (bits - 1)
    mask = (1 << bits) - 1
    out = np.empty((len(packed), 3), dtype=np.int64)
    out[:, 0] = ((packed >> (2 * bits)) & mask) - half
    out[:, 1] = ((packed >> bits) & mask) - half
    out[:, 2] = (packed & mask) - half
    return out

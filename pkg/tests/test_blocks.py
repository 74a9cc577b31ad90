import numpy as np
import pytest
from hypothesis import given, strategies as st

from voxcast.blocks import (
    VolumeParams,
    block_id_from_world,
    block_ids_from_world,
    pack_block_ids,
    spatial_hash,
    spatial_hash_array,
    unpack_block_ids,
    voxel_world_position,
)


def test_params_defaults():
    p = VolumeParams()
    assert p.voxel_size == 0.005
    assert p.trunc_dist == 0.06
    assert p.block_dim == 8
    assert p.block_extent == pytest.approx(0.04)
    assert p.voxels_per_block == 512


@pytest.mark.parametrize(
    "kwargs",
    [
        {"voxel_size": 0.0},
        {"voxel_size": -0.01},
        {"trunc_dist": 0.009, "voxel_size": 0.005},
        {"block_dim": 1},
    ],
)
def test_params_invariants(kwargs):
    with pytest.raises(ValueError):
        VolumeParams(**kwargs)


def test_block_id_origin():
    assert block_id_from_world((0, 0, 0), VolumeParams()) == (0, 0, 0)


def test_block_id_hand_checked():
    # block extent 0.04 m: floor(0.041 / 0.04) = 1, floor(-0.003 / 0.04) = -1,
    # floor(0.12 / 0.04) = 3
    assert block_id_from_world((0.041, -0.003, 0.12), VolumeParams()) == (1, -1, 3)


def test_block_id_negative_boundary():
    # a point exactly on a negative block boundary belongs to that block
    assert block_id_from_world((-0.04, 0, 0), VolumeParams()) == (-1, 0, 0)


@given(
    st.tuples(
        st.integers(-1000, 1000), st.integers(-1000, 1000), st.integers(-1000, 1000)
    ),
    st.tuples(st.integers(0, 7), st.integers(0, 7), st.integers(0, 7)),
)
def test_addressing_round_trip(block, voxel):
    params = VolumeParams()
    p = voxel_world_position(block, voxel, params)
    assert block_id_from_world(p, params) == block


def test_vectorized_matches_scalar():
    params = VolumeParams()
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, size=(500, 3))
    ids = block_ids_from_world(pts, params)
    for p, i in zip(pts, ids):
        assert block_id_from_world(p, params) == tuple(i)


def test_hash_zero():
    assert spatial_hash((0, 0, 0), 4096) == 0
    assert spatial_hash((0, 0, 0), 17) == 0


def test_hash_deterministic():
    a = spatial_hash((1, 2, 3), 4096)
    b = spatial_hash((1, 2, 3), 4096)
    assert a == b
    assert 0 <= a < 4096


def test_hash_range_and_negative_ids():
    for bid in [(-5, 3, 9), (1000000, -1000000, 7), (-1, -1, -1)]:
        h = spatial_hash(bid, 1 << 16)
        assert 0 <= h < (1 << 16)


def test_hash_distribution():
    # brute-force load histogram: no bucket should exceed 10x the mean
    rng = np.random.default_rng(42)
    ids = rng.integers(-(1 << 20), 1 << 20, size=(100_000, 3))
    table = 1 << 16
    buckets = spatial_hash_array(ids, table)
    loads = np.bincount(buckets, minlength=table)
    mean = len(ids) / table
    assert loads.max() <= 10 * mean


def test_hash_array_matches_scalar():
    rng = np.random.default_rng(3)
    ids = rng.integers(-(1 << 30), 1 << 30, size=(200, 3))
    arr = spatial_hash_array(ids, 12289)
    for row, h in zip(ids, arr):
        assert spatial_hash(tuple(int(v) for v in row), 12289) == h


@given(
    st.lists(
        st.tuples(
            st.integers(-(1 << 20) + 1, (1 << 20) - 1),
            st.integers(-(1 << 20) + 1, (1 << 20) - 1),
            st.integers(-(1 << 20) + 1, (1 << 20) - 1),
        ),
        min_size=1,
        max_size=50,
    )
)
def test_pack_round_trip(ids):
    arr = np.asarray(ids, dtype=np.int64)
    assert np.array_equal(unpack_block_ids(pack_block_ids(arr)), arr)

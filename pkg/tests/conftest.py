import numpy as np
import pytest

from voxcast.blocks import VolumeParams
from voxcast.mc_codec import McStore, convert_blocks
from voxcast.tsdf import BlockStore, quantize_sdf


@pytest.fixture
def params():
    return VolumeParams()


def fill_analytic(store: BlockStore, ids, sdf_fn, color_fn=None, weight=10):
    """Fill blocks with a metric signed-distance function of world position."""
    params = store.params
    d = params.block_dim
    zz, yy, xx = np.meshgrid(np.arange(d), np.arange(d), np.arange(d), indexing="ij")
    for bid in ids:
        slot = store.allocate(bid)
        base = np.asarray(bid, dtype=np.float64) * params.block_extent
        wx = base[0] + xx * params.voxel_size
        wy = base[1] + yy * params.voxel_size
        wz = base[2] + zz * params.voxel_size
        pts = np.stack([wx, wy, wz], axis=-1)
        dist = sdf_fn(pts)
        store.sdf[slot] = quantize_sdf(np.clip(dist / params.trunc_dist, -1.0, 1.0))
        store.weight[slot] = weight
        if color_fn is not None:
            store.color[slot] = color_fn(pts)
        else:
            store.color[slot] = 150
    return store


def sphere_sdf(center, radius):
    c = np.asarray(center, dtype=np.float64)

    def fn(pts):
        return np.linalg.norm(pts - c, axis=-1) - radius

    return fn


def plane_sdf(z0):
    def fn(pts):
        return pts[..., 2] - z0

    return fn


def sphere_store(params, radius=0.1, span=4, weight=10):
    store = BlockStore(params)
    ids = [
        (x, y, z)
        for x in range(-span, span)
        for y in range(-span, span)
        for z in range(-span, span)
    ]
    fill_analytic(store, ids, sphere_sdf((0, 0, 0), radius), weight=weight)
    return store, ids


def to_mc_store(store: BlockStore, ids) -> McStore:
    ms = McStore(store.params)
    for block in convert_blocks(store, ids):
        ms.insert(block)
    return ms

import numpy as np
import pytest

from voxcast.blocks import VolumeParams, block_id_from_world
from voxcast.mc_codec import McStore, convert_blocks
from voxcast.meshing import (
    empty_mesh,
    extract_block_meshes,
    generate_lods,
    load_ply,
    merge_meshes,
    reference_mesh_from_tsdf,
    save_ply,
)
from voxcast.tsdf import BlockStore, quantize_sdf

from conftest import fill_analytic, plane_sdf, sphere_sdf, sphere_store, to_mc_store


def _mesh_all(store, ids, params, lods=(0,)):
    ms = to_mc_store(store, ids)
    return extract_block_meshes(ms, ids, params, lods=lods)


def test_empty_store_empty_mesh(params):
    store = BlockStore(params)
    store.allocate((0, 0, 0))
    meshes = _mesh_all(store, [(0, 0, 0)], params)
    assert meshes[((0, 0, 0), 0)].empty


def test_sphere_rms_error(params):
    store, ids = sphere_store(params, radius=0.1)
    meshes = _mesh_all(store, ids, params)
    merged = merge_meshes(meshes.values())
    merged.validate()
    assert len(merged.triangles) > 1000
    err = np.linalg.norm(merged.vertices, axis=1) - 0.1
    assert np.abs(err).max() <= 0.005  # within one voxel
    assert np.sqrt((err**2).mean()) <= 0.0025


def test_sphere_lod1_rms(params):
    store, ids = sphere_store(params, radius=0.1)
    ms = to_mc_store(store, ids)
    meshes = generate_lods(ms, ids, params)
    merged = merge_meshes(m for (bid, lod), m in meshes.items() if lod == 1)
    err = np.linalg.norm(merged.vertices, axis=1) - 0.1
    assert np.sqrt((err**2).mean()) <= 2 * params.voxel_size


def test_lod_triangle_count_monotone(params):
    store, ids = sphere_store(params, radius=0.1)
    ms = to_mc_store(store, ids)
    meshes = extract_block_meshes(ms, ids, params, lods=(0, 1, 2, 3))
    counts = []
    for lod in (0, 1, 2, 3):
        counts.append(sum(len(meshes[(b, lod)].triangles) for b in ids))
    assert counts[0] > 0
    for a, b in zip(counts, counts[1:]):
        assert b <= a


def test_lod_plane_monotone(params):
    store = BlockStore(params)
    ids = [(x, y, 0) for x in range(-2, 2) for y in range(-2, 2)]
    fill_analytic(store, ids, plane_sdf(0.017))
    ms = to_mc_store(store, ids)
    meshes = extract_block_meshes(ms, ids, params, lods=(0, 1, 2, 3))
    counts = [
        sum(len(meshes[(b, lod)].triangles) for b in ids) for lod in (0, 1, 2, 3)
    ]
    assert counts[0] > 0
    for a, b in zip(counts, counts[1:]):
        assert b <= a


def test_empty_input_empty_at_all_levels(params):
    store = BlockStore(params)
    store.allocate((2, 2, 2))
    ms = to_mc_store(store, [(2, 2, 2)])
    meshes = extract_block_meshes(ms, [(2, 2, 2)], params, lods=(0, 1, 2, 3))
    assert all(m.empty for m in meshes.values())


def test_codec_equivalence_analytic(params):
    store, ids = sphere_store(params, radius=0.1)
    meshes = _mesh_all(store, ids, params)
    bound = params.voxel_size / 255 + 1e-6
    total = 0
    for bid in ids:
        ref = reference_mesh_from_tsdf(store, bid, params)
        fast = meshes[(bid, 0)]
        assert len(ref.triangles) == len(fast.triangles)
        if ref.empty:
            continue
        a = ref.vertices[ref.triangles.ravel()]
        b = fast.vertices[fast.triangles.ravel()]
        assert np.abs(a - b).max() <= bound
        total += len(ref.triangles)
    assert total > 1000


def test_codec_equivalence_random_fields(params):
    """Random TSDF neighborhoods agree between the two meshing paths."""
    rng = np.random.default_rng(11)
    d = params.block_dim
    bound = params.voxel_size / 255 + 1e-6
    ids = [
        (x, y, z) for x in range(2) for y in range(2) for z in range(2)
    ]
    for trial in range(25):
        store = BlockStore(params)
        for bid in ids:
            slot = store.allocate(bid)
            store.sdf[slot] = quantize_sdf(rng.uniform(-1, 1, (d, d, d)))
            store.weight[slot] = (rng.uniform(0, 1, (d, d, d)) > 0.2).astype(np.uint8)
            store.color[slot] = rng.integers(0, 256, (d, d, d, 3))
        meshes = _mesh_all(store, ids, params)
        for bid in ids:
            ref = reference_mesh_from_tsdf(store, bid, params)
            fast = meshes[(bid, 0)]
            assert len(ref.triangles) == len(fast.triangles), (trial, bid)
            if ref.empty:
                continue
            a = ref.vertices[ref.triangles.ravel()]
            b = fast.vertices[fast.triangles.ravel()]
            assert np.abs(a - b).max() <= bound


def test_watertight_across_block_boundary(params):
    """Both blocks sharing a face produce identical vertices on it."""
    store = BlockStore(params)
    ids = [(0, 0, 0), (1, 0, 0)]
    # oblique plane crossing both blocks
    def oblique(pts):
        n = np.array([0.3, 0.2, 0.93])
        n = n / np.linalg.norm(n)
        return pts @ n - 0.022

    fill_analytic(store, ids, oblique)
    meshes = _mesh_all(store, ids, params)
    boundary_x = params.block_extent
    eps = 1e-9

    def boundary_verts(mesh):
        used = np.unique(mesh.triangles.ravel())
        pts = mesh.vertices[used]
        return {tuple(np.round(p, 12)) for p in pts if abs(p[0] - boundary_x) < eps}

    va = boundary_verts(meshes[((0, 0, 0), 0)])
    vb = boundary_verts(meshes[((1, 0, 0), 0)])
    assert va and va == vb


def test_mesh_has_no_nan_and_valid_indices(params):
    store, ids = sphere_store(params, radius=0.08, span=3)
    meshes = _mesh_all(store, ids, params)
    for mesh in meshes.values():
        mesh.validate()


def test_vertex_colors_come_from_nearest_voxel(params):
    store = BlockStore(params)

    def colors(pts):
        out = np.zeros(pts.shape[:-1] + (3,), dtype=np.uint8)
        out[..., 0] = np.where(pts[..., 2] < 0.0195, 255, 0)
        out[..., 1] = np.where(pts[..., 2] >= 0.0195, 255, 0)
        return out

    fill_analytic(store, [(0, 0, 0)], plane_sdf(0.0195), color_fn=colors)
    meshes = _mesh_all(store, [(0, 0, 0)], params)
    mesh = meshes[((0, 0, 0), 0)]
    assert not mesh.empty
    # plane sits closer to sample 4 (0.020) than sample 3 (0.015):
    # t = 0.9 -> nearest voxel is above the plane -> green
    assert (mesh.colors[:, 1] == 255).all()


def test_ply_round_trip(tmp_path, params):
    store, ids = sphere_store(params, radius=0.06, span=2)
    merged = merge_meshes(_mesh_all(store, ids, params).values())
    path = tmp_path / "mesh.ply"
    save_ply(merged, path)
    loaded = load_ply(path)
    assert len(loaded.vertices) == len(merged.vertices)
    assert len(loaded.triangles) == len(merged.triangles)
    assert np.allclose(loaded.vertices, merged.vertices, atol=1e-5)
    assert np.array_equal(loaded.colors, merged.colors)
    assert np.array_equal(loaded.triangles, merged.triangles)


def test_merge_empty():
    assert merge_meshes([]).empty
    assert merge_meshes([empty_mesh(), empty_mesh()]).empty

import math

import numpy as np
import pytest

from voxcast.blocks import VolumeParams
from voxcast.explore import (
    BenchmarkStats,
    ExplorationCore,
    PoseFilter,
    lod_for_distance,
)
from voxcast.mc_codec import convert_blocks
from voxcast.meshing import LOD_LEVELS
from voxcast.protocol import Annotation, Label
from voxcast.tsdf import BlockStore

from conftest import fill_analytic, plane_sdf, sphere_sdf


def mc_blocks_for(params, ids, sdf_fn=None, revision=1):
    store = BlockStore(params)
    fill_analytic(store, ids, sdf_fn or plane_sdf(0.018))
    blocks = convert_blocks(store, ids, {bid: revision for bid in ids})
    return blocks


# --- package application ------------------------------------------------------


def test_empty_package_no_change(params):
    core = ExplorationCore(params)
    assert core.apply_package([]) == set()
    assert not core.meshes


def test_one_block_creates_four_lods(params):
    core = ExplorationCore(params)
    (block,) = mc_blocks_for(params, [(0, 0, 0)])
    core.apply_package([block])
    for lod in LOD_LEVELS:
        assert ((0, 0, 0), lod) in core.meshes
    assert not core.meshes[((0, 0, 0), 0)].empty


def test_revision_upsert_and_stale_ignore(params):
    core = ExplorationCore(params)
    (r1,) = mc_blocks_for(params, [(0, 0, 0)], revision=1)
    (r2,) = mc_blocks_for(params, [(0, 0, 0)], plane_sdf(0.022), revision=2)
    core.apply_package([r2])
    mesh_r2 = core.meshes[((0, 0, 0), 0)]
    assert core.apply_package([r1]) == set()  # stale revision ignored
    assert core.store.revision[(0, 0, 0)] == 2
    assert core.meshes[((0, 0, 0), 0)] is mesh_r2
    assert core.mesh_revision[(0, 0, 0)] == 2


def test_neighbor_blocks_remeshed(params):
    core = ExplorationCore(params)
    ids = [(0, 0, 0), (1, 0, 0)]
    a, b = mc_blocks_for(params, ids)
    core.apply_package([a])
    first = core.meshes[((0, 0, 0), 0)]
    stale = core.apply_package([b])
    # the lower neighbor is re-extracted once its +x shell exists
    assert (0, 0, 0) in stale and (1, 0, 0) in stale
    assert core.meshes[((0, 0, 0), 0)] is not first


def test_mesh_freshness_invariant(params):
    core = ExplorationCore(params)
    ids = [(0, 0, 0), (0, 1, 0), (2, 2, 2)]
    core.apply_package(mc_blocks_for(params, ids))
    for bid in ids:
        assert core.mesh_revision[bid] == core.store.revision[bid]


def test_benchmark_mode_discards(params):
    core = ExplorationCore(params, benchmark=True, request_rate=100.0)
    blocks = mc_blocks_for(params, [(0, 0, 0)])
    assert core.apply_package(blocks, wire_bytes=3610, tick=0) == set()
    assert len(core.store) == 0
    assert not core.meshes
    assert core.stats.blocks_received == 1
    assert core.stats.bytes_received == 3610


def test_removal_unknown_id_ignored(params):
    core = ExplorationCore(params)
    assert core.handle_removal([(9, 9, 9)]) == 0


def test_removal_drops_meshes(params):
    core = ExplorationCore(params)
    core.apply_package(mc_blocks_for(params, [(0, 0, 0)]))
    assert core.handle_removal([(0, 0, 0)]) == 1
    assert not any(bid == (0, 0, 0) for (bid, _lod) in core.meshes)
    assert len(core.store) == 0


# --- pose filter -----------------------------------------------------------------


def test_filter_alpha_one_is_identity():
    f = PoseFilter(alpha=1.0)
    for raw in [(0.5, -1.0, 0.3), (2.0, 3.0, -2.0)]:
        assert f.update(raw) == raw


def test_filter_geometric_decay():
    f = PoseFilter(alpha=0.2)
    f.update((0.0, 0.0, 0.0))
    target = (1.0, 0.0, 0.0)
    err = 1.0
    for _ in range(20):
        x, _, _ = f.update(target)
        new_err = 1.0 - x
        assert new_err == pytest.approx(err * 0.8, rel=1e-9)
        err = new_err


def test_filter_step_response_closed_form():
    alpha = 0.2
    f = PoseFilter(alpha=alpha)
    f.update((0.0, 0.0, 0.0))
    for n in range(1, 101):
        x, _, _ = f.update((1.0, 0.0, 0.0))
        assert abs(x - (1.0 - (1.0 - alpha) ** n)) < 1e-9


def test_filter_yaw_shortest_arc():
    f = PoseFilter(alpha=0.5)
    f.update((0.0, 0.0, math.pi - 0.1))
    _, _, yaw = f.update((0.0, 0.0, -math.pi + 0.1))
    # filtering must cross the pi seam, not swing through zero
    assert abs(yaw) > math.pi - 0.11


def test_filter_output_bounded_between_inputs():
    f = PoseFilter(alpha=0.3)
    f.update((0.0, 0.0, 0.0))
    lo, hi = 0.0, 1.0
    for _ in range(50):
        x, _, _ = f.update((1.0, 0.0, 0.0))
        assert lo <= x <= hi


def test_filter_alpha_validation():
    with pytest.raises(ValueError):
        PoseFilter(alpha=0.0)
    with pytest.raises(ValueError):
        PoseFilter(alpha=1.5)


# --- measurement ------------------------------------------------------------------


def _fused_wall_core(params):
    core = ExplorationCore(params)
    ids = [(x, y, z) for x in range(-1, 2) for y in range(-1, 2) for z in range(-1, 2)]
    core.apply_package(mc_blocks_for(params, ids, plane_sdf(0.0)))
    return core


def test_measure_same_point_zero(params):
    core = _fused_wall_core(params)
    ray = ((0.02, 0.02, 0.5), (0.0, 0.0, -1.0))
    result = core.measure_distance(ray, ray)
    assert result is not None
    dist, a, b = result
    assert dist == pytest.approx(0.0, abs=1e-12)
    assert a.point[2] == pytest.approx(0.0, abs=1e-4)


def test_measure_known_span(params):
    core = _fused_wall_core(params)
    ray_a = ((-0.03, 0.0, 0.5), (0.0, 0.0, -1.0))
    ray_b = ((0.03, 0.0, 0.5), (0.0, 0.0, -1.0))
    dist, _, _ = core.measure_distance(ray_a, ray_b)
    assert dist == pytest.approx(0.06, abs=1e-3)


def test_measure_miss_returns_none(params):
    core = _fused_wall_core(params)
    hit_ray = ((0.0, 0.0, 0.5), (0.0, 0.0, -1.0))
    miss_ray = ((0.0, 0.0, 0.5), (0.0, 0.0, 1.0))
    assert core.measure_distance(hit_ray, miss_ray) is None
    assert core.measure_distance(miss_ray, hit_ray) is None


# --- annotations ------------------------------------------------------------------


def test_annotation_roundtrip_local(params):
    core = ExplorationCore(params)
    ann = core.make_annotation((0, 0, 0), (1, 1, 1), Label.SUSPICIOUS)
    assert list(core.annotations.values()) == [ann]
    core.handle_annotation(ann)  # echo from the server must not duplicate
    assert len(core.annotations) == 1


def test_invalid_label_rejected(params):
    core = ExplorationCore(params)
    with pytest.raises(ValueError):
        core.make_annotation((0, 0, 0), (1, 1, 1), 9)


# --- benchmark stats ---------------------------------------------------------------


def test_benchmark_zero_report():
    stats = BenchmarkStats(rate_hz=100.0)
    rep = stats.report()
    assert rep["mean_mbit_s"] == 0.0
    assert rep["peak_mbit_s"] == 0.0
    assert rep["blocks_received"] == 0


def test_benchmark_peak_at_least_mean():
    stats = BenchmarkStats(rate_hz=100.0)
    rng = np.random.default_rng(0)
    for tick in range(1000):
        stats.note_package(tick, int(rng.integers(500, 50_000)), 16)
    rep = stats.report()
    assert rep["peak_mbit_s"] >= rep["mean_mbit_s"] > 0
    assert rep["duration_s"] == pytest.approx(10.0)
    assert rep["blocks_received"] == 16_000


def test_lod_distance_thresholds():
    assert lod_for_distance(0.5) == 0
    assert lod_for_distance(3.0) == 1
    assert lod_for_distance(7.0) == 2
    assert lod_for_distance(25.0) == 3

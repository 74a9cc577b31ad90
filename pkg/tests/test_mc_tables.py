"""Table integrity, checked against independent sources.

Triangle counts per configuration are compared with scikit-image's
classic marching cubes on single-cell volumes; the edge table is
re-derived from corner sign patterns, which must reproduce the vendored
data exactly.
"""

import numpy as np
import pytest
from skimage import measure

from voxcast.mc_codec import mc_index
from voxcast.mc_tables import (
    CORNER_OFFSETS,
    EDGE_CORNERS,
    EDGE_OWNER_AXIS,
    EDGE_OWNER_OFFSET,
    EDGE_TABLE,
    TRI_COUNT,
    TRI_TABLE,
)


def test_shapes():
    assert EDGE_TABLE.shape == (256,)
    assert TRI_TABLE.shape == (256, 16)
    assert TRI_COUNT.shape == (256,)
    assert TRI_COUNT.max() == 5
    assert TRI_COUNT[0] == 0 and TRI_COUNT[255] == 0


def test_edge_table_derivable_from_signs():
    # bit e of EDGE_TABLE[case] must equal "the corners of edge e have
    # different signs in this case"
    for case in range(256):
        expect = 0
        for e, (a, b) in enumerate(EDGE_CORNERS):
            if ((case >> a) & 1) != ((case >> b) & 1):
                expect |= 1 << e
        assert expect == int(EDGE_TABLE[case]), case


def test_tri_table_edges_are_crossed_edges():
    for case in range(256):
        used = {int(e) for e in TRI_TABLE[case] if e >= 0}
        allowed = {e for e in range(12) if (int(EDGE_TABLE[case]) >> e) & 1}
        assert used <= allowed, case


def test_rows_padded_with_minus_one():
    for case in range(256):
        row = TRI_TABLE[case]
        n = int(TRI_COUNT[case]) * 3
        assert (row[:n] >= 0).all()
        assert (row[n:] == -1).all()


def test_edge_table_complement_symmetric():
    # crossed edges depend only on sign differences, so flipping all
    # corner signs leaves the edge table unchanged
    for case in range(256):
        assert EDGE_TABLE[case] == EDGE_TABLE[255 - case]


def test_vendored_data_matches_second_source():
    """Digest of a byte-identical copy retrieved from an unrelated project."""
    import hashlib

    h = hashlib.sha256()
    h.update(np.ascontiguousarray(EDGE_TABLE, dtype="<i4").tobytes())
    h.update(np.ascontiguousarray(TRI_TABLE, dtype="<i1").tobytes())
    assert (
        h.hexdigest()
        == "d2427ddca979a114f400e1687d87cbcc5233e158f971aeb13694f3b2fad0e24d"
    )


def test_triangle_counts_match_skimage_lorensen():
    """Independent reference implementation: classic MC from scikit-image.

    skimage's classic mesher treats the opposite sign as interior, which
    flips the resolution of the 88 face-ambiguous configurations, so its
    count for a case must equal the vendored count of the complement
    case; for the 168 unambiguous cases the two sides coincide.
    """
    for case in range(256):
        vol = np.empty((2, 2, 2), dtype=np.float64)
        for k in range(8):
            dx, dy, dz = CORNER_OFFSETS[k]
            inside = (case >> k) & 1
            vol[dx, dy, dz] = -1.0 if inside else 1.0
        if case in (0, 255):
            # skimage raises on a level outside the data range
            assert TRI_COUNT[case] == 0
            continue
        _, faces, _, _ = measure.marching_cubes(vol, level=0.0, method="lorensen")
        assert len(faces) == int(TRI_COUNT[255 - case]), case
        if TRI_COUNT[case] == TRI_COUNT[255 - case]:
            assert len(faces) == int(TRI_COUNT[case])


def test_owner_mapping_consistent_with_edge_corners():
    for e in range(12):
        a, b = EDGE_CORNERS[e]
        ca, cb = CORNER_OFFSETS[a], CORNER_OFFSETS[b]
        lo = np.minimum(ca, cb)
        assert np.array_equal(EDGE_OWNER_OFFSET[e], lo)
        diff = np.abs(ca - cb)
        assert diff.sum() == 1
        assert diff[EDGE_OWNER_AXIS[e]] == 1


def test_mc_index_sign_correctness_all_cases():
    # brute force: bit k of the index equals (corner k inside)
    for case in range(256):
        sdf = [(-0.5 if (case >> k) & 1 else 0.5) for k in range(8)]
        assert mc_index(sdf) == case


def test_mc_index_uniform_signs():
    assert mc_index([0.5] * 8) == 0
    assert mc_index([-0.5] * 8) == 255


def test_mc_index_single_corner():
    sdf = [0.1] * 8
    sdf[0] = -0.1
    idx = mc_index(sdf)
    assert idx == 1
    assert TRI_COUNT[idx] == 1


def test_zero_sdf_is_outside():
    assert mc_index([0.0] * 8) == 0

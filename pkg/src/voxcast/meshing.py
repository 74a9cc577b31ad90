"""Triangle mesh extraction from MC voxel blocks.

Extraction walks the cells of one block (cells based at that block's
voxels) and reads corner data up to one lattice step into the +x/+y/+z
neighbor blocks, so adjacent block meshes share bit-identical vertices
and the combined surface is watertight wherever neighbors are loaded.

Levels of detail subsample the voxel lattice by 2^L before running the
same cell walk; coarse edge intersections are located by scanning the
fine sign sequence along the edge, so LOD vertices stay on the fine
surface.  Cells touching lattice points whose block is not loaded are
skipped; they are re-extracted when the neighbor arrives.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from voxcast.blocks import BlockId, VolumeParams
from voxcast.mc_codec import McStore, mc_index
from voxcast.mc_tables import (
    CORNER_OFFSETS,
    EDGE_OWNER_AXIS,
    EDGE_OWNER_OFFSET,
    TRI_COUNT,
    TRI_TABLE,
)
from voxcast.tsdf import BlockStore

LOD_LEVELS = (0, 1, 2, 3)


@dataclass
class Mesh:
    vertices: np.ndarray  # (n, 3) float64, meters
    colors: np.ndarray  # (n, 3) uint8
    triangles: np.ndarray  # (m, 3) int32
    lod_level: int = 0

    @property
    def empty(self) -> bool:
        return len(self.triangles) == 0

    def validate(self):
        if len(self.triangles) and self.triangles.max() >= len(self.vertices):
            raise ValueError("triangle index out of range")
        if len(self.vertices) and not np.isfinite(self.vertices).all():
            raise ValueError("non-finite vertex position")


def empty_mesh(lod: int = 0) -> Mesh:
    return Mesh(
        vertices=np.empty((0, 3), dtype=np.float64),
        colors=np.empty((0, 3), dtype=np.uint8),
        triangles=np.empty((0, 3), dtype=np.int32),
        lod_level=lod,
    )


def extract_block_meshes(
    store: McStore,
    ids: list[BlockId],
    params: VolumeParams,
    lods=(0,),
    chunk: int = 2048,
) -> dict[tuple[BlockId, int], Mesh]:
    """Meshes for the given blocks at the requested LOD levels."""
    out: dict[tuple[BlockId, int], Mesh] = {}
    ids = [i for i in ids if i in store]
    for lod in lods:
        stride = 1 << lod
        if params.block_dim % stride != 0:
            raise ValueError(f"block_dim {params.block_dim} not divisible by {stride}")
        for lo in range(0, len(ids), chunk):
            part = ids[lo : lo + chunk]
            out.update(_extract_chunk(store, part, params, lod))
    return out


def _extract_chunk(store, ids, params, lod):
    d = params.block_dim
    s = 1 << lod
    n = d // s
    nb = len(ids)
    if nb == 0:
        return {}
    mc_pad, off_pad, col_pad, present = store.padded(ids)

    # Cell configuration per coarse cell.  At LOD 0 the stored index is
    # authoritative (it encodes the conversion-time frontier forcing);
    # at coarser levels signs are recovered from bit 0 of each voxel's
    # own cell index.  Cells reading any unloaded lattice point are
    # dropped at every level.
    pres_all = np.ones((nb, n, n, n), dtype=bool)
    corner_slices = []
    for k in range(8):
        cx, cy, cz = CORNER_OFFSETS[k]
        sl = (
            slice(None),
            slice(cz * s, cz * s + (n - 1) * s + 1, s),
            slice(cy * s, cy * s + (n - 1) * s + 1, s),
            slice(cx * s, cx * s + (n - 1) * s + 1, s),
        )
        corner_slices.append(sl)
        pres_all &= present[sl]
    if lod == 0:
        cidx = mc_pad[:, :d, :d, :d].copy()
    else:
        sign = mc_pad & 1
        cidx = np.zeros((nb, n, n, n), dtype=np.uint8)
        for k, sl in enumerate(corner_slices):
            cidx |= sign[sl] << k
    cidx[~pres_all] = 0

    tri_per_cell = TRI_COUNT[cidx]
    bb, zz, yy, xx = np.nonzero(tri_per_cell)
    meshes = {}
    if len(bb) == 0:
        for bid in ids:
            meshes[(bid, lod)] = empty_mesh(lod)
        return meshes

    cell_cfg = cidx[bb, zz, yy, xx]
    counts = tri_per_cell[bb, zz, yy, xx].astype(np.int64)
    rows = TRI_TABLE[cell_cfg].astype(np.int64)  # (C, 16)
    valid = np.arange(16)[None, :] < (3 * counts)[:, None]
    edges = rows[valid]  # (K,) flattened per-cell prefixes, cell-major
    entry_cell = np.repeat(np.arange(len(bb)), 3 * counts)

    base = np.stack([xx, yy, zz], axis=1) * s  # (C, 3) fine lattice of cell base
    lat = base[entry_cell] + EDGE_OWNER_OFFSET[edges] * s  # (K, 3)
    ax = EDGE_OWNER_AXIS[edges]
    b_entry = bb[entry_cell]

    P = d + 1
    key = (((b_entry * P + lat[:, 2]) * P + lat[:, 1]) * P + lat[:, 0]) * 3 + ax
    uniq, inv = np.unique(key, return_inverse=True)

    ua = uniq % 3
    rest = uniq // 3
    ux = rest % P
    rest //= P
    uy = rest % P
    rest //= P
    uz = rest % P
    ub = rest // P

    unit = np.eye(3, dtype=np.int64)[ua]  # (U, 3)
    if s == 1:
        t = off_pad[ub, uz, uy, ux, ua].astype(np.float64) / 255.0
        nearest = np.rint(t).astype(np.int64)
    else:
        steps = np.arange(s + 1, dtype=np.int64)
        qx = ux[:, None] + unit[:, 0:1] * steps
        qy = uy[:, None] + unit[:, 1:2] * steps
        qz = uz[:, None] + unit[:, 2:3] * steps
        sgn = mc_pad[ub[:, None], qz, qy, qx] & 1
        flips = sgn[:, 1:] != sgn[:, :-1]
        has = flips.any(axis=1)
        first = np.argmax(flips, axis=1)
        fx = ux + unit[:, 0] * first
        fy = uy + unit[:, 1] * first
        fz = uz + unit[:, 2] * first
        fine_t = off_pad[ub, fz, fy, fx, ua].astype(np.float64) / 255.0
        t = np.where(has, (first + fine_t) / s, 0.5)
        nearest = np.clip(np.rint(t * s), 0, s).astype(np.int64)

    id_arr = np.asarray(ids, dtype=np.float64).reshape(nb, 3)
    origins = id_arr * params.block_extent
    lattice = np.stack([ux, uy, uz], axis=1).astype(np.float64)
    pos = (
        origins[ub]
        + lattice * params.voxel_size
        + t[:, None] * (s * params.voxel_size) * unit
    )
    ncx = ux + unit[:, 0] * nearest
    ncy = uy + unit[:, 1] * nearest
    ncz = uz + unit[:, 2] * nearest
    vcol = col_pad[ub, ncz, ncy, ncx]

    tris = inv.reshape(-1, 3)
    tri_block = b_entry[::3]

    block_of_vertex = uniq // (3 * P * P * P)
    v_start = np.searchsorted(block_of_vertex, np.arange(nb))
    v_end = np.searchsorted(block_of_vertex, np.arange(nb) + 1)
    t_start = np.searchsorted(tri_block, np.arange(nb))
    t_end = np.searchsorted(tri_block, np.arange(nb) + 1)

    for i, bid in enumerate(ids):
        vs, ve = v_start[i], v_end[i]
        ts, te = t_start[i], t_end[i]
        if ts == te:
            meshes[(bid, lod)] = empty_mesh(lod)
            continue
        meshes[(bid, lod)] = Mesh(
            vertices=pos[vs:ve],
            colors=vcol[vs:ve],
            triangles=(tris[ts:te] - vs).astype(np.int32),
            lod_level=lod,
        )
    return meshes


def generate_lods(
    store: McStore, ids: list[BlockId], params: VolumeParams
) -> dict[tuple[BlockId, int], Mesh]:
    """The three reduced-detail levels (1..3) for the given blocks."""
    return extract_block_meshes(store, ids, params, lods=(1, 2, 3))


def reference_mesh_from_tsdf(
    store: BlockStore, block_id: BlockId, params: VolumeParams
) -> Mesh:
    """Direct marching cubes on the TSDF, full float interpolation.

    Independent of the MC-block codec path: reads signed distances
    straight from the volume and interpolates without quantization.
    Used as the oracle for codec-equivalence testing and for
    fusion-side debugging.
    """
    d = params.block_dim
    sdf_pad, wgt_pad, col_pad = store.padded([block_id])
    sdf = sdf_pad[0].astype(np.float64)
    wgt = wgt_pad[0]
    col = col_pad[0]
    origin = np.asarray(block_id, dtype=np.float64) * params.block_extent

    verts: list[np.ndarray] = []
    colors: list[np.ndarray] = []
    tris: list[tuple[int, int, int]] = []
    vmap: dict[tuple[int, int, int, int], int] = {}
    units = ((1, 0, 0), (0, 1, 0), (0, 0, 1))

    for z in range(d):
        for y in range(d):
            for x in range(d):
                corner_sdf = []
                observed = True
                for cx, cy, cz in CORNER_OFFSETS:
                    if wgt[z + cz, y + cy, x + cx] == 0:
                        observed = False
                        break
                    corner_sdf.append(float(sdf[z + cz, y + cy, x + cx]))
                if not observed:
                    continue
                cfg = mc_index(corner_sdf)
                ntri = int(TRI_COUNT[cfg])
                if ntri == 0:
                    continue
                row = TRI_TABLE[cfg]
                for t0 in range(0, 3 * ntri, 3):
                    ids3 = []
                    for slot in range(t0, t0 + 3):
                        e = int(row[slot])
                        off = EDGE_OWNER_OFFSET[e]
                        axis = int(EDGE_OWNER_AXIS[e])
                        lx, ly, lz = x + int(off[0]), y + int(off[1]), z + int(off[2])
                        vkey = (lx, ly, lz, axis)
                        if vkey not in vmap:
                            u = units[axis]
                            sa = float(sdf[lz, ly, lx])
                            sb = float(sdf[lz + u[2], ly + u[1], lx + u[0]])
                            t = sa / (sa - sb)
                            t = min(max(t, 0.0), 1.0)
                            p = origin + (
                                np.array([lx, ly, lz], dtype=np.float64)
                                + t * np.asarray(u, dtype=np.float64)
                            ) * params.voxel_size
                            if t < 0.5:
                                c = col[lz, ly, lx]
                            else:
                                c = col[lz + u[2], ly + u[1], lx + u[0]]
                            vmap[vkey] = len(verts)
                            verts.append(p)
                            colors.append(c)
                        ids3.append(vmap[vkey])
                    tris.append(tuple(ids3))

    if not tris:
        return empty_mesh(0)
    return Mesh(
        vertices=np.asarray(verts, dtype=np.float64),
        colors=np.asarray(colors, dtype=np.uint8),
        triangles=np.asarray(tris, dtype=np.int32),
        lod_level=0,
    )


def merge_meshes(meshes) -> Mesh:
    """Concatenate meshes into one buffer (for export and picking)."""
    meshes = [m for m in meshes if len(m.vertices)]
    if not meshes:
        return empty_mesh()
    nv = 0
    verts, cols, tris = [], [], []
    for m in meshes:
        verts.append(m.vertices)
        cols.append(m.colors)
        if len(m.triangles):
            tris.append(m.triangles.astype(np.int64) + nv)
        nv += len(m.vertices)
    return Mesh(
        vertices=np.concatenate(verts),
        colors=np.concatenate(cols),
        triangles=(
            np.concatenate(tris).astype(np.int32)
            if tris
            else np.empty((0, 3), dtype=np.int32)
        ),
        lod_level=meshes[0].lod_level,
    )


def save_ply(mesh: Mesh, path):
    """ASCII PLY with per-vertex colors."""
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(mesh.vertices)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        fh.write(f"element face {len(mesh.triangles)}\n")
        fh.write("property list uchar int vertex_indices\nend_header\n")
        for p, c in zip(mesh.vertices, mesh.colors):
            fh.write(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {c[0]} {c[1]} {c[2]}\n")
        for t in mesh.triangles:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


def load_ply(path) -> Mesh:
    with open(path) as fh:
        line = fh.readline().strip()
        if line != "ply":
            raise ValueError("not a PLY file")
        nv = nf = 0
        while True:
            line = fh.readline().strip()
            if line.startswith("element vertex"):
                nv = int(line.split()[-1])
            elif line.startswith("element face"):
                nf = int(line.split()[-1])
            elif line == "end_header":
                break
            elif not line:
                raise ValueError("truncated PLY header")
        verts = np.empty((nv, 3), dtype=np.float64)
        cols = np.zeros((nv, 3), dtype=np.uint8)
        for i in range(nv):
            parts = fh.readline().split()
            verts[i] = [float(v) for v in parts[:3]]
            if len(parts) >= 6:
                cols[i] = [int(v) for v in parts[3:6]]
        tris = np.empty((nf, 3), dtype=np.int32)
        for i in range(nf):
            parts = fh.readline().split()
            if parts[0] != "3":
                raise ValueError("only triangle faces supported")
            tris[i] = [int(v) for v in parts[1:4]]
    return Mesh(vertices=verts, colors=cols, triangles=tris)

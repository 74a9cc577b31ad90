"""Ray picking against extracted meshes (Moller-Trumbore, vectorized)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from voxcast.meshing import Mesh

_EPS = 1e-12


@dataclass(frozen=True)
class PickHit:
    point: np.ndarray  # (3,)
    distance: float  # ray parameter (meters for unit directions)


def ray_mesh_hit(mesh: Mesh, origin, direction) -> PickHit | None:
    """Nearest intersection of one ray with a triangle mesh."""
    if mesh.empty:
        return None
    origin = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(d)
    if norm == 0:
        raise ValueError("zero ray direction")
    d = d / norm

    tri = mesh.vertices[mesh.triangles]
    v0, v1, v2 = tri[:, 0], tri[:, 1], tri[:, 2]
    e1 = v1 - v0
    e2 = v2 - v0
    pvec = np.cross(d, e2)
    det = (e1 * pvec).sum(axis=1)
    ok = np.abs(det) > _EPS
    inv_det = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    tvec = origin - v0
    u = (tvec * pvec).sum(axis=1) * inv_det
    ok &= (u >= -1e-9) & (u <= 1.0 + 1e-9)
    qvec = np.cross(tvec, e1)
    v = (d * qvec).sum(axis=1) * inv_det
    ok &= (v >= -1e-9) & (u + v <= 1.0 + 1e-9)
    t = (e2 * qvec).sum(axis=1) * inv_det
    ok &= t > 1e-9
    if not ok.any():
        return None
    t_hit = t[ok].min()
    return PickHit(point=origin + d * t_hit, distance=float(t_hit))


def pick_nearest(meshes, origin, direction) -> PickHit | None:
    """Nearest hit across several meshes (e.g. all LOD-0 block meshes)."""
    best: PickHit | None = None
    for mesh in meshes:
        hit = ray_mesh_hit(mesh, origin, direction)
        if hit is not None and (best is None or hit.distance < best.distance):
            best = hit
    return best


def measure_between(meshes, ray_a, ray_b) -> tuple[float, PickHit, PickHit] | None:
    """Surface-to-surface distance between two pick rays.

    Each ray is (origin, direction); returns None when either misses.
    """
    meshes = list(meshes)
    hit_a = pick_nearest(meshes, *ray_a)
    if hit_a is None:
        return None
    hit_b = pick_nearest(meshes, *ray_b)
    if hit_b is None:
        return None
    return float(np.linalg.norm(hit_a.point - hit_b.point)), hit_a, hit_b

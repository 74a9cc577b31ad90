"""Pinhole camera model and sphere-traced RGB-D rendering."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from voxcast.sim.scene import SceneSdf

# Ray march termination: surface tolerance and iteration cap.
_HIT_EPS = 1e-5
_NEAR_HIT = 1e-3
_MAX_STEPS = 192


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = 512
    height: int = 424
    fx: float = 365.0
    fy: float = 365.0
    cx: float = 255.5
    cy: float = 211.5
    depth_scale: float = 0.001  # meters per depth unit

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.depth_scale <= 0:
            raise ValueError("depth_scale must be positive")

    @classmethod
    def scaled(cls, width: int, height: int, hfov_deg: float = 70.0) -> "CameraIntrinsics":
        """Intrinsics for a downscaled sensor with the same field of view."""
        fx = (width / 2.0) / np.tan(np.radians(hfov_deg) / 2.0)
        return cls(
            width=width,
            height=height,
            fx=fx,
            fy=fx,
            cx=(width - 1) / 2.0,
            cy=(height - 1) / 2.0,
        )


@dataclass
class FrameRGBD:
    timestamp: float
    depth: np.ndarray  # (h, w) uint16 depth units, 0 = invalid
    color: np.ndarray  # (h, w, 3) uint8
    pose: np.ndarray  # (3, 4) float32 camera-to-world
    intrinsics: CameraIntrinsics


def look_at_pose(eye, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world pose with +z toward the target and +y downward."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    n = np.linalg.norm(fwd)
    if n == 0:
        raise ValueError("eye and target coincide")
    fwd = fwd / n
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    rn = np.linalg.norm(right)
    if rn < 1e-9:
        right = np.cross(fwd, (1.0, 0.0, 0.0))
        rn = np.linalg.norm(right)
    right = right / rn
    down = np.cross(fwd, right)
    rot = np.stack([right, down, fwd], axis=1)
    return np.hstack([rot, eye[:, None]])


def check_pose_orthonormal(pose: np.ndarray, tol: float = 1e-6):
    rot = np.asarray(pose, dtype=np.float64)[:, :3]
    err = np.abs(rot @ rot.T - np.eye(3)).max()
    if err > tol:
        raise ValueError(f"pose rotation not orthonormal (err {err:.2e})")


@lru_cache(maxsize=8)
def _ray_grid(intr: CameraIntrinsics):
    """Unit camera-frame ray directions and their z components."""
    u = np.arange(intr.width, dtype=np.float64)
    v = np.arange(intr.height, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    dirs = np.stack(
        [(uu - intr.cx) / intr.fx, (vv - intr.cy) / intr.fy, np.ones_like(uu)], axis=-1
    )
    norms = np.linalg.norm(dirs, axis=-1, keepdims=True)
    dirs /= norms
    return dirs.reshape(-1, 3), dirs[..., 2].reshape(-1)


def render_frame(
    pose,
    intrinsics: CameraIntrinsics,
    scene: SceneSdf,
    timestamp: float = 0.0,
    z_min: float = 0.05,
    z_max: float = 5.0,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> FrameRGBD:
    """Render a posed RGB-D frame by sphere tracing the scene SDF.

    Rays that fail to converge within the step budget, start inside
    geometry or exceed z_max report depth 0 (invalid), matching how a
    real sensor drops returns.
    """
    pose = np.asarray(pose, dtype=np.float64)
    check_pose_orthonormal(pose)
    rot, origin = pose[:, :3], pose[:, 3]

    dirs_cam, z_factor = _ray_grid(intrinsics)
    dirs = dirs_cam @ rot.T
    n = len(dirs)
    t_max_ray = z_max / np.maximum(z_factor, 1e-6)

    t = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    active = np.arange(n)
    last_d = np.full(n, np.inf)
    for _ in range(_MAX_STEPS):
        p = origin + dirs[active] * t[active, None]
        d = scene.sdf(p)
        last_d[active] = d
        converged = d < _HIT_EPS
        hit[active[converged]] = d[converged] > -_HIT_EPS * 10
        t[active] += np.maximum(d, 0.0)
        alive = ~converged & (t[active] <= t_max_ray[active])
        active = active[alive]
        if len(active) == 0:
            break
    # Grazing rays still inching toward the surface count as hits.
    near = last_d < _NEAR_HIT
    hit |= near & (t <= t_max_ray)

    depth_z = t * z_factor
    if noise_sigma > 0:
        gen = rng if rng is not None else np.random.default_rng()
        depth_z = depth_z + gen.normal(0.0, noise_sigma, size=n)
    valid = hit & (depth_z >= z_min) & (depth_z <= z_max)

    depth_units = np.zeros(n, dtype=np.uint16)
    du = np.rint(depth_z[valid] / intrinsics.depth_scale)
    depth_units[valid] = np.clip(du, 0, 65535).astype(np.uint16)

    color = np.zeros((n, 3), dtype=np.uint8)
    if valid.any():
        pts = origin + dirs[valid] * t[valid, None]
        color[valid] = scene.color_at(pts)

    h, w = intrinsics.height, intrinsics.width
    return FrameRGBD(
        timestamp=timestamp,
        depth=depth_units.reshape(h, w),
        color=color.reshape(h, w, 3),
        pose=pose.astype(np.float32),
        intrinsics=intrinsics,
    )

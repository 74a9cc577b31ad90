"""Analytic signed-distance scenes.

A scene is a union (componentwise min) of colored primitives, loaded
from a plain-text description.  Exact distances make the renderer's
sphere tracing fast and give every geometric test a free oracle.

File format, one primitive per line ('#' starts a comment):

    box    cx cy cz  sx sy sz  r g b      # center, full extents
    sphere cx cy cz  radius    r g b
    plane  nx ny nz  offset    r g b      # sdf = dot(n, p) - offset
    bounds minx miny minz maxx maxy maxz  # optional explicit extent
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    color: tuple[int, int, int]

    def distance(self, p: np.ndarray) -> np.ndarray:
        return np.linalg.norm(p - np.asarray(self.center), axis=-1) - self.radius

    def to_line(self) -> str:
        c, r, col = self.center, self.radius, self.color
        return f"sphere {c[0]} {c[1]} {c[2]} {r} {col[0]} {col[1]} {col[2]}"


@dataclass(frozen=True)
class Box:
    center: tuple[float, float, float]
    size: tuple[float, float, float]  # full extents
    color: tuple[int, int, int]

    def distance(self, p: np.ndarray) -> np.ndarray:
        half = np.asarray(self.size) * 0.5
        q = np.abs(p - np.asarray(self.center)) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside

    def to_line(self) -> str:
        c, s, col = self.center, self.size, self.color
        return (
            f"box {c[0]} {c[1]} {c[2]} {s[0]} {s[1]} {s[2]} "
            f"{col[0]} {col[1]} {col[2]}"
        )


@dataclass(frozen=True)
class Plane:
    normal: tuple[float, float, float]  # unit
    offset: float
    color: tuple[int, int, int]

    def distance(self, p: np.ndarray) -> np.ndarray:
        return p @ np.asarray(self.normal) - self.offset

    def to_line(self) -> str:
        n, col = self.normal, self.color
        return f"plane {n[0]} {n[1]} {n[2]} {self.offset} {col[0]} {col[1]} {col[2]}"


Primitive = Sphere | Box | Plane


class SceneSdf:
    """Union of analytic primitives with per-primitive colors."""

    def __init__(self, primitives: list[Primitive], bounds=None):
        if not primitives:
            raise ValueError("scene needs at least one primitive")
        self.primitives = list(primitives)
        self.bounds = self._compute_bounds() if bounds is None else (
            np.asarray(bounds[0], dtype=np.float64),
            np.asarray(bounds[1], dtype=np.float64),
        )
        self._colors = np.asarray([p.color for p in self.primitives], dtype=np.uint8)

    def _compute_bounds(self, margin: float = 0.5):
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        for p in self.primitives:
            if isinstance(p, Sphere):
                c = np.asarray(p.center)
                lo = np.minimum(lo, c - p.radius)
                hi = np.maximum(hi, c + p.radius)
            elif isinstance(p, Box):
                c = np.asarray(p.center)
                h = np.asarray(p.size) * 0.5
                lo = np.minimum(lo, c - h)
                hi = np.maximum(hi, c + h)
        if not np.isfinite(lo).all():
            # planes only; pick a nominal room
            lo = np.full(3, -5.0)
            hi = np.full(3, 5.0)
        return lo - margin, hi + margin

    def _distances(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.empty((len(pts), len(self.primitives)))
        for i, prim in enumerate(self.primitives):
            out[:, i] = prim.distance(pts)
        return out

    def sdf(self, points: np.ndarray) -> np.ndarray:
        """Signed distance to the union at each query point."""
        d = self._distances(points).min(axis=1)
        if np.ndim(points) == 1:
            return d[0]
        return d

    def sdf_and_color(self, points: np.ndarray):
        d = self._distances(points)
        nearest = d.argmin(axis=1)
        return d[np.arange(len(d)), nearest], self._colors[nearest]

    def color_at(self, points: np.ndarray) -> np.ndarray:
        return self.sdf_and_color(points)[1]

    def to_text(self) -> str:
        lines = [p.to_line() for p in self.primitives]
        lo, hi = self.bounds
        lines.append(
            "bounds " + " ".join(f"{v}" for v in (*lo.tolist(), *hi.tolist()))
        )
        return "\n".join(lines) + "\n"


def parse_scene(text: str) -> SceneSdf:
    prims: list[Primitive] = []
    bounds = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind, vals = parts[0], parts[1:]
        try:
            if kind == "box":
                c = tuple(float(v) for v in vals[0:3])
                s = tuple(float(v) for v in vals[3:6])
                col = tuple(int(v) for v in vals[6:9])
                if len(vals) != 9 or min(s) <= 0:
                    raise ValueError
                prims.append(Box(c, s, col))
            elif kind == "sphere":
                c = tuple(float(v) for v in vals[0:3])
                r = float(vals[3])
                col = tuple(int(v) for v in vals[4:7])
                if len(vals) != 7 or r <= 0:
                    raise ValueError
                prims.append(Sphere(c, r, col))
            elif kind == "plane":
                n = np.asarray([float(v) for v in vals[0:3]])
                norm = np.linalg.norm(n)
                if len(vals) != 7 or norm == 0:
                    raise ValueError
                n = n / norm
                prims.append(
                    Plane(tuple(n.tolist()), float(vals[3]), tuple(int(v) for v in vals[4:7]))
                )
            elif kind == "bounds":
                if len(vals) != 6:
                    raise ValueError
                v = [float(x) for x in vals]
                bounds = (v[0:3], v[3:6])
            else:
                raise ValueError(f"unknown primitive '{kind}'")
        except (ValueError, IndexError) as exc:
            raise ValueError(f"bad scene line {lineno}: {raw!r}") from exc
    return SceneSdf(prims, bounds=bounds)


def load_scene(path) -> SceneSdf:
    with open(path) as fh:
        return parse_scene(fh.read())


def save_scene(scene: SceneSdf, path):
    with open(path, "w") as fh:
        fh.write(scene.to_text())

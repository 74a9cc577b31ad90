"""Built-in scenes used by the CLI, the test suite and the demos."""

from __future__ import annotations

from voxcast.sim.scene import Box, Plane, SceneSdf

FLOOR = Plane(normal=(0.0, 0.0, 1.0), offset=0.0, color=(90, 90, 95))

WALL = (205, 190, 160)
LINTEL = (170, 120, 90)
CRATE = (60, 120, 180)

# Corridor layout constants; the two doorway sizes are the measurement
# ground truth used by the acceptance suite.
CORRIDOR_LENGTH = 6.0
CORRIDOR_HALF_WIDTH = 0.9
WALL_HEIGHT = 2.4
WALL_THICKNESS = 0.12
DOOR_A = {"x0": 1.5, "width": 0.95, "height": 2.15}  # right wall
DOOR_B = {"x0": 3.2, "width": 1.74, "height": 2.22}  # left wall


def _wall_run(x0, x1, y_center, z0=0.0, z1=WALL_HEIGHT, color=WALL):
    return Box(
        center=((x0 + x1) / 2.0, y_center, (z0 + z1) / 2.0),
        size=(x1 - x0, WALL_THICKNESS, z1 - z0),
        color=color,
    )


def corridor_scene() -> SceneSdf:
    """Straight corridor with two doorway openings of known size."""
    t = WALL_THICKNESS
    hw = CORRIDOR_HALF_WIDTH
    length = CORRIDOR_LENGTH
    ry = -hw - t / 2.0  # right wall centerline
    ly = hw + t / 2.0

    a0 = DOOR_A["x0"]
    a1 = a0 + DOOR_A["width"]
    b0 = DOOR_B["x0"]
    b1 = b0 + DOOR_B["width"]

    prims = [
        FLOOR,
        # right wall with doorway A
        _wall_run(-t, a0, ry),
        _wall_run(a1, length + t, ry),
        _wall_run(a0, a1, ry, z0=DOOR_A["height"], color=LINTEL),
        # left wall with doorway B
        _wall_run(-t, b0, ly),
        _wall_run(b1, length + t, ly),
        _wall_run(b0, b1, ly, z0=DOOR_B["height"], color=LINTEL),
        # end caps
        Box(
            center=(-t / 2.0, 0.0, WALL_HEIGHT / 2.0),
            size=(t, 2 * hw + 2 * t, WALL_HEIGHT),
            color=WALL,
        ),
        Box(
            center=(length + t / 2.0, 0.0, WALL_HEIGHT / 2.0),
            size=(t, 2 * hw + 2 * t, WALL_HEIGHT),
            color=WALL,
        ),
    ]
    return SceneSdf(
        prims,
        bounds=((-0.5, -hw - 1.0, -0.1), (length + 0.5, hw + 1.0, WALL_HEIGHT + 0.3)),
    )


def room_scene(side: float = 2.4, obstacle: bool = False) -> SceneSdf:
    """Square room centered at the origin; optional crate in the corner."""
    t = WALL_THICKNESS
    h = 2.2
    half = side / 2.0
    prims = [
        FLOOR,
        Box(center=(0.0, half + t / 2, h / 2), size=(side + 2 * t, t, h), color=WALL),
        Box(center=(0.0, -half - t / 2, h / 2), size=(side + 2 * t, t, h), color=WALL),
        Box(center=(half + t / 2, 0.0, h / 2), size=(t, side, h), color=WALL),
        Box(center=(-half - t / 2, 0.0, h / 2), size=(t, side, h), color=WALL),
    ]
    if obstacle:
        prims.append(obstacle_box(side))
    return SceneSdf(
        prims,
        bounds=(
            (-half - 0.5, -half - 0.5, -0.1),
            (half + 0.5, half + 0.5, h + 0.3),
        ),
    )


def obstacle_box(side: float = 2.4) -> Box:
    half = side / 2.0
    return Box(
        center=(half - 0.5, half - 0.5, 0.6),
        size=(0.5, 0.5, 1.2),
        color=CRATE,
    )


BUILTIN_SCENES = {
    "corridor": corridor_scene,
    "room": room_scene,
}


def get_scene(name: str) -> SceneSdf:
    """Resolve 'builtin:<name>' or a scene file path."""
    if name.startswith("builtin:"):
        key = name.split(":", 1)[1]
        if key not in BUILTIN_SCENES:
            raise ValueError(
                f"unknown builtin scene '{key}' (have {sorted(BUILTIN_SCENES)})"
            )
        return BUILTIN_SCENES[key]()
    from voxcast.sim.scene import load_scene

    return load_scene(name)

"""Omnidirectional robot base with an arm-mounted pan/tilt camera.

The base is a disc moving in the ground plane under velocity commands
(vx forward, vy left, omega about +z), clamped to the configured speed
limit.  The camera sweeps autonomously: pan runs a triangle wave while
tilt descends from the top to the bottom of its range over one sweep
period, tracing a Z-shaped scan pattern that widens the captured area
without operator attention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from voxcast.sim.scene import SceneSdf


@dataclass(frozen=True)
class TeleopCommand:
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0
    stop: bool = False

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.vx, self.vy, self.omega)):
            raise ValueError("teleop command must be finite")


@dataclass(frozen=True)
class RobotConfig:
    v_max: float = 0.15  # m/s, indoor scanning speed limit
    omega_max: float = 1.0  # rad/s
    radius: float = 0.30  # collision disc
    collision_height: float = 1.0  # wall-test height; keeps the floor out of the query
    mount_offset: tuple[float, float, float] = (0.25, 0.0, 1.10)
    pan_amplitude: float = math.radians(45.0)
    tilt_top: float = 0.0
    tilt_bottom: float = math.radians(-30.0)
    sweep_period: float = 20.0  # seconds per Z pass


@dataclass(frozen=True)
class RobotState:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    vx: float = 0.0  # realized body-frame velocity after clamping
    vy: float = 0.0
    omega: float = 0.0
    arm_phase: float = 0.0  # [0, 1) position along the sweep

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


def clamp_command(cmd: TeleopCommand, cfg: RobotConfig) -> tuple[float, float, float]:
    if cmd.stop:
        return 0.0, 0.0, 0.0
    vx, vy = cmd.vx, cmd.vy
    speed = math.hypot(vx, vy)
    if speed > cfg.v_max:
        scale = cfg.v_max / speed
        vx *= scale
        vy *= scale
    omega = min(max(cmd.omega, -cfg.omega_max), cfg.omega_max)
    return vx, vy, omega


def _clear(scene: SceneSdf | None, x: float, y: float, cfg: RobotConfig) -> bool:
    if scene is None:
        return True
    d = scene.sdf(np.array([x, y, cfg.collision_height]))
    return d >= cfg.radius


def step(
    state: RobotState,
    cmd: TeleopCommand,
    dt: float,
    scene: SceneSdf | None = None,
    cfg: RobotConfig = RobotConfig(),
) -> RobotState:
    """Advance the base and arm by dt seconds.

    Motion into geometry is blocked per axis: if the combined move
    penetrates, each world axis is tried alone, so the robot slides
    along walls instead of sticking to them.  The arm sweeps regardless
    of base motion.
    """
    if not (0.0 < dt <= 0.1):
        raise ValueError(f"dt must be in (0, 0.1], got {dt}")
    vx, vy, omega = clamp_command(cmd, cfg)
    yaw = state.yaw + omega * dt
    c, s = math.cos(state.yaw), math.sin(state.yaw)
    dx = (vx * c - vy * s) * dt
    dy = (vx * s + vy * c) * dt

    x, y = state.x, state.y
    if _clear(scene, x + dx, y + dy, cfg):
        x, y = x + dx, y + dy
    else:
        if _clear(scene, x + dx, y, cfg):
            x = x + dx
        if _clear(scene, x, y + dy, cfg):
            y = y + dy

    phase = (state.arm_phase + dt / cfg.sweep_period) % 1.0
    return RobotState(
        x=x, y=y, yaw=_wrap_angle(yaw), vx=vx, vy=vy, omega=omega, arm_phase=phase
    )


def _wrap_angle(a: float) -> float:
    if -math.pi <= a <= math.pi:
        return a
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def arm_angles(phase: float, cfg: RobotConfig = RobotConfig()) -> tuple[float, float]:
    """(pan, tilt) along the Z sweep.

    Pan runs +A -> -A -> +A as a triangle wave (left to right and back)
    while tilt descends linearly top to bottom, snapping back up at the
    wrap; the one discontinuity per cycle is the defined corner turn.
    """
    phase = phase % 1.0
    if phase < 0.5:
        pan = cfg.pan_amplitude * (1.0 - 4.0 * phase)
    else:
        pan = cfg.pan_amplitude * (4.0 * phase - 3.0)
    tilt = cfg.tilt_top + (cfg.tilt_bottom - cfg.tilt_top) * phase
    return pan, tilt


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


# Camera axes in the base frame at pan = tilt = 0: looking along base +x,
# image x to the robot's right (-y), image y down (-z).
_R_CAM0 = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])


def arm_camera_pose(state: RobotState, cfg: RobotConfig = RobotConfig()) -> np.ndarray:
    """Camera-to-world transform (3x4) for the current arm phase."""
    pan, tilt = arm_angles(state.arm_phase, cfg)
    rz = _rot_z(state.yaw)
    rot = rz @ _rot_z(pan) @ _R_CAM0 @ _rot_x(tilt)
    pos = np.array([state.x, state.y, 0.0]) + rz @ np.asarray(cfg.mount_offset)
    return np.hstack([rot, pos[:, None]])


# Fixed chain giving the avatar a plausible silhouette; offsets are in
# the base frame, interpolated between the deck and the camera mount.
_LINK_CHAIN = (
    ("base", (0.0, 0.0, 0.0)),
    ("column", (0.08, 0.0, 0.40)),
    ("shoulder", (0.14, 0.0, 0.72)),
    ("elbow", (0.20, 0.0, 0.92)),
    ("wrist", (0.24, 0.0, 1.04)),
)


def link_poses(state: RobotState, cfg: RobotConfig = RobotConfig()):
    """Named link transforms: five body links plus the camera."""
    rz = _rot_z(state.yaw)
    base = np.array([state.x, state.y, 0.0])
    links = []
    for name, off in _LINK_CHAIN:
        pos = base + rz @ np.asarray(off)
        links.append((name, np.hstack([rz, pos[:, None]]).astype(np.float32)))
    links.append(("camera", arm_camera_pose(state, cfg).astype(np.float32)))
    return links

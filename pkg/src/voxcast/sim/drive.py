"""Scripted driving: produce deterministic session recordings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from voxcast.blocks import VolumeParams
from voxcast.recording import RecordingWriter
from voxcast.sim.camera import CameraIntrinsics, FrameRGBD, render_frame
from voxcast.sim.robot import RobotConfig, RobotState, TeleopCommand, arm_camera_pose, step
from voxcast.sim.scene import SceneSdf

SIM_RATE = 30.0  # base stepping rate, matching the sensor model


@dataclass(frozen=True)
class DriveSegment:
    duration: float  # seconds
    command: TeleopCommand


@dataclass
class SimFrame:
    frame: FrameRGBD
    state: RobotState
    commanded_speed: float


def drive_script(
    scene: SceneSdf,
    script: list[DriveSegment],
    intrinsics: CameraIntrinsics,
    start: RobotState = RobotState(),
    cfg: RobotConfig = RobotConfig(),
    render_every: int = 3,
    noise_sigma: float = 0.0,
    seed: int = 0,
    z_max: float = 5.0,
) -> Iterator[SimFrame]:
    """Step the robot through the script, rendering every Nth step.

    Deterministic for a fixed script and seed; the noise generator is
    seeded independently of frame content.
    """
    rng = np.random.default_rng(seed)
    state = start
    dt = 1.0 / SIM_RATE
    tick = 0
    for segment in script:
        steps = int(round(segment.duration * SIM_RATE))
        for _ in range(steps):
            state = step(state, segment.command, dt, scene, cfg)
            if tick % render_every == 0:
                pose = arm_camera_pose(state, cfg)
                frame = render_frame(
                    pose,
                    intrinsics,
                    scene,
                    timestamp=tick * dt,
                    noise_sigma=noise_sigma,
                    rng=rng,
                    z_max=z_max,
                )
                yield SimFrame(
                    frame=frame,
                    state=state,
                    commanded_speed=float(
                        np.hypot(segment.command.vx, segment.command.vy)
                    ),
                )
            tick += 1


def record_script(
    path,
    scene: SceneSdf,
    script: list[DriveSegment],
    intrinsics: CameraIntrinsics,
    params: VolumeParams,
    **kwargs,
) -> int:
    """Write a recording for the script; returns the frame count."""
    with RecordingWriter(path, intrinsics, params) as writer:
        for sim_frame in drive_script(scene, script, intrinsics, **kwargs):
            writer.append(sim_frame.frame)
        return writer.frames


def corridor_script() -> list[DriveSegment]:
    """60 s out-and-back pass along the corridor with scanning stops."""
    fwd = TeleopCommand(vx=0.15)
    turn = TeleopCommand(omega=0.5)
    hold = TeleopCommand()
    return [
        DriveSegment(3.0, hold),
        DriveSegment(11.0, fwd),
        DriveSegment(2.0, hold),
        DriveSegment(11.0, fwd),
        DriveSegment(2.0, hold),
        # about-face (pi radians at 0.5 rad/s)
        DriveSegment(6.28, turn),
        DriveSegment(2.0, hold),
        DriveSegment(11.0, fwd),
        DriveSegment(2.0, hold),
        DriveSegment(8.0, fwd),
        DriveSegment(1.72, hold),
    ]


def orbit_script(duration: float = 15.0) -> list[DriveSegment]:
    """Rotate in place to sweep a room."""
    spin = TeleopCommand(omega=0.45)
    return [
        DriveSegment(2.0, TeleopCommand()),
        DriveSegment(duration - 4.0, spin),
        DriveSegment(2.0, TeleopCommand()),
    ]

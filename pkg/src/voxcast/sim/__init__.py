"""Deterministic robot and sensor simulation against analytic SDF scenes."""

from voxcast.sim.camera import CameraIntrinsics, FrameRGBD, render_frame
from voxcast.sim.robot import RobotConfig, RobotState, TeleopCommand, arm_camera_pose, step
from voxcast.sim.scene import SceneSdf, load_scene, parse_scene

__all__ = [
    "CameraIntrinsics",
    "FrameRGBD",
    "render_frame",
    "RobotConfig",
    "RobotState",
    "TeleopCommand",
    "arm_camera_pose",
    "step",
    "SceneSdf",
    "load_scene",
    "parse_scene",
]

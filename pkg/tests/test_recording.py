import numpy as np
import pytest

from voxcast.blocks import VolumeParams
from voxcast.recording import RecordingWriter, read_frames, read_header
from voxcast.sim.camera import CameraIntrinsics, render_frame
from voxcast.sim.drive import DriveSegment, drive_script, record_script
from voxcast.sim.robot import TeleopCommand
from voxcast.sim.scenes import room_scene


def test_recording_round_trip(tmp_path, params):
    intr = CameraIntrinsics.scaled(48, 36)
    scene = room_scene(1.6)
    path = tmp_path / "session.vcrec"
    frames_in = []
    with RecordingWriter(path, intr, params) as writer:
        for sim_frame in drive_script(
            scene,
            [DriveSegment(1.0, TeleopCommand(omega=0.4))],
            intr,
            render_every=5,
        ):
            writer.append(sim_frame.frame)
            frames_in.append(sim_frame.frame)
    header = read_header(path)
    assert header.intrinsics == intr
    assert header.params == params
    frames_out = list(read_frames(path))
    assert len(frames_out) == len(frames_in) == 6
    for a, b in zip(frames_in, frames_out):
        assert a.timestamp == b.timestamp
        assert np.array_equal(a.depth, b.depth)
        assert np.array_equal(a.color, b.color)
        assert np.array_equal(a.pose, b.pose)


def test_recording_deterministic(tmp_path, params):
    intr = CameraIntrinsics.scaled(32, 24)
    scene = room_scene(1.6)
    script = [DriveSegment(0.5, TeleopCommand(vx=0.15))]
    p1, p2 = tmp_path / "a.vcrec", tmp_path / "b.vcrec"
    record_script(p1, scene, script, intr, params, seed=9)
    record_script(p2, scene, script, intr, params, seed=9)
    assert p1.read_bytes() == p2.read_bytes()


def test_magic_checked(tmp_path):
    path = tmp_path / "bogus.bin"
    path.write_bytes(b"NOTREC" + b"\x00" * 100)
    with pytest.raises(ValueError):
        read_header(path)


def test_wrong_resolution_rejected(tmp_path, params):
    intr = CameraIntrinsics.scaled(32, 24)
    other = CameraIntrinsics.scaled(48, 36)
    scene = room_scene(1.6)
    frame = render_frame(
        np.hstack([np.eye(3), np.array([[0.0], [0.0], [1.0]])]), other, scene
    )
    with RecordingWriter(tmp_path / "x.vcrec", intr, params) as writer:
        with pytest.raises(ValueError):
            writer.append(frame)

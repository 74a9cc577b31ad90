"""Golden wire frames (raw codec), shared by tests and PROTOCOL.md.

Regenerate with tools/gen_golden_frames.py; any byte change here is a
wire-format break and must be treated as such.
"""

import numpy as np

from voxcast.mc_codec import McBlock
from voxcast.protocol import (
    Annotation,
    BlockRemoval,
    BlockRequest,
    CameraPose,
    Hello,
    Label,
    McBlockPackage,
    ResetRegion,
    RobotLinkPoses,
    Role,
    SessionEnd,
    StatusReply,
    StatusRequest,
    Strategy,
    TsdfBlockPackage,
)
from voxcast.tsdf import TsdfBlock


def _seq_pose():
    return (np.arange(12, dtype=np.float32) / 8.0).reshape(3, 4)


def golden_messages():
    tsdf = TsdfBlock(
        id=(1, -2, 3),
        sdf=np.arange(8, dtype=np.int16).reshape(2, 2, 2) * 1000 - 3500,
        weight=np.arange(8, dtype=np.uint8).reshape(2, 2, 2) * 30,
        color=np.arange(24, dtype=np.uint8).reshape(2, 2, 2, 3) * 10,
    )
    mc = McBlock(
        id=(-1, 0, 7),
        revision=2,
        mc=np.arange(8, dtype=np.uint8).reshape(2, 2, 2) * 31,
        offsets=np.arange(24, dtype=np.uint8).reshape(2, 2, 2, 3) * 9,
        color=np.arange(24, dtype=np.uint8).reshape(2, 2, 2, 3) * 7,
    )
    return {
        "hello": Hello(role=Role.EXPLORATION, name="ui"),
        "tsdf_package": TsdfBlockPackage(blocks=[tsdf], block_dim=2),
        "mc_package": McBlockPackage(blocks=[mc], block_dim=2),
        "camera_pose": CameraPose(timestamp=1.5, pose=_seq_pose()),
        "robot_links": RobotLinkPoses(timestamp=0.25, links=[("base", _seq_pose())]),
        "block_request_view": BlockRequest(
            strategy=Strategy.VIEW_BASED, count=512, view_pose=_seq_pose()
        ),
        "block_request_arbitrary": BlockRequest(strategy=Strategy.ARBITRARY, count=64),
        "reset_region": ResetRegion(lo=(-1.0, -0.5, 0.0), hi=(1.0, 0.5, 2.0)),
        "annotation": Annotation(
            lo=(0.0, 0.0, 0.0),
            hi=(1.0, 1.0, 1.0),
            label=Label.INTERESTING,
            author=42,
            seq=7,
        ),
        "session_end": SessionEnd(),
        "block_removal": BlockRemoval(ids=[(1, 2, 3), (-4, -5, -6)]),
        "status_request": StatusRequest(),
        "status_reply": StatusReply(text="blocks_stored 0"),
    }


GOLDEN_HEX = {
    "hello": "060000000800010001027569",
    "tsdf_package": "42000000010002000100000001000000feffffff0300000054f200000a143cf61e1e283224fa3c3c46500cfe5a5a646ef4017878828cdc059696a0aac409b4b4bec8ac0dd2d2dce6",
    "mc_package": "520000000200020001000000ffffffff000000000700000002000000000000000000091200070e1f1b242d151c233e363f482a31385d515a633f464d7c6c757e545b629b879099697077baa2abb47e858cd9bdc6cf939aa1",
    "camera_pose": "380000000300000000000000f83f000000000000003e0000803e0000c03e0000003f0000203f0000403f0000603f0000803f0000903f0000a03f0000b03f",
    "robot_links": "3e0000000400000000000000d03f010462617365000000000000003e0000803e0000c03e0000003f0000203f0000403f0000603f0000803f0000903f0000a03f0000b03f",
    "block_request_view": "34000000050000000201000000000000003e0000803e0000c03e0000003f0000203f0000403f0000603f0000803f0000903f0000a03f0000b03f",
    "block_request_arbitrary": "04000000050002400000",
    "reset_region": "180000000600000080bf000000bf000000000000803f0000003f00000040",
    "annotation": "2100000007000000000000000000000000000000803f0000803f0000803f002a00000007000000",
    "session_end": "000000000900",
    "block_removal": "1c0000000a0002000000010000000200000003000000fcfffffffbfffffffaffffff",
    "status_request": "000000000b00",
    "status_reply": "130000000c000f000000626c6f636b735f73746f7265642030",
}

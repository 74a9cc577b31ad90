"""Live volumetric telepresence and teleoperation toolkit.

A simulated robot scans an analytic scene with an arm-mounted RGB-D
camera, a reconstruction client fuses the frames into a sparse TSDF
volume, a central server converts finished blocks to a compact
marching-cubes representation and streams them on demand to any number
of exploration clients, and a browser UI lets an operator steer the
robot through the incrementally reconstructed scene.
"""

from voxcast.blocks import BlockId, VolumeParams, block_id_from_world, spatial_hash

__version__ = "0.1.0"

__all__ = [
    "BlockId",
    "VolumeParams",
    "block_id_from_world",
    "spatial_hash",
    "__version__",
]

"""Binary wire protocol shared by every networked component.

Frame layout (little-endian throughout):

    u32  payload length (after compression)
    u8   message tag
    u8   codec id: 0 = raw, 1 = zlib
    ...  payload

Payloads are compressed when zlib actually shrinks them, otherwise sent
raw, so the 6-byte header is the worst-case overhead.  Every message
kind round-trips encode/decode exactly; decoders reject anything
malformed with :class:`ProtocolError` and never crash on corrupt input.
See PROTOCOL.md for per-message body layouts and golden hex dumps.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from voxcast.blocks import BlockId
from voxcast.mc_codec import (
    McBlock,
    deserialize_mc_block,
    deserialize_tsdf_block,
    serialize_mc_block,
    serialize_tsdf_block,
    serialized_block_size,
    serialized_tsdf_block_size,
)
from voxcast.tsdf import TsdfBlock

MAX_PAYLOAD = 64 * 1024 * 1024
PROTOCOL_VERSION = 1

CODEC_RAW = 0
CODEC_ZLIB = 1

# Inputs smaller than this are never worth a compression attempt.
_COMPRESS_MIN = 64


class ProtocolError(Exception):
    """Malformed frame or message body."""


class Role:
    FUSION = 0
    EXPLORATION = 1
    ROBOT = 2


class Strategy:
    VIEW_BASED = 0
    RECONSTRUCTION_ORDER = 1
    ARBITRARY = 2


class Label:
    INTERESTING = 0
    SUSPICIOUS = 1
    INCOMPLETE = 2

    NAMES = {0: "interesting", 1: "suspicious", 2: "incomplete"}
    FROM_NAME = {v: k for k, v in NAMES.items()}


def _eq(a, b) -> bool:
    if type(a) is not type(b):
        return NotImplemented
    for k, va in a.__dict__.items():
        vb = b.__dict__[k]
        if isinstance(va, np.ndarray):
            if va.dtype != vb.dtype or not np.array_equal(va, vb):
                return False
        elif isinstance(va, list):
            if len(va) != len(vb) or any(not _item_eq(x, y) for x, y in zip(va, vb)):
                return False
        elif va != vb:
            return False
    return True


def _item_eq(x, y) -> bool:
    if isinstance(x, (TsdfBlock, McBlock)):
        return _eq(x, y)
    if isinstance(x, tuple):
        return len(x) == len(y) and all(_item_eq(a, b) for a, b in zip(x, y))
    if isinstance(x, np.ndarray):
        return x.dtype == y.dtype and np.array_equal(x, y)
    return x == y


class _Message:
    def __eq__(self, other):
        return _eq(self, other)

    __hash__ = None


def identity_pose() -> np.ndarray:
    return np.hstack([np.eye(3, dtype=np.float32), np.zeros((3, 1), np.float32)])


def _check_pose(pose) -> np.ndarray:
    pose = np.asarray(pose, dtype=np.float32)
    if pose.shape != (3, 4):
        raise ValueError(f"pose must be 3x4, got {pose.shape}")
    return pose


@dataclass(eq=False)
class Hello(_Message):
    role: int
    name: str = ""
    version: int = PROTOCOL_VERSION

    TAG = 8


@dataclass(eq=False)
class TsdfBlockPackage(_Message):
    blocks: list[TsdfBlock]
    block_dim: int = 8

    TAG = 1


@dataclass(eq=False)
class McBlockPackage(_Message):
    blocks: list[McBlock]
    block_dim: int = 8

    TAG = 2


@dataclass(eq=False)
class CameraPose(_Message):
    timestamp: float
    pose: np.ndarray  # (3, 4) float32, camera-to-world

    TAG = 3

    def __post_init__(self):
        self.pose = _check_pose(self.pose)


@dataclass(eq=False)
class RobotLinkPoses(_Message):
    timestamp: float
    links: list[tuple[str, np.ndarray]]  # ordered (name, 3x4 float32)

    TAG = 4

    def __post_init__(self):
        self.links = [(n, _check_pose(p)) for n, p in self.links]


@dataclass(eq=False)
class BlockRequest(_Message):
    strategy: int
    count: int
    view_pose: np.ndarray | None = None  # required iff strategy == VIEW_BASED

    TAG = 5

    def __post_init__(self):
        if self.count < 1 or self.count > 0xFFFF:
            raise ValueError(f"count out of range: {self.count}")
        if self.strategy == Strategy.VIEW_BASED and self.view_pose is None:
            raise ValueError("ViewBased request needs a view pose")
        if self.view_pose is not None:
            self.view_pose = _check_pose(self.view_pose)


@dataclass(eq=False)
class ResetRegion(_Message):
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    TAG = 6

    def __post_init__(self):
        self.lo = tuple(float(v) for v in self.lo)
        self.hi = tuple(float(v) for v in self.hi)
        if not all(a <= b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"region min must be <= max: {self.lo} {self.hi}")


@dataclass(eq=False)
class Annotation(_Message):
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    label: int
    author: int
    seq: int = 0

    TAG = 7

    def __post_init__(self):
        self.lo = tuple(float(v) for v in self.lo)
        self.hi = tuple(float(v) for v in self.hi)
        if self.label not in Label.NAMES:
            raise ValueError(f"unknown label {self.label}")
        if not all(a <= b for a, b in zip(self.lo, self.hi)):
            raise ValueError("region min must be <= max")

    @property
    def key(self) -> tuple[int, int]:
        return (self.author, self.seq)


@dataclass(eq=False)
class SessionEnd(_Message):
    TAG = 9


@dataclass(eq=False)
class BlockRemoval(_Message):
    ids: list[BlockId]

    TAG = 10

    def __post_init__(self):
        self.ids = [tuple(int(v) for v in i) for i in self.ids]


@dataclass(eq=False)
class StatusRequest(_Message):
    TAG = 11


@dataclass(eq=False)
class StatusReply(_Message):
    text: str

    TAG = 12


WireMessage = (
    Hello
    | TsdfBlockPackage
    | McBlockPackage
    | CameraPose
    | RobotLinkPoses
    | BlockRequest
    | ResetRegion
    | Annotation
    | SessionEnd
    | BlockRemoval
    | StatusRequest
    | StatusReply
)

_HEADER = struct.Struct("<IBB")


# --- body encoders -----------------------------------------------------------


def _pose_bytes(pose: np.ndarray) -> bytes:
    return np.ascontiguousarray(pose, dtype="<f4").tobytes()


def _pose_from(buf: memoryview, off: int) -> tuple[np.ndarray, int]:
    if off + 48 > len(buf):
        raise ProtocolError("truncated pose")
    pose = np.frombuffer(buf, dtype="<f4", count=12, offset=off).reshape(3, 4).copy()
    return pose, off + 48


def _encode_body(msg: WireMessage) -> bytes:
    if isinstance(msg, Hello):
        name = msg.name.encode("utf-8")
        if len(name) > 255:
            raise ValueError("client name too long")
        return struct.pack("<HBB", msg.version, msg.role, len(name)) + name
    if isinstance(msg, TsdfBlockPackage):
        parts = [struct.pack("<HI", msg.block_dim, len(msg.blocks))]
        parts += [serialize_tsdf_block(b) for b in msg.blocks]
        return b"".join(parts)
    if isinstance(msg, McBlockPackage):
        parts = [struct.pack("<HI", msg.block_dim, len(msg.blocks))]
        parts += [serialize_mc_block(b) for b in msg.blocks]
        return b"".join(parts)
    if isinstance(msg, CameraPose):
        return struct.pack("<d", msg.timestamp) + _pose_bytes(msg.pose)
    if isinstance(msg, RobotLinkPoses):
        if len(msg.links) > 255:
            raise ValueError("too many links")
        parts = [struct.pack("<dB", msg.timestamp, len(msg.links))]
        for name, pose in msg.links:
            nb = name.encode("utf-8")
            if len(nb) > 255:
                raise ValueError("link name too long")
            parts.append(struct.pack("<B", len(nb)) + nb + _pose_bytes(pose))
        return b"".join(parts)
    if isinstance(msg, BlockRequest):
        has_pose = msg.view_pose is not None
        body = struct.pack("<BHB", msg.strategy, msg.count, int(has_pose))
        if has_pose:
            body += _pose_bytes(msg.view_pose)
        return body
    if isinstance(msg, ResetRegion):
        return struct.pack("<6f", *msg.lo, *msg.hi)
    if isinstance(msg, Annotation):
        return struct.pack(
            "<6fBII", *msg.lo, *msg.hi, msg.label, msg.author, msg.seq
        )
    if isinstance(msg, SessionEnd) or isinstance(msg, StatusRequest):
        return b""
    if isinstance(msg, BlockRemoval):
        parts = [struct.pack("<I", len(msg.ids))]
        parts += [struct.pack("<iii", *i) for i in msg.ids]
        return b"".join(parts)
    if isinstance(msg, StatusReply):
        text = msg.text.encode("utf-8")
        return struct.pack("<I", len(text)) + text
    raise ValueError(f"cannot encode {type(msg).__name__}")


def _need(buf, off, n, what):
    if off + n > len(buf):
        raise ProtocolError(f"truncated {what}")


def _decode_body(tag: int, body: bytes) -> WireMessage:
    buf = memoryview(body)
    try:
        if tag == Hello.TAG:
            _need(buf, 0, 4, "hello")
            version, role, nlen = struct.unpack_from("<HBB", buf)
            _need(buf, 4, nlen, "hello name")
            if len(buf) != 4 + nlen:
                raise ProtocolError("hello length mismatch")
            if role not in (Role.FUSION, Role.EXPLORATION, Role.ROBOT):
                raise ProtocolError(f"unknown role {role}")
            name = bytes(buf[4 : 4 + nlen]).decode("utf-8")
            return Hello(role=role, name=name, version=version)
        if tag in (TsdfBlockPackage.TAG, McBlockPackage.TAG):
            _need(buf, 0, 6, "package header")
            dim, count = struct.unpack_from("<HI", buf)
            if dim < 2 or dim > 64:
                raise ProtocolError(f"bad block dim {dim}")
            per = (
                serialized_tsdf_block_size(dim)
                if tag == TsdfBlockPackage.TAG
                else serialized_block_size(dim)
            )
            if len(buf) != 6 + per * count:
                raise ProtocolError("package length mismatch")
            blocks = []
            off = 6
            for _ in range(count):
                if tag == TsdfBlockPackage.TAG:
                    blocks.append(deserialize_tsdf_block(body, dim, off))
                else:
                    blocks.append(deserialize_mc_block(body, dim, off))
                off += per
            if tag == TsdfBlockPackage.TAG:
                return TsdfBlockPackage(blocks=blocks, block_dim=dim)
            return McBlockPackage(blocks=blocks, block_dim=dim)
        if tag == CameraPose.TAG:
            _need(buf, 0, 56, "camera pose")
            if len(buf) != 56:
                raise ProtocolError("camera pose length mismatch")
            (ts,) = struct.unpack_from("<d", buf)
            pose, _ = _pose_from(buf, 8)
            return CameraPose(timestamp=ts, pose=pose)
        if tag == RobotLinkPoses.TAG:
            _need(buf, 0, 9, "link poses")
            ts, count = struct.unpack_from("<dB", buf)
            off = 9
            links = []
            for _ in range(count):
                _need(buf, off, 1, "link name")
                nlen = buf[off]
                off += 1
                _need(buf, off, nlen, "link name")
                name = bytes(buf[off : off + nlen]).decode("utf-8")
                off += nlen
                pose, off = _pose_from(buf, off)
                links.append((name, pose))
            if off != len(buf):
                raise ProtocolError("link poses length mismatch")
            return RobotLinkPoses(timestamp=ts, links=links)
        if tag == BlockRequest.TAG:
            _need(buf, 0, 4, "block request")
            strategy, count, has_pose = struct.unpack_from("<BHB", buf)
            if strategy not in (0, 1, 2):
                raise ProtocolError(f"unknown strategy {strategy}")
            if count < 1:
                raise ProtocolError("request count must be >= 1")
            pose = None
            off = 4
            if has_pose == 1:
                pose, off = _pose_from(buf, off)
            elif has_pose != 0:
                raise ProtocolError("bad pose flag")
            if off != len(buf):
                raise ProtocolError("request length mismatch")
            if strategy == Strategy.VIEW_BASED and pose is None:
                raise ProtocolError("ViewBased request without pose")
            return BlockRequest(strategy=strategy, count=count, view_pose=pose)
        if tag == ResetRegion.TAG:
            if len(buf) != 24:
                raise ProtocolError("reset region length mismatch")
            vals = struct.unpack_from("<6f", buf)
            return ResetRegion(lo=vals[:3], hi=vals[3:])
        if tag == Annotation.TAG:
            if len(buf) != 33:
                raise ProtocolError("annotation length mismatch")
            *vals, label, author, seq = struct.unpack_from("<6fBII", buf)
            return Annotation(
                lo=tuple(vals[:3]), hi=tuple(vals[3:]), label=label, author=author, seq=seq
            )
        if tag == SessionEnd.TAG:
            if len(buf) != 0:
                raise ProtocolError("session end carries no body")
            return SessionEnd()
        if tag == BlockRemoval.TAG:
            _need(buf, 0, 4, "removal")
            (count,) = struct.unpack_from("<I", buf)
            if len(buf) != 4 + 12 * count:
                raise ProtocolError("removal length mismatch")
            ids = [
                struct.unpack_from("<iii", buf, 4 + 12 * i) for i in range(count)
            ]
            return BlockRemoval(ids=ids)
        if tag == StatusRequest.TAG:
            if len(buf) != 0:
                raise ProtocolError("status request carries no body")
            return StatusRequest()
        if tag == StatusReply.TAG:
            _need(buf, 0, 4, "status reply")
            (tlen,) = struct.unpack_from("<I", buf)
            if len(buf) != 4 + tlen:
                raise ProtocolError("status reply length mismatch")
            return StatusReply(text=bytes(buf[4:]).decode("utf-8"))
    except ProtocolError:
        raise
    except Exception as exc:  # struct, unicode, value errors from bad input
        raise ProtocolError(f"malformed body for tag {tag}: {exc}") from exc
    raise ProtocolError(f"unknown message tag {tag}")


# --- compression -------------------------------------------------------------


def compress_package(data: bytes) -> tuple[int, bytes]:
    """Compress when it helps; returns (codec id, payload)."""
    if len(data) >= _COMPRESS_MIN:
        packed = zlib.compress(data, 1)
        if len(packed) < len(data):
            return CODEC_ZLIB, packed
    return CODEC_RAW, data


def decompress_package(codec: int, payload: bytes) -> bytes:
    """Inverse of :func:`compress_package`; raises on corrupt input."""
    if codec == CODEC_RAW:
        return payload
    if codec == CODEC_ZLIB:
        obj = zlib.decompressobj()
        try:
            data = obj.decompress(payload, MAX_PAYLOAD + 1)
        except zlib.error as exc:
            raise ProtocolError(f"corrupt compressed payload: {exc}") from exc
        if not obj.eof or obj.unconsumed_tail:
            raise ProtocolError("corrupt compressed payload: bad stream end")
        if len(data) > MAX_PAYLOAD:
            raise ProtocolError("decompressed payload exceeds limit")
        return data
    raise ProtocolError(f"unknown codec id {codec}")


# --- framing -----------------------------------------------------------------


def encode(msg: WireMessage, compress: bool = True) -> bytes:
    """Serialize one message to a self-delimiting frame."""
    body = _encode_body(msg)
    if compress:
        codec, payload = compress_package(body)
    else:
        codec, payload = CODEC_RAW, body
    if len(payload) > MAX_PAYLOAD:
        raise ValueError(f"payload of {len(payload)} bytes exceeds 64 MiB limit")
    return _HEADER.pack(len(payload), msg.TAG, codec) + payload


def decode(frame: bytes) -> WireMessage:
    """Decode exactly one frame; rejects trailing bytes."""
    dec = StreamDecoder()
    msgs = dec.feed(frame)
    if len(msgs) != 1 or dec.pending():
        raise ProtocolError("expected exactly one frame")
    return msgs[0]


class StreamDecoder:
    """Incremental frame decoder for an ordered byte stream.

    Chunk boundaries are irrelevant: feed() buffers partial frames and
    returns every completed message, in order.  last_sizes carries the
    on-wire byte count of each returned frame (for traffic accounting).
    """

    def __init__(self):
        self._buf = bytearray()
        self.last_sizes: list[int] = []

    def pending(self) -> int:
        return len(self._buf)

    def feed(self, data: bytes) -> list[WireMessage]:
        self._buf.extend(data)
        out = []
        sizes: list[int] = []
        self.last_sizes = sizes
        while True:
            if len(self._buf) < _HEADER.size:
                return out
            length, tag, codec = _HEADER.unpack_from(self._buf)
            if length > MAX_PAYLOAD:
                raise ProtocolError(f"frame payload {length} exceeds 64 MiB limit")
            total = _HEADER.size + length
            if len(self._buf) < total:
                return out
            payload = bytes(self._buf[_HEADER.size : total])
            del self._buf[:total]
            body = decompress_package(codec, payload)
            out.append(_decode_body(tag, body))
            sizes.append(total)

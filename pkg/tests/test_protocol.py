import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from voxcast.mc_codec import McBlock
from voxcast.protocol import (
    CODEC_RAW,
    CODEC_ZLIB,
    MAX_PAYLOAD,
    Annotation,
    BlockRemoval,
    BlockRequest,
    CameraPose,
    Hello,
    Label,
    McBlockPackage,
    ProtocolError,
    ResetRegion,
    RobotLinkPoses,
    Role,
    SessionEnd,
    StatusReply,
    StatusRequest,
    Strategy,
    StreamDecoder,
    TsdfBlockPackage,
    compress_package,
    decode,
    decompress_package,
    encode,
    identity_pose,
)
from voxcast.tsdf import TsdfBlock


def random_pose(rng):
    return rng.uniform(-2, 2, (3, 4)).astype(np.float32)


def random_tsdf_block(rng, d=8) -> TsdfBlock:
    return TsdfBlock(
        id=tuple(int(v) for v in rng.integers(-100, 100, 3)),
        sdf=rng.integers(-32767, 32768, (d, d, d)).astype(np.int16),
        weight=rng.integers(0, 256, (d, d, d)).astype(np.uint8),
        color=rng.integers(0, 256, (d, d, d, 3)).astype(np.uint8),
    )


def random_mc_block(rng, d=8) -> McBlock:
    return McBlock(
        id=tuple(int(v) for v in rng.integers(-100, 100, 3)),
        revision=int(rng.integers(1, 1 << 40)),
        mc=rng.integers(0, 256, (d, d, d)).astype(np.uint8),
        offsets=rng.integers(0, 256, (d, d, d, 3)).astype(np.uint8),
        color=rng.integers(0, 256, (d, d, d, 3)).astype(np.uint8),
    )


def all_message_samples(seed=0):
    rng = np.random.default_rng(seed)
    return [
        Hello(role=Role.EXPLORATION, name="desk-explorer"),
        TsdfBlockPackage(blocks=[random_tsdf_block(rng) for _ in range(3)]),
        McBlockPackage(blocks=[random_mc_block(rng) for _ in range(2)]),
        CameraPose(timestamp=12.5, pose=random_pose(rng)),
        RobotLinkPoses(
            timestamp=3.25,
            links=[("base", random_pose(rng)), ("camera", random_pose(rng))],
        ),
        BlockRequest(strategy=Strategy.VIEW_BASED, count=512, view_pose=random_pose(rng)),
        BlockRequest(strategy=Strategy.ARBITRARY, count=64),
        ResetRegion(lo=(-1.0, -1.0, 0.0), hi=(1.0, 1.0, 2.0)),
        Annotation(lo=(0, 0, 0), hi=(1, 1, 1), label=Label.SUSPICIOUS, author=7, seq=3),
        SessionEnd(),
        BlockRemoval(ids=[(0, 0, 0), (-5, 2, 19)]),
        StatusRequest(),
        StatusReply(text="blocks_stored 42"),
    ]


@pytest.mark.parametrize("msg", all_message_samples(), ids=lambda m: type(m).__name__)
def test_round_trip_every_kind(msg):
    for compress in (False, True):
        assert decode(encode(msg, compress=compress)) == msg


def test_round_trip_unicode_names():
    msg = Hello(role=Role.ROBOT, name="奥行きロボ")
    assert decode(encode(msg)) == msg


def test_hello_frame_is_six_byte_header_plus_body():
    frame = encode(Hello(role=Role.FUSION, name=""), compress=False)
    length, tag, codec = struct.unpack_from("<IBB", frame)
    assert tag == Hello.TAG and codec == CODEC_RAW
    assert len(frame) == 6 + length


def test_mc_package_payload_size():
    rng = np.random.default_rng(5)
    blocks = [random_mc_block(rng) for _ in range(512)]
    frame = encode(McBlockPackage(blocks=blocks), compress=False)
    length, tag, codec = struct.unpack_from("<IBB", frame)
    # 6-byte package header + 512 blocks of 3604 bytes
    assert length == 6 + 512 * 3604
    assert tag == McBlockPackage.TAG


def test_unknown_tag_rejected():
    frame = struct.pack("<IBB", 0, 200, 0)
    with pytest.raises(ProtocolError):
        decode(frame)


def test_oversized_frame_rejected():
    frame = struct.pack("<IBB", MAX_PAYLOAD + 1, 8, 0)
    with pytest.raises(ProtocolError):
        StreamDecoder().feed(frame)


def test_truncated_body_rejected():
    good = encode(CameraPose(timestamp=1.0, pose=identity_pose()), compress=False)
    bad = good[:5] + good[6:]  # corrupt the length field
    with pytest.raises(ProtocolError):
        decode(bad[: len(bad) - 1])


def test_invalid_enum_values_rejected():
    body = struct.pack("<HBB", 1, 9, 0)  # role 9 does not exist
    frame = struct.pack("<IBB", len(body), Hello.TAG, 0) + body
    with pytest.raises(ProtocolError):
        decode(frame)


def test_view_request_without_pose_rejected():
    body = struct.pack("<BHB", Strategy.VIEW_BASED, 10, 0)
    frame = struct.pack("<IBB", len(body), BlockRequest.TAG, 0) + body
    with pytest.raises(ProtocolError):
        decode(frame)


def test_request_count_zero_rejected():
    with pytest.raises(ValueError):
        BlockRequest(strategy=Strategy.ARBITRARY, count=0)
    body = struct.pack("<BHB", Strategy.ARBITRARY, 0, 0)
    frame = struct.pack("<IBB", len(body), BlockRequest.TAG, 0) + body
    with pytest.raises(ProtocolError):
        decode(frame)


def test_region_min_greater_than_max_rejected():
    with pytest.raises(ValueError):
        ResetRegion(lo=(1, 0, 0), hi=(0, 1, 1))
    body = struct.pack("<6f", 1, 0, 0, 0, 1, 1)
    frame = struct.pack("<IBB", len(body), ResetRegion.TAG, 0) + body
    with pytest.raises(ProtocolError):
        decode(frame)


def test_compress_round_trip_empty():
    codec, payload = compress_package(b"")
    assert decompress_package(codec, payload) == b""


@given(st.binary(max_size=4096))
def test_compress_round_trip_arbitrary(data):
    codec, payload = compress_package(data)
    assert decompress_package(codec, payload) == data


def test_incompressible_falls_back_to_raw():
    rng = np.random.default_rng(0)
    data = rng.integers(0, 256, 5000).astype(np.uint8).tobytes()
    codec, payload = compress_package(data)
    assert codec == CODEC_RAW
    assert payload == data
    # framing overhead for raw payloads is exactly the 6-byte header
    msg = StatusReply(text="")
    raw = encode(msg, compress=False)
    assert len(raw) == 6 + len(struct.pack("<I", 0))


def test_structured_package_compresses():
    d = 8
    flat = McBlock(
        id=(0, 0, 0),
        revision=1,
        mc=np.zeros((d, d, d), np.uint8),
        offsets=np.zeros((d, d, d, 3), np.uint8),
        color=np.full((d, d, d, 3), 17, np.uint8),
    )
    msg = McBlockPackage(blocks=[flat] * 64)
    raw = encode(msg, compress=False)
    packed = encode(msg, compress=True)
    assert len(packed) < len(raw)
    assert decode(packed) == decode(raw)


def test_corrupt_zlib_payload_rejected():
    with pytest.raises(ProtocolError):
        decompress_package(CODEC_ZLIB, b"this is not zlib data")
    good = zlib.compress(b"hello world")
    with pytest.raises(ProtocolError):
        decompress_package(CODEC_ZLIB, good[:-3])


def test_unknown_codec_rejected():
    body = b""
    frame = struct.pack("<IBB", 0, SessionEnd.TAG, 9)
    with pytest.raises(ProtocolError):
        decode(frame)


@given(st.integers(1, 64), st.integers(0, 2**32 - 1))
@settings(max_examples=25)
def test_stream_chunking_invariance(chunk, seed):
    """N concatenated frames decode to N messages under any chunking."""
    msgs = all_message_samples(seed % 7)
    stream = b"".join(encode(m) for m in msgs)
    dec = StreamDecoder()
    out = []
    for i in range(0, len(stream), chunk):
        out.extend(dec.feed(stream[i : i + chunk]))
    assert len(out) == len(msgs)
    for a, b in zip(msgs, out):
        assert a == b
    assert dec.pending() == 0


def test_decoder_frame_sizes_account_every_byte():
    msgs = all_message_samples(3)
    stream = b"".join(encode(m) for m in msgs)
    dec = StreamDecoder()
    got = dec.feed(stream)
    assert len(got) == len(msgs)
    assert sum(dec.last_sizes) == len(stream)


def test_fuzz_decoder_never_crashes():
    """Mutated golden frames: decoder either parses or raises ProtocolError."""
    rng = np.random.default_rng(1234)
    frames = [encode(m) for m in all_message_samples(1)]
    survived = 0
    for trial in range(3000):
        frame = bytearray(frames[trial % len(frames)])
        for _ in range(rng.integers(1, 8)):
            frame[rng.integers(0, len(frame))] = rng.integers(0, 256)
        try:
            dec = StreamDecoder()
            dec.feed(bytes(frame))
            survived += 1
        except ProtocolError:
            pass
    assert survived >= 0  # reaching here means no crash or hang


def test_golden_frames_encode_bit_exactly():
    from golden_frames import GOLDEN_HEX, golden_messages

    msgs = golden_messages()
    assert set(msgs) == set(GOLDEN_HEX)
    for name, msg in msgs.items():
        assert encode(msg, compress=False).hex() == GOLDEN_HEX[name], name


def test_golden_frames_decode_bit_exactly():
    from golden_frames import GOLDEN_HEX, golden_messages

    msgs = golden_messages()
    for name, hexdump in GOLDEN_HEX.items():
        frame = bytes.fromhex(hexdump)
        assert decode(frame) == msgs[name], name

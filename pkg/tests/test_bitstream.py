"""Container-layer serialization and strict parsing."""

import math
import struct

import pytest
from hypothesis import given, strategies as st

from nvc.bitstream import (
    FRAME_INTER,
    FRAME_INTRA,
    FrameRecord,
    MAGIC,
    StreamHeader,
    read_bitstream,
    write_bitstream,
)
from nvc.core import DecodeError, InvalidInputError


def make_header(**kw):
    base = dict(width=64, height=48, bit_depth=8, frame_count=0,
                lambda_index=2, quality_levels=4, refresh_period=28,
                skip_enabled=True, skip_schedule=(0.1, 0.3, 0.2, 0.3))
    base.update(kw)
    return StreamHeader(**base)


headers = st.builds(
    make_header,
    width=st.integers(1, 0xFFFF),
    height=st.integers(1, 0xFFFF),
    bit_depth=st.sampled_from([8, 10]),
    frame_count=st.just(0),
    lambda_index=st.integers(0, 10),
    refresh_period=st.integers(0, 255),
    skip_enabled=st.booleans(),
    quality_levels=st.shared(st.integers(1, 6), key="lv"),
    skip_schedule=st.shared(st.integers(1, 6), key="lv").flatmap(
        lambda n: st.tuples(*[st.one_of(
            st.just(math.inf),
            st.integers(0, 0xFFFE).map(lambda q: q / 4096),
        )] * n)),
)


@given(headers)
def test_header_round_trip(header):
    parsed, frames = read_bitstream(write_bitstream(header, []))
    assert parsed == header
    assert frames == []


def test_infinity_sentinel():
    h = make_header(quality_levels=1, skip_schedule=(math.inf,))
    raw = h.pack()
    assert raw[-2:] == b"\xff\xff"
    parsed, _ = read_bitstream(raw)
    assert parsed.skip_schedule == (math.inf,)


def test_finite_beta_must_fit_below_sentinel():
    # 0xFFFF/4096 would alias the infinity sentinel
    with pytest.raises(InvalidInputError):
        make_header(quality_levels=1, skip_schedule=(0xFFFF / 4096,)).pack()
    make_header(quality_levels=1, skip_schedule=(0xFFFE / 4096,)).pack()


def test_frame_record_round_trip():
    h = make_header(frame_count=2)
    recs = [FrameRecord(FRAME_INTRA, [b"ab", b""]),
            FrameRecord(FRAME_INTER, [b"x" * 300, b"y", b"", b"q", b"w", b"e", b"r"])]
    data = write_bitstream(h, recs)
    parsed, out = read_bitstream(data)
    assert [r.frame_type for r in out] == [FRAME_INTRA, FRAME_INTER]
    assert [r.chunks for r in out] == [r.chunks for r in recs]
    assert out[1].payload_bytes == 305


def test_frame_count_mismatch_rejected():
    with pytest.raises(InvalidInputError):
        write_bitstream(make_header(frame_count=1), [])


def test_bad_magic():
    data = bytearray(make_header().pack())
    data[:4] = b"JUNK"
    with pytest.raises(DecodeError):
        read_bitstream(bytes(data))


def test_bad_version():
    data = bytearray(make_header().pack())
    data[4] = 99
    with pytest.raises(DecodeError):
        read_bitstream(bytes(data))


def test_truncation_everywhere():
    h = make_header(frame_count=1)
    data = write_bitstream(h, [FrameRecord(FRAME_INTRA, [b"abcd", b"ef"])])
    for cut in range(len(data)):
        with pytest.raises(DecodeError):
            read_bitstream(data[:cut])


def test_trailing_garbage_rejected():
    data = write_bitstream(make_header(), [])
    with pytest.raises(DecodeError, match="trailing"):
        read_bitstream(data + b"\x00")


def test_unknown_frame_type_rejected():
    h = make_header(frame_count=1)
    data = write_bitstream(h, [FrameRecord(FRAME_INTRA, [])])
    bad = bytearray(data)
    bad[-2] = 7  # frame_type byte
    with pytest.raises(DecodeError):
        read_bitstream(bytes(bad))


def test_header_validation():
    with pytest.raises(InvalidInputError):
        make_header(width=0)
    with pytest.raises(InvalidInputError):
        make_header(bit_depth=12)
    with pytest.raises(InvalidInputError):
        make_header(quality_levels=2)  # schedule still has 4 entries


def test_magic_value():
    assert MAGIC == b"EEMB"
    assert make_header().pack()[:4] == MAGIC


def test_chunk_length_field_is_u32():
    rec = FrameRecord(FRAME_INTER, [b"\x00" * 5])
    raw = rec.pack()
    assert struct.unpack(">I", raw[2:6])[0] == 5

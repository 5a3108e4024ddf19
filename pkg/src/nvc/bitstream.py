"""Container serialization: stream header plus per-frame chunk records.

Layout (all multi-byte integers big-endian, sizes in bytes):

    header:  magic "EEMB" | version u8 | width u16 | height u16 |
             bit_depth u8 | frame_count u16 | lambda_index u8 |
             quality_levels u8 | refresh_period u8 | flags u8 |
             skip_beta[quality_levels] u16   (fixed point, value*4096)
    frame:   frame_type u8 | chunk_count u8 | chunk_len[chunk_count] u32 |
             chunk payloads back to back

Readers reject bad magic, unknown versions, truncation and trailing
garbage; chunk payloads themselves are opaque at this layer.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

from .core import DecodeError, InvalidInputError

MAGIC = b"EEMB"
VERSION = 1
FLAG_SKIP_ENABLED = 0x01

FRAME_INTRA = 0
FRAME_INTER = 1

_BETA_SCALE = 4096
_HEADER = struct.Struct(">4sBHHBHBBBB")


@dataclass
class StreamHeader:
    width: int
    height: int
    bit_depth: int
    frame_count: int
    lambda_index: int
    quality_levels: int
    refresh_period: int
    skip_enabled: bool
    skip_schedule: tuple[float, ...]

    def __post_init__(self) -> None:
        if not (1 <= self.width <= 0xFFFF and 1 <= self.height <= 0xFFFF):
            raise InvalidInputError("frame size out of header range")
        if self.bit_depth not in (8, 10):
            raise InvalidInputError("bit depth must be 8 or 10")
        if not (0 <= self.frame_count <= 0xFFFF):
            raise InvalidInputError("frame count out of header range")
        if len(self.skip_schedule) != self.quality_levels:
            raise InvalidInputError("skip schedule length != quality levels")

    def pack(self) -> bytes:
        flags = FLAG_SKIP_ENABLED if self.skip_enabled else 0
        out = _HEADER.pack(MAGIC, VERSION, self.width, self.height,
                           self.bit_depth, self.frame_count, self.lambda_index,
                           self.quality_levels, self.refresh_period, flags)
        for beta in self.skip_schedule:
            # 0xFFFF is reserved as the all-skip sentinel (infinite weight).
            q = 0xFFFF if math.isinf(beta) else int(round(beta * _BETA_SCALE))
            if not math.isinf(beta) and not 0 <= q <= 0xFFFE:
                raise InvalidInputError(f"skip weight {beta} not encodable")
            out += struct.pack(">H", q)
        return out


@dataclass
class FrameRecord:
    frame_type: int
    chunks: list[bytes] = field(default_factory=list)

    def pack(self) -> bytes:
        if self.frame_type not in (FRAME_INTRA, FRAME_INTER):
            raise InvalidInputError(f"unknown frame type {self.frame_type}")
        if len(self.chunks) > 0xFF:
            raise InvalidInputError("too many chunks in one frame")
        out = struct.pack(">BB", self.frame_type, len(self.chunks))
        for chunk in self.chunks:
            out += struct.pack(">I", len(chunk))
        return out + b"".join(self.chunks)

    @property
    def payload_bytes(self) -> int:
        return sum(len(c) for c in self.chunks)


class _Cursor:
    """Bounds-checked byte reader."""

    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("bitstream truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    @property
    def exhausted(self) -> bool:
        return self.pos == len(self.data)


def write_bitstream(header: StreamHeader, frames: list[FrameRecord]) -> bytes:
    if len(frames) != header.frame_count:
        raise InvalidInputError("frame record count != header frame count")
    return header.pack() + b"".join(f.pack() for f in frames)


def read_header(cur: _Cursor) -> StreamHeader:
    raw = cur.take(_HEADER.size)
    magic, version, w, h, depth, count, lam, levels, period, flags = _HEADER.unpack(raw)
    if magic != MAGIC:
        raise DecodeError("bad stream magic")
    if version != VERSION:
        raise DecodeError(f"unsupported stream version {version}")
    if levels < 1:
        raise DecodeError("header declares zero quality levels")
    schedule = []
    for _ in range(levels):
        (q,) = struct.unpack(">H", cur.take(2))
        schedule.append(math.inf if q == 0xFFFF else q / _BETA_SCALE)
    try:
        return StreamHeader(width=w, height=h, bit_depth=depth,
                            frame_count=count, lambda_index=lam,
                            quality_levels=levels, refresh_period=period,
                            skip_enabled=bool(flags & FLAG_SKIP_ENABLED),
                            skip_schedule=tuple(schedule))
    except InvalidInputError as exc:
        raise DecodeError(f"inconsistent header: {exc}") from exc


def read_frame(cur: _Cursor) -> FrameRecord:
    frame_type, chunk_count = struct.unpack(">BB", cur.take(2))
    if frame_type not in (FRAME_INTRA, FRAME_INTER):
        raise DecodeError(f"unknown frame type byte {frame_type}")
    lengths = [struct.unpack(">I", cur.take(4))[0] for _ in range(chunk_count)]
    return FrameRecord(frame_type, [bytes(cur.take(n)) for n in lengths])


def read_bitstream(data: bytes) -> tuple[StreamHeader, list[FrameRecord]]:
    cur = _Cursor(data)
    header = read_header(cur)
    frames = [read_frame(cur) for _ in range(header.frame_count)]
    if not cur.exhausted:
        raise DecodeError(f"{len(data) - cur.pos} trailing bytes after last frame")
    return header, frames

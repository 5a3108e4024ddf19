"""Frame containers, YUV420 packing, padding, and PSNR metrics.

All neural modules in this package operate on a 6-channel half-resolution
packing of YUV420 input: the four luma polyphase components (2x2
space-to-depth) plus the two chroma planes, normalized to [0, 1].  This keeps
every plane on one uniform grid.  Feature maps carry an explicit ``scale``
divisor relative to the full luma resolution.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

PAD_MULTIPLE = 16
PSNR_CAP_DB = 999.0


class InvalidInputError(ValueError):
    """Raised when caller-provided data violates a documented precondition."""


class DecodeError(RuntimeError):
    """Raised when a bitstream is truncated, corrupt, or unsupported."""


class SegmentOrderError(RuntimeError):
    """Raised when latent segments are processed out of their decode order."""


# ---------------------------------------------------------------------------
# containers


@dataclass
class Frame:
    """One YUV420 picture. Planes are uint16 arrays even for 8-bit content."""

    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    bit_depth: int = 8

    def __post_init__(self) -> None:
        if self.bit_depth not in (8, 10):
            raise InvalidInputError(f"unsupported bit depth {self.bit_depth}")
        for name in ("y", "u", "v"):
            p = getattr(self, name)
            if not isinstance(p, np.ndarray) or p.ndim != 2:
                raise InvalidInputError(f"plane {name} must be a 2-D array")
            if p.dtype != np.uint16:
                setattr(self, name, p.astype(np.uint16))
        h, w = self.y.shape
        ch, cw = (h + 1) // 2, (w + 1) // 2
        if self.u.shape != (ch, cw) or self.v.shape != (ch, cw):
            raise InvalidInputError(
                f"chroma shape {self.u.shape} does not match luma {self.y.shape}"
            )
        if int(self.y.max(initial=0)) > self.max_value or \
           int(self.u.max(initial=0)) > self.max_value or \
           int(self.v.max(initial=0)) > self.max_value:
            raise InvalidInputError("sample exceeds bit depth range")

    @property
    def width(self) -> int:
        return self.y.shape[1]

    @property
    def height(self) -> int:
        return self.y.shape[0]

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1

    def copy(self) -> "Frame":
        return Frame(self.y.copy(), self.u.copy(), self.v.copy(), self.bit_depth)


@dataclass
class PackedFrame:
    """6 x H/2 x W/2 float tensor: 4 luma phases + U + V, in [0, 1].

    Luma phase order along the channel axis is (row, col) offsets
    (0,0), (0,1), (1,0), (1,1).
    """

    data: torch.Tensor
    bit_depth: int = 8

    def __post_init__(self) -> None:
        if self.data.ndim != 3 or self.data.shape[0] != 6:
            raise InvalidInputError("packed frame must have shape [6, H/2, W/2]")

    @property
    def height(self) -> int:
        """Full-resolution luma height."""
        return self.data.shape[1] * 2

    @property
    def width(self) -> int:
        return self.data.shape[2] * 2


@dataclass
class FeatureMap:
    """Dense feature tensor [C, h, w] with its resolution divisor."""

    data: torch.Tensor
    scale: int

    def __post_init__(self) -> None:
        if self.data.ndim != 3:
            raise InvalidInputError("feature map must have shape [C, h, w]")
        if self.scale < 1:
            raise InvalidInputError("scale divisor must be >= 1")


@dataclass
class MotionField:
    """Dense 2-channel flow (dx, dy) in pixels at the field's own scale.

    ``flow[0]`` is the horizontal displacement dx, ``flow[1]`` vertical dy.
    Warping samples the reference at (x + dx, y + dy).
    """

    flow: torch.Tensor
    scale: int

    def __post_init__(self) -> None:
        if self.flow.ndim != 3 or self.flow.shape[0] != 2:
            raise InvalidInputError("motion field must have shape [2, h, w]")
        if self.scale < 1:
            raise InvalidInputError("scale divisor must be >= 1")


# ---------------------------------------------------------------------------
# codec configuration


@dataclass
class CodecConfig:
    """Hyper-parameters shared by encoder and decoder.

    The file representation is line-oriented ``key=value`` with ``#``
    comments; sequences are comma-separated.
    """

    channels: int = 32                 # content feature width at 1/2 scale
    groups: int = 4                    # alignment groups g
    flows_per_group: int = 2           # flows per group k
    motion_latent: int = 16
    residual_latent: int = 32
    hyper_channels: int = 16
    spatial_prior_channels: int = 16
    motion_inter_channels: int = 32    # 1/4-scale motion decoder intermediate
    flow_channels: tuple[int, ...] = (16, 24, 32)
    quality_levels: int = 4
    lambda_table: tuple[float, ...] = (4096.0, 2048.0, 512.0, 256.0, 64.0)
    downsample_factor: int = 2
    downsample_margin_db: float = 3.0
    skip_schedule: tuple[float, ...] = (0.1, 0.3, 0.2, 0.3)
    skip_enabled: bool = True
    refresh_period: int = 28
    cascade_lengths: tuple[int, ...] = (6, 15, 20, 28)
    cascade_subgroup: int = 16         # max frames backpropagated jointly
    intra_latent: int = 32
    intra_hyper: int = 16
    weight_seed: int = 7               # used when no weight archive is given

    def __post_init__(self) -> None:
        if self.channels % self.groups != 0:
            raise InvalidInputError("channels must be divisible by groups")
        if len(self.skip_schedule) != self.quality_levels:
            raise InvalidInputError("skip schedule needs one entry per quality level")
        if self.quality_levels < 1:
            raise InvalidInputError("quality_levels must be >= 1")

    def lam(self, lambda_index: int) -> float:
        if not 0 <= lambda_index < len(self.lambda_table):
            raise InvalidInputError(f"lambda index {lambda_index} out of range")
        return self.lambda_table[lambda_index]

    def to_file(self, path: str | Path) -> None:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={v}")
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def from_file(cls, path: str | Path) -> "CodecConfig":
        kv: dict[str, str] = {}
        for raw in Path(path).read_text().splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInputError(f"bad config line: {raw!r}")
            key, val = line.split("=", 1)
            kv[key.strip()] = val.strip()
        return cls.from_dict(kv)

    @classmethod
    def from_dict(cls, kv: dict[str, str]) -> "CodecConfig":
        known = {f.name: f for f in dataclasses.fields(cls)}
        args: dict[str, object] = {}
        for key, val in kv.items():
            if key not in known:
                raise InvalidInputError(f"unknown config key {key!r}")
            args[key] = _parse_config_value(known[key].type, val)
        return cls(**args)  # type: ignore[arg-type]


def _parse_config_value(ftype: str | type, text: str):
    name = ftype if isinstance(ftype, str) else ftype.__name__
    if name == "int":
        return int(text)
    if name == "float":
        return float(text)
    if name == "bool":
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise InvalidInputError(f"bad boolean {text!r}")
    # remaining fields are numeric tuples
    items = [t for t in text.split(",") if t.strip()]
    if "float" in str(name):
        return tuple(float(t) for t in items)
    return tuple(int(t) for t in items)


# ---------------------------------------------------------------------------
# padding


def pad_frame(frame: Frame, multiple: int = PAD_MULTIPLE) -> Frame:
    """Pad to a luma-size multiple of ``multiple`` by edge replication
    (right and bottom). Chroma is padded to exactly half the padded luma."""

    h, w = frame.y.shape
    ph = -(-h // multiple) * multiple
    pw = -(-w // multiple) * multiple
    y = np.pad(frame.y, ((0, ph - h), (0, pw - w)), mode="edge")
    ch, cw = frame.u.shape
    u = np.pad(frame.u, ((0, ph // 2 - ch), (0, pw // 2 - cw)), mode="edge")
    v = np.pad(frame.v, ((0, ph // 2 - ch), (0, pw // 2 - cw)), mode="edge")
    return Frame(y, u, v, frame.bit_depth)


def crop_frame(frame: Frame, width: int, height: int) -> Frame:
    """Inverse of :func:`pad_frame`: keep the top-left ``height x width``."""

    if width > frame.width or height > frame.height:
        raise InvalidInputError("crop size exceeds frame size")
    y = frame.y[:height, :width]
    u = frame.u[: (height + 1) // 2, : (width + 1) // 2]
    v = frame.v[: (height + 1) // 2, : (width + 1) // 2]
    return Frame(y.copy(), u.copy(), v.copy(), frame.bit_depth)


# ---------------------------------------------------------------------------
# packing


def pack_yuv420(frame: Frame) -> PackedFrame:
    """Space-to-depth the luma and stack chroma, normalized to [0, 1].

    Requires even frame dimensions (pad first).  The inverse is
    :func:`unpack_yuv420`; the round trip is bit exact.
    """

    h, w = frame.y.shape
    if h % 2 or w % 2:
        raise InvalidInputError("pack_yuv420 requires even dimensions")
    maxv = float(frame.max_value)
    y = frame.y.astype(np.float32)
    phases = [y[0::2, 0::2], y[0::2, 1::2], y[1::2, 0::2], y[1::2, 1::2]]
    planes = phases + [frame.u.astype(np.float32), frame.v.astype(np.float32)]
    data = torch.from_numpy(np.stack(planes, axis=0) / maxv)
    return PackedFrame(data, frame.bit_depth)


def unpack_yuv420(packed: PackedFrame) -> Frame:
    """Invert :func:`pack_yuv420`, clamping and rounding to the bit depth."""

    maxv = (1 << packed.bit_depth) - 1
    arr = packed.data.detach().cpu().numpy().astype(np.float64) * maxv
    arr = np.clip(np.rint(arr), 0, maxv).astype(np.uint16)
    hh, hw = arr.shape[1], arr.shape[2]
    y = np.empty((hh * 2, hw * 2), dtype=np.uint16)
    y[0::2, 0::2] = arr[0]
    y[0::2, 1::2] = arr[1]
    y[1::2, 0::2] = arr[2]
    y[1::2, 1::2] = arr[3]
    return Frame(y, arr[4], arr[5], packed.bit_depth)


def packed_to_tensor(frame: Frame) -> torch.Tensor:
    """Pad + pack + add a batch axis: the network-facing view of a frame."""

    return pack_yuv420(pad_frame(frame)).data.unsqueeze(0)


# ---------------------------------------------------------------------------
# metrics


def plane_psnr(a: np.ndarray, b: np.ndarray, max_value: int) -> float:
    """PSNR between two integer planes; identical planes give the capped
    sentinel value (999 dB)."""

    if a.shape != b.shape:
        raise InvalidInputError("psnr requires equal plane shapes")
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(max_value * max_value / mse))


def compound_psnr(psnr_y: float, psnr_u: float, psnr_v: float) -> float:
    """Standard 6:1:1 weighted YUV PSNR."""

    return (6.0 * psnr_y + psnr_u + psnr_v) / 8.0


def frame_psnr(ref: Frame, test: Frame) -> tuple[float, float, float, float]:
    """Per-plane PSNR plus the 6:1:1 compound, computed on the uncropped
    common region (callers should crop padding away first)."""

    if ref.bit_depth != test.bit_depth:
        raise InvalidInputError("bit depth mismatch")
    py = plane_psnr(ref.y, test.y, ref.max_value)
    pu = plane_psnr(ref.u, test.u, ref.max_value)
    pv = plane_psnr(ref.v, test.v, ref.max_value)
    return py, pu, pv, compound_psnr(py, pu, pv)


# ---------------------------------------------------------------------------
# raw YUV I/O (planar, frame-sequential; 10-bit is little-endian u16)


def frame_byte_size(width: int, height: int, bit_depth: int) -> int:
    samples = width * height + 2 * (((width + 1) // 2) * ((height + 1) // 2))
    return samples * (1 if bit_depth == 8 else 2)


def read_yuv(path: str | Path, width: int, height: int, bit_depth: int = 8,
             count: int | None = None) -> list[Frame]:
    data = Path(path).read_bytes()
    fsize = frame_byte_size(width, height, bit_depth)
    total = len(data) // fsize
    if count is None:
        count = total
    if count > total:
        raise InvalidInputError(f"file holds {total} frames, asked for {count}")
    dtype = np.dtype(np.uint8) if bit_depth == 8 else np.dtype("<u2")
    cw, ch = (width + 1) // 2, (height + 1) // 2
    frames = []
    for i in range(count):
        raw = np.frombuffer(data, dtype=dtype, count=fsize // dtype.itemsize,
                            offset=i * fsize)
        ysz, csz = width * height, cw * ch
        y = raw[:ysz].reshape(height, width).astype(np.uint16)
        u = raw[ysz:ysz + csz].reshape(ch, cw).astype(np.uint16)
        v = raw[ysz + csz:ysz + 2 * csz].reshape(ch, cw).astype(np.uint16)
        frames.append(Frame(y, u, v, bit_depth))
    return frames


def write_yuv(path: str | Path, frames: Iterable[Frame]) -> None:
    with open(path, "wb") as fh:
        for fr in frames:
            dtype = np.uint8 if fr.bit_depth == 8 else np.dtype("<u2")
            for plane in (fr.y, fr.u, fr.v):
                fh.write(plane.astype(dtype).tobytes())

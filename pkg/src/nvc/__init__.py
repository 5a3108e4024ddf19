"""Conditional learned video codec for YUV420 sequences, desk scale."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    CodecConfig,
    DecodeError,
    Frame,
    FeatureMap,
    InvalidInputError,
    MotionField,
    PackedFrame,
    SegmentOrderError,
    compound_psnr,
    crop_frame,
    frame_psnr,
    pack_yuv420,
    pad_frame,
    plane_psnr,
    read_yuv,
    unpack_yuv420,
    write_yuv,
)

"""Sequence and frame coding loops.

There is exactly one decode path.  The encoder serializes each frame and
then feeds the serialized record through that decode path to refresh its
own temporal buffer, so encoder-side and decoder-side reconstructions are
bit-identical by construction — any coding bug shows up immediately as a
decoder failure during encoding, not as silent drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import torch

from .bitstream import (
    FRAME_INTER,
    FRAME_INTRA,
    FrameRecord,
    StreamHeader,
    read_bitstream,
    write_bitstream,
)
from .context import scale_flow
from .core import (
    PAD_MULTIPLE,
    CodecConfig,
    DecodeError,
    Frame,
    InvalidInputError,
    PackedFrame,
    crop_frame,
    frame_psnr,
    pack_yuv420,
    pad_frame,
    unpack_yuv420,
)
from .detmath import SIGMA_TABLE
from .entropy import (
    CheckerboardTracker,
    GaussianParams,
    checkerboard_mask,
    compute_skip_threshold,
)
from .model import DecodedBuffer, VideoModel
from .motion import select_estimation_resolution
from .quality import quality_index, should_refresh
from .rangecoder import (
    RangeDecoder,
    RangeEncoder,
    gaussian_decode,
    gaussian_encode,
    snap_gaussian,
)

INTRA_CHUNKS = 2          # [hyper, latent]
INTER_CHUNKS = 7          # [motion hyper, motion, residual hyper, 4 segments]


@dataclass
class FrameStats:
    """Per-frame accounting; PSNR fields are NaN on the pure decode side."""

    index: int
    frame_type: str
    quality_level: int
    byte_size: int
    bits_hyper: int
    bits_motion: int
    bits_residual: int
    skipped_fraction: float
    psnr: float = math.nan
    psnr_y: float = math.nan
    psnr_u: float = math.nan
    psnr_v: float = math.nan
    used_downsampled_estimation: bool = False


@dataclass
class CodingContext:
    """Mutable per-stream state threaded through the frame loop."""

    model: VideoModel
    header: StreamHeader
    frame_index: int = 0
    buffer: DecodedBuffer | None = None
    prev_recon_packed: torch.Tensor | None = None
    prev_original: Frame | None = None   # encoder side only

    @property
    def cfg(self) -> CodecConfig:
        return self.model.cfg

    @property
    def padded_size(self) -> tuple[int, int]:
        m = PAD_MULTIPLE
        return (-(-self.header.height // m) * m, -(-self.header.width // m) * m)


def _ceil_half(n: int) -> int:
    return (n + 1) // 2


def _hyper_size(lh: int, lw: int) -> tuple[int, int]:
    """Spatial size of the hyper latent for a given latent grid."""

    return _ceil_half(_ceil_half(lh)), _ceil_half(_ceil_half(lw))


def _as_f64(t: torch.Tensor) -> np.ndarray:
    return t.detach().contiguous().numpy().astype(np.float64)


def _round_int(t: torch.Tensor) -> np.ndarray:
    return np.rint(_as_f64(t)).astype(np.int64)


def _snap_params(params: GaussianParams) -> tuple[np.ndarray, np.ndarray]:
    """Snap (mu, sigma) onto the coding grids, in step units when present."""

    if params.step is not None:
        mu = params.mu / params.step
        sigma = params.sigma / params.step
    else:
        mu, sigma = params.mu, params.sigma
    return snap_gaussian(_as_f64(mu), _as_f64(sigma))


def _code_factorized(latent_int: np.ndarray, factorized) -> bytes:
    c, h, w = latent_int.shape
    mu, sigma = factorized.coding_params(torch.Size((1, c, h, w)))
    ms, si = snap_gaussian(_as_f64(mu[0]), _as_f64(sigma[0]))
    enc = RangeEncoder()
    gaussian_encode(enc, latent_int.ravel(), ms.ravel(), si.ravel())
    return enc.finish()


def _decode_factorized(data: bytes, factorized,
                       shape: tuple[int, int, int]) -> np.ndarray:
    c, h, w = shape
    mu, sigma = factorized.coding_params(torch.Size((1, c, h, w)))
    ms, si = snap_gaussian(_as_f64(mu[0]), _as_f64(sigma[0]))
    dec = RangeDecoder(data)
    return gaussian_decode(dec, ms.ravel(), si.ravel()).reshape(shape)


def _to_latent_tensor(latent_int: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(latent_int.astype(np.float32)).unsqueeze(0)


def _skip_threshold(header: StreamHeader, t: int) -> float:
    if not header.skip_enabled:
        return 0.0
    beta = header.skip_schedule[t % header.quality_levels]
    return compute_skip_threshold(t, max(header.frame_count, 1), beta)


# ---------------------------------------------------------------------------
# intra frame


def _encode_intra(model: VideoModel, padded: Frame) -> list[bytes]:
    packed = pack_yuv420(padded).data.unsqueeze(0)
    y = model.intra.enc(packed)
    z = model.intra.hyper_enc(y)
    z_int = _round_int(z[0])
    chunk_z = _code_factorized(z_int, model.intra.factorized)
    mu, sigma = model.intra.params(_to_latent_tensor(z_int), (y.shape[2], y.shape[3]))
    ms, si = _snap_params(GaussianParams(mu=mu[0], sigma=sigma[0]))
    symbols = _round_int(y[0])
    enc = RangeEncoder()
    gaussian_encode(enc, symbols.ravel(), ms.ravel(), si.ravel())
    return [chunk_z, enc.finish()]


def _decode_intra(model: VideoModel, chunks: list[bytes],
                  padded_size: tuple[int, int], bit_depth: int,
                  ) -> tuple[torch.Tensor, Frame, dict]:
    ph, pw = padded_size
    lh, lw = ph // 16, pw // 16
    il = model.cfg.intra_latent
    zc = model.cfg.intra_hyper
    z_int = _decode_factorized(chunks[0], model.intra.factorized,
                               (zc, *_hyper_size(lh, lw)))
    mu, sigma = model.intra.params(_to_latent_tensor(z_int), (lh, lw))
    ms, si = _snap_params(GaussianParams(mu=mu[0], sigma=sigma[0]))
    symbols = gaussian_decode(RangeDecoder(chunks[1]), ms.ravel(), si.ravel())
    y_hat = _to_latent_tensor(symbols.reshape(il, lh, lw))
    packed_out = model.intra.dec(y_hat)
    frame = unpack_yuv420(PackedFrame(packed_out[0], bit_depth))
    packed_q = pack_yuv420(frame).data.unsqueeze(0)
    detail = {
        "bits_hyper": 8 * len(chunks[0]),
        "bits_motion": 0,
        "bits_residual": 8 * len(chunks[1]),
        "skipped_fraction": 0.0,
    }
    return packed_q, frame, detail


# ---------------------------------------------------------------------------
# inter frame


def _motion_analysis(model: VideoModel, padded: Frame, prev_original: Frame,
                     cur_packed: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, bool]:
    """Flow between originals -> (motion feature, current feature, down flag)."""

    cfg = model.cfg
    est_cur, est_ref, used_down = select_estimation_resolution(
        padded, prev_original, cfg)
    flow = model.flow_net(est_cur.data.unsqueeze(0), est_ref.data.unsqueeze(0))
    if used_down:
        flow = scale_flow(flow, float(cfg.downsample_factor))
    motion_feat = model.motion_feat_transform(flow)
    cur_feat = model.feature_extractor(cur_packed)
    return motion_feat, cur_feat, used_down


def _encode_inter(model: VideoModel, header: StreamHeader, padded: Frame,
                  buffer: DecodedBuffer, prev_original: Frame, t: int,
                  ) -> tuple[list[bytes], bool]:
    cfg = model.cfg
    bank = model.scale_bank
    r = quality_index(t, header.quality_levels)
    cur_packed = pack_yuv420(padded).data.unsqueeze(0)

    motion_feat, cur_feat, used_down = _motion_analysis(
        model, padded, prev_original, cur_packed)
    ref_half, ref_quarter = model.multiscale(buffer.ref_feature)
    aligned = model.miner.align_half(ref_half, motion_feat)
    m = model.motion_encoder(motion_feat, cur_feat, ref_half, aligned,
                             buffer.motion_state)
    m_s = bank.apply("motion_enc_latent", m, r)
    mp = bank.apply("motion_temporal_prior", buffer.motion_prior, r)
    rp = bank.apply("residual_temporal_prior", buffer.residual_prior, r)

    z_m = model.motion_entropy.hyper(m_s, mp, rp)
    z_m_int = _round_int(z_m[0])
    chunk_zm = _code_factorized(z_m_int, model.motion_entropy.factorized)
    params = model.motion_entropy.params(_to_latent_tensor(z_m_int), mp, rp)
    ms, si = _snap_params(params)
    symbols = _round_int((m_s / params.step)[0])
    enc = RangeEncoder()
    gaussian_encode(enc, symbols.ravel(), ms.ravel(), si.ravel())
    chunk_m = enc.finish()
    m_hat = _to_latent_tensor(symbols) * params.step

    dec = model.motion_decoder(bank.apply("motion_dec_latent", m_hat, r))
    ctx_half, ctx_quarter = model.miner(ref_half, ref_quarter, dec.motion_feat,
                                        dec.conf_half, dec.conf_quarter)
    y = model.residual_encoder(cur_feat, ctx_half, ctx_quarter)
    y_s = bank.apply("residual_enc_latent", y, r)
    sp = bank.apply("residual_spatial_prior", model.spatial_prior(ctx_quarter), r)

    z_y = model.residual_entropy.hyper(y_s, rp, sp)
    z_y_int = _round_int(z_y[0])
    chunk_zy = _code_factorized(z_y_int, model.residual_entropy.factorized)
    lh, lw = y_s.shape[2], y_s.shape[3]
    hyper_feat = model.residual_entropy.hyper_features(
        _to_latent_tensor(z_y_int), (lh, lw))

    eta = _skip_threshold(header, t)
    y_hat = torch.zeros_like(y_s)
    seg_chunks = []
    for seg in range(4):
        p = model.residual_entropy.segment_params(seg, hyper_feat, rp, sp, y_hat)
        pm = checkerboard_mask(lh, lw, seg)
        ms_s, si_s = snap_gaussian(_as_f64(p.mu[0][:, pm]), _as_f64(p.sigma[0][:, pm]))
        symbols = np.rint(_as_f64(y_s[0][:, pm])).astype(np.int64)
        skip = SIGMA_TABLE[si_s] < eta
        if skip.all():
            # Nothing coded: the segment chunk is empty by convention so a
            # fully skipped frame carries no residual payload at all.
            seg_chunks.append(b"")
        else:
            enc = RangeEncoder()
            gaussian_encode(enc, symbols[~skip], ms_s[~skip], si_s[~skip])
            seg_chunks.append(enc.finish())
        mean_q = (ms_s.astype(np.float64) / 64.0).astype(np.float32)
        recon = np.where(skip, mean_q, symbols.astype(np.float32))
        y_hat[0][:, pm] = torch.from_numpy(recon)
    return [chunk_zm, chunk_m, chunk_zy, *seg_chunks], used_down


def _decode_inter(model: VideoModel, header: StreamHeader, chunks: list[bytes],
                  buffer: DecodedBuffer, t: int, padded_size: tuple[int, int],
                  ) -> tuple[torch.Tensor, Frame, DecodedBuffer, dict]:
    cfg = model.cfg
    bank = model.scale_bank
    r = quality_index(t, header.quality_levels)
    ph, pw = padded_size
    lh, lw = ph // 16, pw // 16

    ref_half, ref_quarter = model.multiscale(buffer.ref_feature)
    mp = bank.apply("motion_temporal_prior", buffer.motion_prior, r)
    rp = bank.apply("residual_temporal_prior", buffer.residual_prior, r)

    z_m_int = _decode_factorized(chunks[0], model.motion_entropy.factorized,
                                 (cfg.hyper_channels, *_hyper_size(lh, lw)))
    params = model.motion_entropy.params(_to_latent_tensor(z_m_int), mp, rp)
    ms, si = _snap_params(params)
    symbols = gaussian_decode(RangeDecoder(chunks[1]), ms.ravel(), si.ravel())
    m_hat = _to_latent_tensor(symbols.reshape(cfg.motion_latent, lh, lw)) * params.step

    dec = model.motion_decoder(bank.apply("motion_dec_latent", m_hat, r))
    ctx_half, ctx_quarter = model.miner(ref_half, ref_quarter, dec.motion_feat,
                                        dec.conf_half, dec.conf_quarter)
    sp = bank.apply("residual_spatial_prior", model.spatial_prior(ctx_quarter), r)

    z_y_int = _decode_factorized(chunks[2], model.residual_entropy.factorized,
                                 (cfg.hyper_channels, *_hyper_size(lh, lw)))
    hyper_feat = model.residual_entropy.hyper_features(
        _to_latent_tensor(z_y_int), (lh, lw))

    eta = _skip_threshold(header, t)
    y_hat = torch.zeros(1, cfg.residual_latent, lh, lw)
    tracker = CheckerboardTracker()
    skipped = 0
    total = 0
    for seg in range(4):
        tracker.advance(seg)
        p = model.residual_entropy.segment_params(seg, hyper_feat, rp, sp, y_hat)
        pm = checkerboard_mask(lh, lw, seg)
        ms_s, si_s = snap_gaussian(_as_f64(p.mu[0][:, pm]), _as_f64(p.sigma[0][:, pm]))
        skip = SIGMA_TABLE[si_s] < eta
        symbols = np.zeros(ms_s.shape, dtype=np.float32)
        if skip.all():
            if chunks[3 + seg]:
                raise DecodeError("unexpected payload in a fully skipped segment")
        else:
            coded = gaussian_decode(RangeDecoder(chunks[3 + seg]),
                                    ms_s[~skip], si_s[~skip])
            symbols[~skip] = coded.astype(np.float32)
        mean_q = (ms_s.astype(np.float64) / 64.0).astype(np.float32)
        recon = np.where(skip, mean_q, symbols)
        y_hat[0][:, pm] = torch.from_numpy(recon)
        skipped += int(skip.sum())
        total += int(skip.size)

    rdec = model.residual_decoder(bank.apply("residual_dec_latent", y_hat, r),
                                  ctx_quarter)
    out_feat, packed_out = model.generator(rdec.feat, rdec.gate, ctx_half)
    frame = unpack_yuv420(PackedFrame(packed_out[0], header.bit_depth))
    packed_q = pack_yuv420(frame).data.unsqueeze(0)
    new_buffer = DecodedBuffer(ref_feature=out_feat, motion_state=dec.inter,
                               motion_prior=m_hat, residual_prior=y_hat)
    detail = {
        "bits_hyper": 8 * (len(chunks[0]) + len(chunks[2])),
        "bits_motion": 8 * len(chunks[1]),
        "bits_residual": 8 * sum(len(c) for c in chunks[3:]),
        "skipped_fraction": skipped / total if total else 0.0,
    }
    return packed_q, frame, new_buffer, detail


# ---------------------------------------------------------------------------
# frame-level API (the decode path below is the single normative one)


def decode_frame(record: FrameRecord, ctx: CodingContext) -> tuple[Frame, FrameStats]:
    header = ctx.header
    t = ctx.frame_index
    with torch.no_grad():
        if record.frame_type == FRAME_INTRA:
            if t != 0:
                raise DecodeError("intra record inside the inter sequence")
            if len(record.chunks) != INTRA_CHUNKS:
                raise DecodeError("intra record chunk count mismatch")
            packed_q, frame, detail = _decode_intra(
                ctx.model, record.chunks, ctx.padded_size, header.bit_depth)
            ctx.buffer = DecodedBuffer.from_reconstruction(
                ctx.cfg, packed_q, ctx.model.adaptor_intra)
            frame_type = "I"
        else:
            if len(record.chunks) != INTER_CHUNKS:
                raise DecodeError("inter record chunk count mismatch")
            # A refresh point rebuilds the buffer from the previous
            # reconstruction alone, so a decoder may join the stream here
            # with no history beyond that one frame.
            if (t >= 1 and should_refresh(t, header.refresh_period)
                    and ctx.prev_recon_packed is not None):
                ctx.buffer = DecodedBuffer.from_reconstruction(
                    ctx.cfg, ctx.prev_recon_packed, ctx.model.adaptor_refresh)
            if ctx.buffer is None:
                raise DecodeError("inter frame before any intra frame")
            packed_q, frame, new_buffer, detail = _decode_inter(
                ctx.model, header, record.chunks, ctx.buffer, t, ctx.padded_size)
            ctx.buffer = new_buffer
            frame_type = "P"
        ctx.prev_recon_packed = packed_q
        ctx.frame_index = t + 1
    stats = FrameStats(index=t, frame_type=frame_type,
                       quality_level=quality_index(t, header.quality_levels),
                       byte_size=len(record.pack()), **detail)
    return crop_frame(frame, header.width, header.height), stats


def encode_frame(frame: Frame, ctx: CodingContext
                 ) -> tuple[FrameRecord, Frame, FrameStats]:
    """Serialize one frame and run it through the decode path.

    Returns the record, the decoder-side reconstruction, and stats with
    PSNR against the input filled in.
    """

    header = ctx.header
    if (frame.width, frame.height) != (header.width, header.height):
        raise InvalidInputError("frame size does not match stream header")
    if frame.bit_depth != header.bit_depth:
        raise InvalidInputError("frame bit depth does not match stream header")
    padded = pad_frame(frame)
    t = ctx.frame_index
    used_down = False
    with torch.no_grad():
        if t == 0:
            record = FrameRecord(FRAME_INTRA, _encode_intra(ctx.model, padded))
        else:
            buffer = ctx.buffer
            if should_refresh(t, header.refresh_period):
                buffer = DecodedBuffer.from_reconstruction(
                    ctx.cfg, ctx.prev_recon_packed, ctx.model.adaptor_refresh)
            chunks, used_down = _encode_inter(ctx.model, header, padded,
                                              buffer, ctx.prev_original, t)
            record = FrameRecord(FRAME_INTER, chunks)
    recon, stats = decode_frame(record, ctx)
    ctx.prev_original = padded
    py, pu, pv, compound = frame_psnr(frame, recon)
    stats = replace(stats, psnr=compound, psnr_y=py, psnr_u=pu, psnr_v=pv,
                    used_downsampled_estimation=used_down)
    return record, recon, stats


# ---------------------------------------------------------------------------
# sequence-level API


def make_header(cfg: CodecConfig, width: int, height: int, bit_depth: int,
                frame_count: int, lambda_index: int, *,
                skip_enabled: bool | None = None,
                refresh_period: int | None = None) -> StreamHeader:
    if not 0 <= lambda_index < len(cfg.lambda_table):
        raise InvalidInputError(f"lambda index {lambda_index} out of table")
    return StreamHeader(
        width=width, height=height, bit_depth=bit_depth,
        frame_count=frame_count, lambda_index=lambda_index,
        quality_levels=cfg.quality_levels,
        refresh_period=cfg.refresh_period if refresh_period is None else refresh_period,
        skip_enabled=cfg.skip_enabled if skip_enabled is None else skip_enabled,
        skip_schedule=tuple(cfg.skip_schedule),
    )


def encode_sequence(model: VideoModel, frames: list[Frame], lambda_index: int,
                    *, skip_enabled: bool | None = None,
                    refresh_period: int | None = None,
                    size: tuple[int, int] = (16, 16),
                    ) -> tuple[bytes, list[FrameStats]]:
    """Encode a low-delay sequence (first frame intra, rest inter)."""

    if frames:
        size = (frames[0].width, frames[0].height)
        depth = frames[0].bit_depth
        for f in frames[1:]:
            if (f.width, f.height, f.bit_depth) != (*size, depth):
                raise InvalidInputError("all frames must share size and depth")
    else:
        depth = 8
    header = make_header(model.cfg, size[0], size[1], depth, len(frames),
                         lambda_index, skip_enabled=skip_enabled,
                         refresh_period=refresh_period)
    ctx = CodingContext(model, header)
    records = []
    stats = []
    for frame in frames:
        record, _, st = encode_frame(frame, ctx)
        records.append(record)
        stats.append(st)
    return write_bitstream(header, records), stats


def decode_sequence(model: VideoModel, data: bytes
                    ) -> tuple[list[Frame], StreamHeader, list[FrameStats]]:
    header, records = read_bitstream(data)
    if header.quality_levels != model.cfg.quality_levels:
        raise DecodeError("stream quality levels do not match the model")
    ctx = CodingContext(model, header)
    frames = []
    stats = []
    for record in records:
        frame, st = decode_frame(record, ctx)
        frames.append(frame)
        stats.append(st)
    return frames, header, stats

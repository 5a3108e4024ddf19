"""Structural complexity accounting in multiply-accumulates per pixel.

Counting rules (the usual convention for codec complexity tables):

* convolution: ``Cin/groups * Cout * kh * kw`` MACs per output position,
  independent of padding or border handling;
* bilinear warps: 4 MACs per sampled element (one per tap);
* nonlinearities, pixel shuffles, additions and normalization are free.

The pixel basis is padded full-resolution luma pixels, so a stride-2
operator on the half-scale packed grid contributes at 1/16 of its
per-position cost.  Counts depend only on the architecture, never on
weight values.  The encoder total includes the full decode path, because
the encoder runs it to maintain its reference buffer; the intra codec is
reported separately since it runs once per sequence, not per frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .core import CodecConfig, PAD_MULTIPLE
from .model import VideoModel, build_model

ENCODER_CAP = 300_000.0
DECODER_CAP = 200_000.0


def conv_macs(cin: int, cout: int, kernel: tuple[int, int],
              out_positions: int, groups: int = 1) -> int:
    """MACs of one convolution forward over ``out_positions`` outputs."""

    return (cin // groups) * cout * kernel[0] * kernel[1] * out_positions


def warp_macs(channels: int, positions: int) -> int:
    """Bilinear warp cost: four taps per sampled element."""

    return 4 * channels * positions


class _ConvCounter:
    def __init__(self) -> None:
        self.macs = 0

    def __call__(self, mod: nn.Conv2d, inputs, output) -> None:
        self.macs += conv_macs(mod.in_channels, mod.out_channels,
                               mod.kernel_size,
                               output.shape[0] * output.shape[-2] * output.shape[-1],
                               mod.groups)


def traced_macs(module: nn.Module, run) -> int:
    """Total conv MACs of one forward described by the ``run`` thunk."""

    counter = _ConvCounter()
    handles = [m.register_forward_hook(counter)
               for m in module.modules() if isinstance(m, nn.Conv2d)]
    try:
        with torch.no_grad():
            run()
    finally:
        for h in handles:
            h.remove()
    return counter.macs


@dataclass
class MacReport:
    rows: dict[str, float]            # MAC per padded luma pixel
    encoder_only: tuple[str, ...]
    decoder_rows: tuple[str, ...]
    intra_rows: tuple[str, ...]

    @property
    def decoder_total(self) -> float:
        return sum(self.rows[name] for name in self.decoder_rows)

    @property
    def encoder_total(self) -> float:
        return self.decoder_total + sum(self.rows[n] for n in self.encoder_only)

    @property
    def intra_total(self) -> float:
        return sum(self.rows[name] for name in self.intra_rows)

    def format_table(self) -> str:
        width = max(len(n) for n in self.rows) + 2
        lines = [f"{'module':<{width}}  kMAC/pixel  side"]
        for name, macs in self.rows.items():
            side = ("enc" if name in self.encoder_only else
                    "intra" if name in self.intra_rows else "enc+dec")
            lines.append(f"{name:<{width}}  {macs / 1000.0:10.2f}  {side}")
        lines.append(f"{'inter encoder total':<{width}}  "
                     f"{self.encoder_total / 1000.0:10.2f}")
        lines.append(f"{'inter decoder total':<{width}}  "
                     f"{self.decoder_total / 1000.0:10.2f}")
        lines.append(f"{'intra total':<{width}}  "
                     f"{self.intra_total / 1000.0:10.2f}")
        return "\n".join(lines)


def count_macs(cfg: CodecConfig | None = None, height: int = 128,
               width: int = 128, model: VideoModel | None = None) -> MacReport:
    cfg = cfg or (model.cfg if model is not None else CodecConfig())
    if model is None:
        model = build_model(cfg)
    m = PAD_MULTIPLE
    ph, pw = -(-height // m) * m, -(-width // m) * m
    basis = float(ph * pw)

    c = cfg.channels
    hh, hw = ph // 2, pw // 2
    qh, qw = ph // 4, pw // 4
    lh, lw = ph // 16, pw // 16

    packed = torch.zeros(1, 6, hh, hw)
    flow = torch.zeros(1, 2, ph, pw)
    motion_feat = torch.zeros(1, 2 * cfg.groups * cfg.flows_per_group, hh, hw)
    feat = torch.zeros(1, c, hh, hw)
    ref_quarter = torch.zeros(1, c, qh, qw)
    conf_half = torch.zeros(1, c, hh, hw)
    conf_quarter = torch.zeros(1, c, qh, qw)
    motion_state = torch.zeros(1, cfg.motion_inter_channels, qh, qw)
    m_latent = torch.zeros(1, cfg.motion_latent, lh, lw)
    y_latent = torch.zeros(1, cfg.residual_latent, lh, lw)
    sp = torch.zeros(1, cfg.spatial_prior_channels, lh, lw)

    rows: dict[str, float] = {}

    def add(name: str, macs: int) -> None:
        rows[name] = macs / basis

    # --- encoder-only analysis ------------------------------------------
    flow_warps = sum(
        warp_macs(ch, (hh >> lvl) * (hw >> lvl))
        for lvl, ch in enumerate(cfg.flow_channels))
    add("motion estimation",
        traced_macs(model.flow_net, lambda: model.flow_net(packed, packed))
        + flow_warps)
    add("motion feature transform",
        traced_macs(model.motion_feat_transform,
                    lambda: model.motion_feat_transform(flow)))
    add("feature extraction",
        traced_macs(model.feature_extractor,
                    lambda: model.feature_extractor(packed)))
    align_warp = warp_macs(cfg.flows_per_group * c, hh * hw)
    add("alignment for analysis",
        traced_macs(model.miner.align_half,
                    lambda: model.miner.align_half(feat, motion_feat))
        + align_warp)
    add("motion encoder",
        traced_macs(model.motion_encoder,
                    lambda: model.motion_encoder(motion_feat, feat, feat,
                                                 feat, motion_state)))
    add("motion hyper encoder",
        traced_macs(model.motion_entropy.hyper_enc,
                    lambda: model.motion_entropy.hyper(m_latent, m_latent,
                                                       y_latent)))
    add("residual encoder",
        traced_macs(model.residual_encoder,
                    lambda: model.residual_encoder(feat, feat, ref_quarter)))
    add("residual hyper encoder",
        traced_macs(model.residual_entropy.hyper_enc,
                    lambda: model.residual_entropy.hyper(y_latent, y_latent, sp)))

    # --- shared decode path ---------------------------------------------
    z_m = model.motion_entropy.hyper(m_latent, m_latent, y_latent)
    add("reference pyramid",
        traced_macs(model.multiscale, lambda: model.multiscale(feat)))
    add("motion entropy decoder",
        traced_macs(model.motion_entropy,
                    lambda: model.motion_entropy.params(z_m, m_latent, y_latent)))
    add("motion decoder",
        traced_macs(model.motion_decoder,
                    lambda: model.motion_decoder(m_latent)))
    miner_warps = warp_macs(cfg.flows_per_group * c, hh * hw) + \
        warp_macs(cfg.flows_per_group * c, qh * qw)
    add("context mining",
        traced_macs(model.miner,
                    lambda: model.miner(feat, ref_quarter, motion_feat,
                                        conf_half, conf_quarter))
        + miner_warps)
    add("spatial prior",
        traced_macs(model.spatial_prior,
                    lambda: model.spatial_prior(ref_quarter)))

    z_y = model.residual_entropy.hyper(y_latent, y_latent, sp)

    def run_residual_entropy():
        h = model.residual_entropy.hyper_features(z_y, (lh, lw))
        for seg in range(4):
            model.residual_entropy.segment_params(seg, h, y_latent, sp, y_latent)

    add("residual entropy decoder",
        traced_macs(model.residual_entropy, run_residual_entropy))
    add("residual decoder",
        traced_macs(model.residual_decoder,
                    lambda: model.residual_decoder(y_latent, ref_quarter)))
    add("frame generator",
        traced_macs(model.generator,
                    lambda: model.generator(feat, conf_half, feat)))
    add("feature adaptor",
        traced_macs(model.adaptor_refresh,
                    lambda: model.adaptor_refresh(packed)))

    # --- intra (once per sequence, outside the per-frame totals) --------
    intra_y = torch.zeros(1, cfg.intra_latent, lh, lw)
    intra_z = model.intra.hyper_enc(intra_y)
    add("intra analysis",
        traced_macs(model.intra, lambda: (model.intra.enc(packed),
                                          model.intra.hyper_enc(intra_y))))
    add("intra synthesis",
        traced_macs(model.intra, lambda: (model.intra.dec(intra_y),
                                          model.intra.params(intra_z, (lh, lw)))))

    encoder_only = ("motion estimation", "motion feature transform",
                    "feature extraction", "alignment for analysis",
                    "motion encoder", "motion hyper encoder",
                    "residual encoder", "residual hyper encoder")
    intra_rows = ("intra analysis", "intra synthesis")
    decoder_rows = tuple(n for n in rows
                         if n not in encoder_only and n not in intra_rows)
    return MacReport(rows=rows, encoder_only=encoder_only,
                     decoder_rows=decoder_rows, intra_rows=intra_rows)

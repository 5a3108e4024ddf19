"""Motion estimation, estimation-resolution selection, and motion coding.

Flow is always estimated between uncompressed frames (the current input and
the previous original), never against reconstructions.  The estimator is a
three-level pyramid of warp-and-refine blocks running on packed frames; its
output is a full-resolution field whose values are in luma pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import CodecConfig, Frame, MotionField, PackedFrame, PSNR_CAP_DB
from .context import scale_flow, warp_bilinear
from .layers import ResidualBlock, SubpelUp, conv3, soft_bound

# Motion latents carry a learned quantization step, which makes their raw
# amplitude a free scale direction; the head is bounded so that direction
# cannot drift out of the entropy model's working range.
MOTION_LATENT_BOUND = 64.0


class _RefineBlock(nn.Module):
    def __init__(self, feat_channels: int, hidden: int) -> None:
        super().__init__()
        self.net = nn.Sequential(
            conv3(2 * feat_channels + 2, hidden), nn.GELU(),
            conv3(hidden, hidden), nn.GELU(),
            conv3(hidden, 2),
        )

    def forward(self, cur, ref_warped, flow):
        return self.net(torch.cat([cur, ref_warped, flow], dim=1))


class PyramidFlowNet(nn.Module):
    """Coarse-to-fine flow over packed-frame pyramids (1/2, 1/4, 1/8)."""

    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        f0, f1, f2 = cfg.flow_channels
        self.feat0 = nn.Sequential(conv3(6, f0), nn.GELU(), conv3(f0, f0))
        self.feat1 = nn.Sequential(nn.GELU(), conv3(f0, f1, stride=2), nn.GELU(),
                                   conv3(f1, f1))
        self.feat2 = nn.Sequential(nn.GELU(), conv3(f1, f2, stride=2), nn.GELU(),
                                   conv3(f2, f2))
        hidden = 32
        self.refine = nn.ModuleList([
            _RefineBlock(f0, hidden),
            _RefineBlock(f1, hidden),
            _RefineBlock(f2, hidden),
        ])

    def _pyramid(self, packed: torch.Tensor) -> list[torch.Tensor]:
        c0 = self.feat0(packed)
        c1 = self.feat1(c0)
        c2 = self.feat2(c1)
        return [c0, c1, c2]

    def forward(self, cur: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
        """Packed tensors [B,6,h,w] -> flow [B,2,2h,2w] in luma pixels."""

        pc = self._pyramid(cur)
        pr = self._pyramid(ref)
        flow = torch.zeros(cur.shape[0], 2, pc[2].shape[2], pc[2].shape[3],
                           device=cur.device, dtype=cur.dtype)
        for level in (2, 1, 0):
            warped = warp_bilinear(pr[level], flow)
            flow = flow + self.refine[level](pc[level], warped, flow)
            flow = scale_flow(flow, 2.0)
        return flow


def estimate_flow(model: "PyramidFlowNet", cur: PackedFrame,
                  ref: PackedFrame) -> MotionField:
    flow = model(cur.data.unsqueeze(0), ref.data.unsqueeze(0))
    return MotionField(flow.squeeze(0), scale=1)


# ---------------------------------------------------------------------------
# estimation-resolution selection (encoder-internal, nothing is signalled)


def _luma_psnr_float(a: torch.Tensor, b: torch.Tensor, max_value: float) -> float:
    mse = float(torch.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * float(np.log10(max_value * max_value / mse)))


def _downsample_plane(plane: torch.Tensor, factor: int) -> torch.Tensor:
    return F.interpolate(plane.unsqueeze(0).unsqueeze(0), scale_factor=1.0 / factor,
                         mode="bilinear", align_corners=False)[0, 0]


def select_estimation_resolution(cur: Frame, ref: Frame, cfg: CodecConfig
                                 ) -> tuple[PackedFrame, PackedFrame, bool]:
    """Pick full-resolution or factor-d downsampled motion estimation.

    The luma PSNR between the pair is measured at both resolutions; the
    downsampled pair is used only when its PSNR beats the original by more
    than the configured margin (large or complex motion).  Both frames must
    already be padded.  Returns the packed estimation pair and a flag.
    """

    d = cfg.downsample_factor
    theta = cfg.downsample_margin_db
    maxv = float(cur.max_value)
    y_cur = torch.from_numpy(cur.y.astype(np.float32))
    y_ref = torch.from_numpy(ref.y.astype(np.float32))
    psnr_full = _luma_psnr_float(y_cur, y_ref, maxv)
    y_cur_d = _downsample_plane(y_cur, d)
    y_ref_d = _downsample_plane(y_ref, d)
    psnr_down = _luma_psnr_float(y_cur_d, y_ref_d, maxv)
    use_down = bool(np.isfinite(theta)) and psnr_down > psnr_full + theta
    if not use_down:
        from .core import pack_yuv420
        return pack_yuv420(cur), pack_yuv420(ref), False
    packed = []
    for fr, y_d in ((cur, y_cur_d), (ref, y_ref_d)):
        u_d = _downsample_plane(torch.from_numpy(fr.u.astype(np.float32)), d)
        v_d = _downsample_plane(torch.from_numpy(fr.v.astype(np.float32)), d)
        phases = torch.stack([y_d[0::2, 0::2], y_d[0::2, 1::2],
                              y_d[1::2, 0::2], y_d[1::2, 1::2], u_d, v_d]) / maxv
        packed.append(PackedFrame(phases, fr.bit_depth))
    return packed[0], packed[1], True


def upsample_flow(field: MotionField, factor: int) -> MotionField:
    """Upsample a flow field by ``factor``; displacement values scale too."""

    if factor == 1:
        return field
    flow = scale_flow(field.flow.unsqueeze(0), float(factor)).squeeze(0)
    return MotionField(flow, scale=max(1, field.scale // factor))


# ---------------------------------------------------------------------------
# motion feature transform and coding transforms


class MotionFeatureTransform(nn.Module):
    """Full-resolution flow -> 2*g*k-channel motion feature at 1/2 scale."""

    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        out = 2 * cfg.groups * cfg.flows_per_group
        self.conv = conv3(2, out, stride=2)

    def forward(self, flow: torch.Tensor) -> torch.Tensor:
        return self.conv(flow)


class MotionEncoder(nn.Module):
    """Motion feature + conditions -> latent at 1/16 of full resolution.

    Conditions enter at their native scales: the current content feature,
    the 1/2-scale reference feature and its aligned version join the input;
    the previous 1/4-scale motion-decoder intermediate joins one level down.
    """

    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        c = cfg.channels
        cm = 2 * cfg.groups * cfg.flows_per_group
        mid = 48
        self.stage1 = nn.Sequential(conv3(cm + 3 * c, mid, stride=2), nn.GELU(),
                                    ResidualBlock(mid))
        self.stage2 = nn.Sequential(conv3(mid + cfg.motion_inter_channels, mid,
                                          stride=2), nn.GELU(), ResidualBlock(mid))
        self.stage3 = conv3(mid, cfg.motion_latent, stride=2)

    def forward(self, motion_feat, cur_feat, ref_half, aligned_ref, motion_inter_prev):
        x = self.stage1(torch.cat([motion_feat, cur_feat, ref_half, aligned_ref], dim=1))
        x = self.stage2(torch.cat([x, motion_inter_prev], dim=1))
        return soft_bound(self.stage3(x), MOTION_LATENT_BOUND)


@dataclass
class MotionDecodeResult:
    """Outputs of the motion decoder.

    ``motion_feat``: reconstructed 2*g*k-channel motion feature (1/2 scale);
    ``conf_half`` / ``conf_quarter``: alignment confidences in (0, 1) with
    the channel counts of the matching reference features;
    ``inter``: the 1/4-scale intermediate propagated as a temporal condition.
    """

    motion_feat: torch.Tensor
    conf_half: torch.Tensor
    conf_quarter: torch.Tensor
    inter: torch.Tensor


class MotionDecoder(nn.Module):
    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        c = cfg.channels
        cm = 2 * cfg.groups * cfg.flows_per_group
        cv = cfg.motion_inter_channels
        mid = 48
        self.up1 = nn.Sequential(SubpelUp(cfg.motion_latent, mid), nn.GELU(),
                                 ResidualBlock(mid))
        self.up2 = nn.Sequential(SubpelUp(mid, cv), nn.GELU())
        self.inter_block = ResidualBlock(cv)
        self.conf_quarter_head = nn.Sequential(conv3(cv, c), nn.Sigmoid())
        self.up3 = nn.Sequential(SubpelUp(cv, c), nn.GELU(), ResidualBlock(c))
        self.motion_head = conv3(c, cm)
        self.conf_half_head = nn.Sequential(conv3(c, c), nn.Sigmoid())

    def forward(self, latent: torch.Tensor) -> MotionDecodeResult:
        x = self.up2(self.up1(latent))
        inter = self.inter_block(x)
        conf_quarter = self.conf_quarter_head(inter)
        top = self.up3(inter)
        return MotionDecodeResult(
            motion_feat=self.motion_head(top),
            conf_half=self.conf_half_head(top),
            conf_quarter=conf_quarter,
            inter=inter,
        )

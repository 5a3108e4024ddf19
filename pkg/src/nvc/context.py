"""Temporal context mining: group-wise alignment and multi-scale refinement.

Warping convention: ``warp(feat, flow)[y, x] = feat[y + dy, x + dx]`` with
bilinear interpolation and border replication, flow values in pixels at the
feature's own grid.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .layers import InceptionBlock, ResidualBlock, SubpelUp, conv1, conv3, delta_init_


def warp_bilinear(feat: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Backward-warp ``feat`` [B,C,h,w] by ``flow`` [B,2,h,w] (dx, dy).

    Implemented as an explicit gather rather than ``grid_sample`` so that
    sampling happens in pixel coordinates directly: integer flows reproduce
    source samples bit-exactly (no normalize/denormalize round trip), out-of
    -range coordinates clamp to the border, and the arithmetic is the same
    basic-op sequence on every platform.
    """

    b, c, h, w = feat.shape
    device, dtype = feat.device, feat.dtype
    ys = torch.arange(h, device=device, dtype=dtype).view(1, h, 1)
    xs = torch.arange(w, device=device, dtype=dtype).view(1, 1, w)
    px = (xs + flow[:, 0]).clamp(0.0, w - 1.0)
    py = (ys + flow[:, 1]).clamp(0.0, h - 1.0)
    x0 = px.floor()
    y0 = py.floor()
    fx = (px - x0).unsqueeze(1)
    fy = (py - y0).unsqueeze(1)
    x0l = x0.long()
    y0l = y0.long()
    x1l = (x0l + 1).clamp_(max=w - 1)
    y1l = (y0l + 1).clamp_(max=h - 1)
    flat = feat.reshape(b, c, h * w)

    def sample(yi: torch.Tensor, xi: torch.Tensor) -> torch.Tensor:
        idx = (yi * w + xi).view(b, 1, h * w).expand(b, c, h * w)
        return flat.gather(2, idx).view(b, c, h, w)

    top = sample(y0l, x0l) * (1.0 - fx) + sample(y0l, x1l) * fx
    bot = sample(y1l, x0l) * (1.0 - fx) + sample(y1l, x1l) * fx
    return top * (1.0 - fy) + bot * fy


def scale_flow(flow: torch.Tensor, factor: float) -> torch.Tensor:
    """Resize a flow-valued tensor by ``factor``, scaling values to match."""

    out = F.interpolate(flow, scale_factor=factor, mode="bilinear",
                        align_corners=False)
    return out * factor


class GroupwiseAlign(nn.Module):
    """Align a reference feature with g groups x k flows per group.

    The motion feature carries ``2 * g * k`` channels: flow j of group i
    occupies channels ``2*(i*k+j)`` (dx) and ``2*(i*k+j)+1`` (dy).  Every
    flow of group i warps that group's ``C/g`` channels; the g*k warped
    groups are concatenated (group-major) and mixed by a 1x1 convolution.
    """

    def __init__(self, channels: int, groups: int, flows_per_group: int) -> None:
        super().__init__()
        if channels % groups:
            raise ValueError("channels must divide evenly into groups")
        self.channels = channels
        self.groups = groups
        self.flows_per_group = flows_per_group
        self.aggregate = conv1(flows_per_group * channels, channels)

    def forward(self, ref: torch.Tensor, motion_feat: torch.Tensor) -> torch.Tensor:
        g, k = self.groups, self.flows_per_group
        cg = self.channels // g
        if motion_feat.shape[1] != 2 * g * k:
            raise ValueError(
                f"motion feature needs {2 * g * k} channels, got {motion_feat.shape[1]}"
            )
        warped = []
        for i in range(g):
            group = ref[:, i * cg:(i + 1) * cg]
            for j in range(k):
                fi = i * k + j
                flow = motion_feat[:, 2 * fi:2 * fi + 2]
                warped.append(warp_bilinear(group, flow))
        return self.aggregate(torch.cat(warped, dim=1))

    def init_group_identity_(self) -> "GroupwiseAlign":
        """Make the aggregation average each group's k warped copies, so
        zero flow reproduces the reference exactly."""

        g, k = self.groups, self.flows_per_group
        cg = self.channels // g
        with torch.no_grad():
            self.aggregate.weight.zero_()
            self.aggregate.bias.zero_()
            for c in range(self.channels):
                i, offset = divmod(c, cg)
                for j in range(k):
                    src = (i * k + j) * cg + offset
                    self.aggregate.weight[c, src, 0, 0] = 1.0 / k
        return self


class MultiScaleExtractor(nn.Module):
    """Reference feature -> pyramid (1/2-scale, 1/4-scale)."""

    def __init__(self, channels: int) -> None:
        super().__init__()
        self.same = nn.Sequential(conv3(channels, channels), nn.GELU(),
                                  ResidualBlock(channels))
        self.down = nn.Sequential(conv3(channels, channels, stride=2), nn.GELU(),
                                  ResidualBlock(channels))

    def forward(self, ref_feat: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.same(ref_feat), self.down(ref_feat)


class ContextMiner(nn.Module):
    """Confidence-weighted alignment and refinement into two contexts."""

    def __init__(self, channels: int, groups: int, flows_per_group: int) -> None:
        super().__init__()
        self.align_half = GroupwiseAlign(channels, groups, flows_per_group)
        self.align_quarter = GroupwiseAlign(channels, groups, flows_per_group)
        self.refine_half = InceptionBlock(channels)
        self.refine_quarter = nn.Sequential(conv3(channels, channels), nn.GELU(),
                                            ResidualBlock(channels))
        self.up = SubpelUp(channels, channels)
        self.fuse = conv3(2 * channels, channels)

    def forward(self, ref_half: torch.Tensor, ref_quarter: torch.Tensor,
                motion_feat: torch.Tensor, conf_half: torch.Tensor,
                conf_quarter: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        motion_quarter = scale_flow(motion_feat, 0.5)
        aligned_half = self.align_half(ref_half, motion_feat) * conf_half
        aligned_quarter = self.align_quarter(ref_quarter, motion_quarter) * conf_quarter
        ctx_quarter = self.refine_quarter(aligned_quarter)
        half = self.refine_half(aligned_half)
        ctx_half = self.fuse(torch.cat([half, self.up(ctx_quarter)], dim=1))
        return ctx_half, ctx_quarter

    def init_identity_(self) -> "ContextMiner":
        """Identity-initialize the 1/2-scale path: with unit confidence and
        zero flow the first context equals the 1/2-scale reference."""

        self.align_half.init_group_identity_()
        self.refine_half.zero_fuse_()
        with torch.no_grad():
            self.fuse.weight.zero_()
            self.fuse.bias.zero_()
            for c in range(self.fuse.in_channels // 2):
                self.fuse.weight[c, c, 1, 1] = 1.0
        return self

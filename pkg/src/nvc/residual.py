"""Content feature extraction, conditional residual coding, frame synthesis."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .core import CodecConfig
from .layers import ResidualBlock, SubpelUp, UNet2, conv3


class FeatureExtractor(nn.Module):
    """Packed frame -> content feature on the same 1/2-scale grid.

    The packing itself performs the 2x downsampling, so the convolution
    here keeps stride 1 and the feature stays on the packed grid.
    """

    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        self.net = nn.Sequential(conv3(6, cfg.channels), nn.GELU(),
                                 ResidualBlock(cfg.channels))

    def forward(self, packed: torch.Tensor) -> torch.Tensor:
        return self.net(packed)


class FeatureAdaptor(nn.Module):
    """Re-derive a reference feature from a reconstructed packed frame.

    Used for the first inter frame after an intra frame and after a feature
    refresh, where no propagated feature exists.
    """

    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        self.net = nn.Sequential(conv3(6, cfg.channels), nn.GELU(),
                                 ResidualBlock(cfg.channels))

    def forward(self, packed: torch.Tensor) -> torch.Tensor:
        return self.net(packed)


class ResidualEncoder(nn.Module):
    """Content feature + temporal contexts -> latent at 1/16 resolution.

    The 1/2-scale context joins the input; the 1/4-scale context is
    concatenated after the first stride-2 stage.
    """

    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        c = cfg.channels
        mid = 48
        self.stage1 = conv3(2 * c, mid, stride=2)
        self.stage2 = nn.Sequential(conv3(mid + c, mid), nn.GELU(),
                                    ResidualBlock(mid))
        self.stage3 = nn.Sequential(conv3(mid, mid, stride=2), nn.GELU(),
                                    ResidualBlock(mid))
        self.stage4 = conv3(mid, cfg.residual_latent, stride=2)
        self.act = nn.GELU()

    def forward(self, cur_feat, ctx_half, ctx_quarter):
        x = self.act(self.stage1(torch.cat([cur_feat, ctx_half], dim=1)))
        x = self.stage2(torch.cat([x, ctx_quarter], dim=1))
        return self.stage4(self.stage3(x))


@dataclass
class ResidualDecodeResult:
    """``feat``: decoded 1/2-scale residual feature; ``gate``: per-element
    context confidence in (0, 1) that scales the first temporal context
    during synthesis."""

    feat: torch.Tensor
    gate: torch.Tensor


class ResidualDecoder(nn.Module):
    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        c = cfg.channels
        mid = 48
        self.up1 = nn.Sequential(SubpelUp(cfg.residual_latent, mid), nn.GELU(),
                                 ResidualBlock(mid))
        self.up2 = SubpelUp(mid, c)
        self.merge = nn.Sequential(conv3(2 * c, c), nn.GELU(), ResidualBlock(c))
        self.up3 = nn.Sequential(SubpelUp(c, c), nn.GELU(), ResidualBlock(c))
        self.feat_head = conv3(c, c)
        self.gate_head = nn.Sequential(conv3(c, c), nn.Sigmoid())

    def forward(self, latent: torch.Tensor, ctx_quarter: torch.Tensor
                ) -> ResidualDecodeResult:
        x = self.up2(self.up1(latent))
        x = self.up3(self.merge(torch.cat([x, ctx_quarter], dim=1)))
        return ResidualDecodeResult(feat=self.feat_head(x),
                                    gate=self.gate_head(x))


class FrameGenerator(nn.Module):
    """Fuse decoded residual with the gated context and synthesize output.

    ``fused = feat + gate * ctx_half`` feeds a two-level U-Net whose output
    is the propagated reconstruction feature; a 6-channel head emits the
    packed frame (the luma phases pixel-shuffle back to full resolution at
    unpack time).
    """

    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        c = cfg.channels
        self.unet = UNet2(c, 48)
        self.head = conv3(c, 6)

    def forward(self, feat: torch.Tensor, gate: torch.Tensor,
                ctx_half: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        fused = feat + gate * ctx_half
        out_feat = self.unet(fused)
        return out_feat, self.head(out_feat)


class PredictionHead(nn.Module):
    """Auxiliary packed-frame predictor from the first temporal context.

    Only used by the motion-only training stage to give the motion branch a
    pixel-domain distortion signal.
    """

    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        self.net = nn.Sequential(conv3(cfg.channels, cfg.channels), nn.GELU(),
                                 conv3(cfg.channels, 6))

    def forward(self, ctx_half: torch.Tensor) -> torch.Tensor:
        return self.net(ctx_half)

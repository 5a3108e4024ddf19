"""Shared convolutional building blocks.

Everything here operates on batched tensors [B, C, h, w].  Several blocks
expose explicit identity initializers; the context-mining tests use them to
construct paths whose end-to-end map is the identity.
"""

from __future__ import annotations

import torch
import torch.nn as nn


def conv3(cin: int, cout: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(cin, cout, kernel_size=3, stride=stride, padding=1)


def soft_bound(x: torch.Tensor, limit: float) -> torch.Tensor:
    """Smoothly confine ``x`` to (-limit, limit).

    Near-identity for |x| << limit, so it only acts when activations try
    to run away.  Latent heads use it to keep coded amplitudes inside the
    range where the entropy model still produces useful gradients.
    """

    return limit * torch.tanh(x / limit)


def conv1(cin: int, cout: int) -> nn.Conv2d:
    return nn.Conv2d(cin, cout, kernel_size=1)


def delta_init_(conv: nn.Conv2d) -> nn.Conv2d:
    """Initialize a square conv to the identity map (center-tap delta)."""

    if conv.in_channels != conv.out_channels:
        raise ValueError("identity init needs matching channel counts")
    with torch.no_grad():
        conv.weight.zero_()
        kh, kw = conv.kernel_size
        for c in range(conv.out_channels):
            conv.weight[c, c, kh // 2, kw // 2] = 1.0
        if conv.bias is not None:
            conv.bias.zero_()
    return conv


class ResidualBlock(nn.Module):
    def __init__(self, channels: int) -> None:
        super().__init__()
        self.conv1 = conv3(channels, channels)
        self.conv2 = conv3(channels, channels)
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.conv2(self.act(self.conv1(x)))

    def init_identity_(self) -> "ResidualBlock":
        with torch.no_grad():
            self.conv2.weight.zero_()
            self.conv2.bias.zero_()
        return self


class SubpelUp(nn.Module):
    """Sub-pixel x2 upsampler: conv to 4x channels then pixel shuffle."""

    def __init__(self, cin: int, cout: int) -> None:
        super().__init__()
        self.conv = conv3(cin, cout * 4)
        self.shuffle = nn.PixelShuffle(2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.shuffle(self.conv(x))


class DownBlock(nn.Module):
    def __init__(self, cin: int, cout: int) -> None:
        super().__init__()
        self.down = conv3(cin, cout, stride=2)
        self.res = ResidualBlock(cout)
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.res(self.act(self.down(x)))


class InceptionBlock(nn.Module):
    """Residual inception: parallel 1x1 / 3x3 / pooled paths fused by 1x1.

    The residual form makes ``zero_fuse_`` an exact identity initializer.
    """

    def __init__(self, channels: int) -> None:
        super().__init__()
        mid = max(channels // 2, 4)
        self.path1 = conv1(channels, mid)
        self.path3 = nn.Sequential(conv1(channels, mid), nn.GELU(), conv3(mid, mid))
        self.pool = nn.Sequential(nn.AvgPool2d(3, stride=1, padding=1),
                                  conv1(channels, mid))
        self.fuse = conv1(3 * mid, channels)
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        parts = torch.cat([self.path1(x), self.path3(x), self.pool(x)], dim=1)
        return x + self.fuse(self.act(parts))

    def zero_fuse_(self) -> "InceptionBlock":
        with torch.no_grad():
            self.fuse.weight.zero_()
            self.fuse.bias.zero_()
        return self


class UNet2(nn.Module):
    """Two-level encoder-decoder with a skip connection."""

    def __init__(self, channels: int, mid: int) -> None:
        super().__init__()
        self.enc = nn.Sequential(conv3(channels, channels), nn.GELU(),
                                 ResidualBlock(channels))
        self.down = DownBlock(channels, mid)
        self.up = SubpelUp(mid, channels)
        self.merge = nn.Sequential(conv3(2 * channels, channels), nn.GELU(),
                                   ResidualBlock(channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        top = self.enc(x)
        bottom = self.up(self.down(top))
        return self.merge(torch.cat([top, bottom], dim=1))

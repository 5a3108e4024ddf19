"""Intra codec: a compact hyperprior autoencoder over packed frames.

Serves as the default pluggable first-frame coder and as the reference
pool for quality augmentation during training.  Built from the same block
and entropy toolbox as the inter path.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .core import CodecConfig
from .entropy import FactorizedModel, gaussian_bits_proxy, positive_sigma
from .layers import ResidualBlock, SubpelUp, conv1, conv3


class IntraCodec(nn.Module):
    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        il, ih = cfg.intra_latent, cfg.intra_hyper
        mid = 48
        self.enc = nn.Sequential(
            conv3(6, 32, stride=2), nn.GELU(), ResidualBlock(32),
            conv3(32, mid, stride=2), nn.GELU(), ResidualBlock(mid),
            conv3(mid, il, stride=2),
        )
        self.dec = nn.Sequential(
            SubpelUp(il, mid), nn.GELU(), ResidualBlock(mid),
            SubpelUp(mid, 32), nn.GELU(), ResidualBlock(32),
            SubpelUp(32, 32), nn.GELU(), ResidualBlock(32),
            conv3(32, 6),
        )
        self.hyper_enc = nn.Sequential(
            conv3(il, ih), nn.GELU(),
            conv3(ih, ih, stride=2), nn.GELU(),
            conv3(ih, ih, stride=2),
        )
        self.hyper_dec = nn.Sequential(
            SubpelUp(ih, ih), nn.GELU(),
            SubpelUp(ih, ih), nn.GELU(),
            conv1(ih, 2 * il),
        )
        self.factorized = FactorizedModel(ih)
        self.latent_channels = il
        self.hyper_channels = ih

    def params(self, hyper_latent_hat: torch.Tensor,
               latent_size: tuple[int, int]):
        raw = self.hyper_dec(hyper_latent_hat)
        raw = raw[:, :, :latent_size[0], :latent_size[1]]
        il = self.latent_channels
        return raw[:, :il], positive_sigma(raw[:, il:])

    def train_forward(self, packed: torch.Tensor, rng: torch.Generator | None = None):
        """Differentiable pass: returns (recon, latent bits, hyper bits).

        Rate terms use the additive-noise proxy; the tensors the decoder
        side consumes use straight-through rounding so the trained
        decoder sees what it will see at coding time.
        """

        y = self.enc(packed)
        z = self.hyper_enc(y)
        bits_z = self.factorized.bits_proxy(z + _uniform_noise(z, rng)).sum()
        z_feed = z + (torch.round(z) - z).detach()
        mu, sigma = self.params(z_feed, (y.shape[2], y.shape[3]))
        bits_y = gaussian_bits_proxy(y + _uniform_noise(y, rng), mu, sigma).sum()
        y_feed = y + (torch.round(y) - y).detach()
        recon = self.dec(y_feed)
        return recon, bits_y, bits_z


def _uniform_noise(like: torch.Tensor, rng: torch.Generator | None) -> torch.Tensor:
    noise = torch.empty_like(like)
    noise.uniform_(-0.5, 0.5, generator=rng)
    return noise

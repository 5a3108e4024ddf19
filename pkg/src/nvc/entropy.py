"""Entropy models: hyperpriors, conditional Gaussians, checkerboard, skip.

Both latent branches share one toolbox: a learned per-channel factorized
model codes the hyper-latents; conditional Gaussians code the latents
themselves.  The motion branch additionally predicts a per-element
quantization step; the residual branch decodes in four checkerboard
segments with strict spatial causality.

Scale conventions: ``sigma`` heads use a softplus positive mapping (zero
raw input gives softplus(0)); step heads use an exponential mapping (zero
raw input gives a unit step).  Both are floored: sigma at 1e-4, steps at
0.05.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .core import CodecConfig, SegmentOrderError
from .detmath import det_exp
from .layers import ResidualBlock, SubpelUp, conv1, conv3

SIGMA_FLOOR = 1e-4
SIGMA_CEIL = 64.0
STEP_FLOOR = 0.05
# Latent heads produce O(1) activations, so a step above their amplitude
# just expresses "code nothing".  Capping the step at that scale keeps the
# value/step ratio a live coding decision instead of a free direction the
# rate term can collapse.
STEP_CEIL = 1.0

# Checkerboard phases in decode order: (row parity, column parity).
CHECKERBOARD_PHASES = ((0, 0), (1, 1), (0, 1), (1, 0))


def positive_sigma(raw: torch.Tensor) -> torch.Tensor:
    return F.softplus(raw).clamp(SIGMA_FLOOR, SIGMA_CEIL)


def positive_step(raw: torch.Tensor) -> torch.Tensor:
    return torch.exp(raw).clamp(STEP_FLOOR, STEP_CEIL)


def adaptive_quantize(latent: torch.Tensor, step: torch.Tensor) -> torch.Tensor:
    """Element-wise ``round(latent / step)``; result is integer-valued."""

    return torch.round(latent / step)


def adaptive_dequantize(quantized: torch.Tensor, step: torch.Tensor) -> torch.Tensor:
    return quantized * step


@dataclass
class GaussianParams:
    """Per-element conditional coding parameters (latent domain)."""

    mu: torch.Tensor
    sigma: torch.Tensor
    step: torch.Tensor | None = None


def gaussian_bits_proxy(value: torch.Tensor, mu: torch.Tensor,
                        sigma: torch.Tensor,
                        step: torch.Tensor | None = None) -> torch.Tensor:
    """Differentiable rate: -log2 of the mass of a +-step/2 bin around
    ``value`` under N(mu, sigma).  ``step`` defaults to one.

    The coder snaps sigma/step onto a table clipped to [SIGMA_FLOOR,
    SIGMA_CEIL], so scales outside that band get no cheaper: the proxy
    applies the same clamp (in step units) or it would under-charge
    latents that simply grow until the quantization bin is relatively
    tiny.
    """

    if step is None:
        half = 0.5
        sigma = sigma.clamp(SIGMA_FLOOR, SIGMA_CEIL)
    else:
        half = step * 0.5
        sigma = torch.minimum(sigma.clamp_min(step * SIGMA_FLOOR),
                              step * SIGMA_CEIL)
    z_hi = (value - mu + half) / sigma
    z_lo = (value - mu - half) / sigma
    normal = torch.distributions.Normal(0.0, 1.0)
    mass = normal.cdf(z_hi) - normal.cdf(z_lo)
    return -torch.log2(mass.clamp_min(1e-12))


class FactorizedModel(nn.Module):
    """Learned per-channel distribution for hyper-latents.

    Each channel carries a trainable location and log-scale; coding builds
    the integer CDF table from the snapped Gaussian, so the density and the
    codec stay consistent by construction.
    """

    def __init__(self, channels: int) -> None:
        super().__init__()
        self.loc = nn.Parameter(torch.zeros(channels))
        self.log_scale = nn.Parameter(torch.zeros(channels))

    def sigma(self) -> torch.Tensor:
        return torch.exp(self.log_scale).clamp(SIGMA_FLOOR, SIGMA_CEIL)

    def bits_proxy(self, noisy: torch.Tensor) -> torch.Tensor:
        c = noisy.shape[1]
        mu = self.loc.view(1, c, 1, 1)
        sigma = self.sigma().view(1, c, 1, 1)
        return gaussian_bits_proxy(noisy, mu, sigma)

    def coding_params(self, shape: torch.Size) -> tuple[torch.Tensor, torch.Tensor]:
        """Broadcast (mu, sigma) over a [B, C, h, w] latent shape."""

        b, c, h, w = shape
        mu = self.loc.detach().view(1, c, 1, 1).expand(b, c, h, w)
        sigma = self.sigma().detach().view(1, c, 1, 1).expand(b, c, h, w)
        return mu, sigma


# ---------------------------------------------------------------------------
# motion branch


class MotionEntropyModel(nn.Module):
    """Hyperprior + temporal gather for the motion latent.

    The hyper-encoder sees the latent with both temporal priors; the gather
    network fuses the decoded hyper feature with the same priors and emits
    per-element (mu, sigma, step).
    """

    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        ml, yl, hz = cfg.motion_latent, cfg.residual_latent, cfg.hyper_channels
        self.factorized = FactorizedModel(hz)
        self.hyper_enc = nn.Sequential(
            conv3(ml + ml + yl, 32), nn.GELU(),
            conv3(32, 32, stride=2), nn.GELU(),
            conv3(32, hz, stride=2),
        )
        self.hyper_dec = nn.Sequential(
            SubpelUp(hz, 32), nn.GELU(),
            SubpelUp(32, 32), nn.GELU(),
        )
        self.gather = nn.Sequential(
            conv3(32 + ml + yl, 48), nn.GELU(),
            ResidualBlock(48),
            conv1(48, 3 * ml),
        )
        self.latent_channels = ml

    def hyper(self, latent, motion_prior, residual_prior) -> torch.Tensor:
        return self.hyper_enc(torch.cat([latent, motion_prior, residual_prior], dim=1))

    def params(self, hyper_decoded_input, motion_prior, residual_prior) -> GaussianParams:
        # The hyper path rounds odd sizes up on the way down, so its output
        # can overshoot the latent grid; trim to the prior's footprint.
        h = self.hyper_dec(hyper_decoded_input)
        h = h[:, :, :motion_prior.shape[2], :motion_prior.shape[3]]
        raw = self.gather(torch.cat([h, motion_prior, residual_prior], dim=1))
        ml = self.latent_channels
        mu = raw[:, :ml]
        sigma = positive_sigma(raw[:, ml:2 * ml])
        step = positive_step(raw[:, 2 * ml:])
        return GaussianParams(mu=mu, sigma=sigma, step=step)


# ---------------------------------------------------------------------------
# residual branch


class SpatialPriorEncoder(nn.Module):
    """1/4-scale context -> latent-resolution spatial prior feature."""

    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        self.net = nn.Sequential(
            conv3(cfg.channels, 24, stride=2), nn.GELU(),
            conv3(24, cfg.spatial_prior_channels, stride=2),
        )

    def forward(self, ctx_quarter: torch.Tensor) -> torch.Tensor:
        return self.net(ctx_quarter)


def checkerboard_mask(height: int, width: int, segment: int,
                      device=None) -> torch.Tensor:
    """Boolean [h, w] mask selecting the given segment's phase."""

    pr, pc = CHECKERBOARD_PHASES[segment]
    mask = torch.zeros(height, width, dtype=torch.bool, device=device)
    mask[pr::2, pc::2] = True
    return mask


def segments_before_mask(height: int, width: int, segment: int,
                         device=None) -> torch.Tensor:
    """Mask of all positions decoded strictly before ``segment``."""

    mask = torch.zeros(height, width, dtype=torch.bool, device=device)
    for i in range(segment):
        mask |= checkerboard_mask(height, width, i, device=device)
    return mask


class ResidualEntropyModel(nn.Module):
    """Hyperprior + spatial prior + four-segment checkerboard gather."""

    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        yl, hz, sp = cfg.residual_latent, cfg.hyper_channels, cfg.spatial_prior_channels
        self.factorized = FactorizedModel(hz)
        self.hyper_enc = nn.Sequential(
            conv3(yl + yl + sp, 32), nn.GELU(),
            conv3(32, 32, stride=2), nn.GELU(),
            conv3(32, hz, stride=2),
        )
        self.hyper_dec = nn.Sequential(
            SubpelUp(hz, 32), nn.GELU(),
            SubpelUp(32, 32), nn.GELU(),
        )
        self.segment_nets = nn.ModuleList([
            nn.Sequential(
                conv3(32 + yl + sp + yl, 48), nn.GELU(),
                ResidualBlock(48),
                conv1(48, 2 * yl),
            )
            for _ in range(4)
        ])
        self.latent_channels = yl

    def hyper(self, latent, residual_prior, spatial_prior) -> torch.Tensor:
        return self.hyper_enc(torch.cat([latent, residual_prior, spatial_prior], dim=1))

    def hyper_features(self, hyper_latent_hat: torch.Tensor,
                       latent_size: tuple[int, int]) -> torch.Tensor:
        """Decoded hyper feature trimmed to the latent grid size."""

        out = self.hyper_dec(hyper_latent_hat)
        return out[:, :, :latent_size[0], :latent_size[1]]

    def segment_params(self, segment: int, hyper_feat, residual_prior,
                       spatial_prior, partial_latent) -> GaussianParams:
        """Parameters for one segment.

        ``partial_latent`` must be zero everywhere except at positions of
        segments already decoded; causality holds because later segments
        are masked out of the input.
        """

        h, w = partial_latent.shape[2], partial_latent.shape[3]
        allowed = segments_before_mask(h, w, segment, device=partial_latent.device)
        masked = partial_latent * allowed.to(partial_latent.dtype)
        raw = self.segment_nets[segment](
            torch.cat([hyper_feat, residual_prior, spatial_prior, masked], dim=1))
        yl = self.latent_channels
        return GaussianParams(mu=raw[:, :yl], sigma=positive_sigma(raw[:, yl:]))


class CheckerboardTracker:
    """Guards segment decode order; misuse raises ``SegmentOrderError``."""

    def __init__(self) -> None:
        self._next = 0

    def advance(self, segment: int) -> None:
        if segment != self._next:
            raise SegmentOrderError(
                f"segment {segment} processed out of order (expected {self._next})")
        self._next += 1

    @property
    def complete(self) -> bool:
        return self._next == len(CHECKERBOARD_PHASES)


# ---------------------------------------------------------------------------
# skip mode


def compute_skip_threshold(t: int, n_frames: int, beta: float) -> float:
    """Frame-position-dependent confidence threshold.

    Grows toward ``beta`` as t approaches the final frame, so later frames
    (whose errors propagate less) skip more aggressively.
    """

    if n_frames <= 0 or t < 0:
        raise ValueError("need n_frames > 0 and t >= 0")
    return float(beta) * float(det_exp((t / n_frames - 1.0) * 0.3))


def build_skip_mask(sigma_snapped: torch.Tensor, eta: float) -> torch.Tensor:
    """True where the model is confident enough to skip (sigma < eta)."""

    return sigma_snapped < eta


def apply_skip(symbols: torch.Tensor, mu_symbols: torch.Tensor,
               mask: torch.Tensor) -> torch.Tensor:
    """Replace skipped symbols by the (rounded) mean; both coder sides run
    this identically, so the mask itself is never transmitted."""

    return torch.where(mask, mu_symbols, symbols)

"""Hierarchical quality control: cyclic weights, scale bank, refresh rule."""

from __future__ import annotations

import torch
import torch.nn as nn

from .core import CodecConfig, InvalidInputError

HIERARCHICAL_WEIGHTS = (2.0, 0.2, 0.4, 0.2)

# Feature sites modulated by the scale bank, with their channel source.
SCALE_SITES = (
    ("motion_enc_latent", "motion_latent"),
    ("motion_dec_latent", "motion_latent"),
    ("motion_temporal_prior", "motion_latent"),
    ("residual_temporal_prior", "residual_latent"),
    ("residual_spatial_prior", "spatial_prior_channels"),
    ("residual_enc_latent", "residual_latent"),
    ("residual_dec_latent", "residual_latent"),
)


def quality_index(t: int, levels: int) -> int:
    """Cyclic quality level of frame t (intra frame is t = 0)."""

    if t < 0:
        raise InvalidInputError("frame index must be non-negative")
    return t % levels


def quality_weight(t: int, weights=HIERARCHICAL_WEIGHTS) -> float:
    return float(weights[t % len(weights)])


class ScaleBank(nn.Module):
    """Per-quality-level channel-wise feature scales at seven sites.

    Scales are strictly positive through an exponential parameterization
    and start at one (log zero).  ``apply`` multiplies, ``apply_inverse``
    divides; encoder- and decoder-side sites hold independent rows.
    """

    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        self.levels = cfg.quality_levels
        self.log_scales = nn.ParameterDict({
            name: nn.Parameter(torch.zeros(cfg.quality_levels, getattr(cfg, attr)))
            for name, attr in SCALE_SITES
        })

    def scale(self, site: str, level: int) -> torch.Tensor:
        if site not in self.log_scales:
            raise InvalidInputError(f"unknown scale site {site!r}")
        if not 0 <= level < self.levels:
            raise InvalidInputError(f"quality level {level} out of range")
        return torch.exp(self.log_scales[site][level])

    def apply(self, site: str, feat: torch.Tensor, level: int) -> torch.Tensor:
        s = self.scale(site, level)
        return feat * s.view(1, -1, 1, 1)

    def apply_inverse(self, site: str, feat: torch.Tensor, level: int) -> torch.Tensor:
        s = self.scale(site, level)
        return feat / s.view(1, -1, 1, 1)


def should_refresh(t: int, period: int) -> bool:
    """Refresh the decoded buffer before coding frame t (t >= 1)."""

    if t < 1:
        raise InvalidInputError("refresh applies to inter frames only")
    return period > 0 and t % period == 0

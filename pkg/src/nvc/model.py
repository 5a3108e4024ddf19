"""Full codec model bundle, decoded-state container, weight archives."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .context import ContextMiner, MultiScaleExtractor
from .core import CodecConfig, InvalidInputError
from .entropy import (
    MotionEntropyModel,
    ResidualEntropyModel,
    SpatialPriorEncoder,
)
from .intra import IntraCodec
from .motion import (
    MotionDecoder,
    MotionEncoder,
    MotionFeatureTransform,
    PyramidFlowNet,
)
from .quality import ScaleBank
from .residual import (
    FeatureAdaptor,
    FeatureExtractor,
    FrameGenerator,
    PredictionHead,
    ResidualDecoder,
    ResidualEncoder,
)


class VideoModel(nn.Module):
    """Every trainable piece of the codec for one rate point."""

    def __init__(self, cfg: CodecConfig) -> None:
        super().__init__()
        self.cfg = cfg
        self.flow_net = PyramidFlowNet(cfg)
        self.motion_feat_transform = MotionFeatureTransform(cfg)
        self.motion_encoder = MotionEncoder(cfg)
        self.motion_decoder = MotionDecoder(cfg)
        self.motion_entropy = MotionEntropyModel(cfg)
        self.feature_extractor = FeatureExtractor(cfg)
        self.multiscale = MultiScaleExtractor(cfg.channels)
        self.miner = ContextMiner(cfg.channels, cfg.groups, cfg.flows_per_group)
        self.residual_encoder = ResidualEncoder(cfg)
        self.residual_decoder = ResidualDecoder(cfg)
        self.generator = FrameGenerator(cfg)
        self.spatial_prior = SpatialPriorEncoder(cfg)
        self.residual_entropy = ResidualEntropyModel(cfg)
        self.adaptor_intra = FeatureAdaptor(cfg)
        self.adaptor_refresh = FeatureAdaptor(cfg)
        self.prediction_head = PredictionHead(cfg)
        self.scale_bank = ScaleBank(cfg)
        self.intra = IntraCodec(cfg)


def build_model(cfg: CodecConfig, seed: int | None = None) -> VideoModel:
    """Deterministically initialized model (same seed, same weights)."""

    torch.manual_seed(cfg.weight_seed if seed is None else seed)
    model = VideoModel(cfg)
    model.eval()
    return model


@dataclass
class DecodedBuffer:
    """Per-stream temporal state shared by encoder and decoder.

    ``ref_feature``: 1/2-scale reconstruction feature of the previous
    frame; ``motion_state``: 1/4-scale motion-decoder intermediate;
    ``motion_prior`` / ``residual_prior``: previous dequantized latents at
    1/16 scale.  A fresh or refreshed buffer re-derives ``ref_feature``
    from the last reconstruction through a feature adaptor and zeroes the
    other three.
    """

    ref_feature: torch.Tensor
    motion_state: torch.Tensor
    motion_prior: torch.Tensor
    residual_prior: torch.Tensor

    @classmethod
    def from_reconstruction(cls, cfg: CodecConfig, packed_recon: torch.Tensor,
                            adaptor: FeatureAdaptor) -> "DecodedBuffer":
        if packed_recon.ndim != 4 or packed_recon.shape[1] != 6:
            raise InvalidInputError("expected packed tensor [1, 6, H/2, W/2]")
        hh, hw = packed_recon.shape[2], packed_recon.shape[3]
        with torch.no_grad():
            ref = adaptor(packed_recon)
        kw = dict(dtype=packed_recon.dtype, device=packed_recon.device)
        return cls(
            ref_feature=ref,
            motion_state=torch.zeros(1, cfg.motion_inter_channels, hh // 2, hw // 2, **kw),
            motion_prior=torch.zeros(1, cfg.motion_latent, hh // 8, hw // 8, **kw),
            residual_prior=torch.zeros(1, cfg.residual_latent, hh // 8, hw // 8, **kw),
        )


# ---------------------------------------------------------------------------
# weight archives: flat named-array files (name -> row-major float array)


def save_weights(model: VideoModel, path: str | Path,
                 metadata: dict | None = None) -> None:
    arrays = {name: tensor.detach().cpu().numpy()
              for name, tensor in model.state_dict().items()}
    meta = {"config": dataclasses.asdict(model.cfg)}
    if metadata:
        meta.update(metadata)
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def load_weights(model: VideoModel, path: str | Path) -> dict:
    """Load an archive saved by :func:`save_weights`; shapes must match.

    Returns the stored metadata dictionary.
    """

    with np.load(path) as archive:
        meta = {}
        state = {}
        for name in archive.files:
            if name == "__meta__":
                meta = json.loads(archive[name].tobytes().decode())
                continue
            state[name] = torch.from_numpy(archive[name].copy())
    own = model.state_dict()
    if set(own) != set(state):
        missing = sorted(set(own) ^ set(state))
        raise InvalidInputError(f"weight archive mismatch near {missing[:4]}")
    for name, tensor in state.items():
        if tuple(own[name].shape) != tuple(tensor.shape):
            raise InvalidInputError(f"shape mismatch for {name}")
    model.load_state_dict(state)
    return meta

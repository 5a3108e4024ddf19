"""Flow estimation, resolution selection, motion transforms, alignment."""

import math

import numpy as np
import pytest
import torch

from nvc.context import GroupwiseAlign, warp_bilinear
from nvc.core import CodecConfig, Frame, pack_yuv420, pad_frame
from nvc.data import SequenceSpec, make_sequence
from nvc.model import build_model
from nvc.motion import (
    MotionFeatureTransform,
    select_estimation_resolution,
    upsample_flow,
)

from conftest import random_frame


# ---------------------------------------------------------------------------
# flow network


def test_flow_shape_and_finite(model):
    x = torch.rand(1, 6, 16, 16)
    y = torch.rand(1, 6, 16, 16)
    flow = model.flow_net(x, y)
    assert flow.shape == (1, 2, 32, 32)
    assert torch.isfinite(flow).all()


def test_flow_deterministic(model):
    x = torch.rand(2, 6, 8, 8)
    y = torch.rand(2, 6, 8, 8)
    with torch.no_grad():
        a = model.flow_net(x, y)
        b = model.flow_net(x, y)
    assert torch.equal(a, b)


# ---------------------------------------------------------------------------
# estimation-resolution selection


def test_identical_frames_full_resolution(cfg):
    f = pad_frame(random_frame(np.random.default_rng(0), 32, 32))
    _, _, down = select_estimation_resolution(f, f.copy(), cfg)
    assert down is False


def test_infinite_margin_always_full(cfg):
    rng = np.random.default_rng(1)
    a = pad_frame(random_frame(rng, 32, 32))
    b = pad_frame(random_frame(rng, 32, 32))
    inf_cfg = CodecConfig(downsample_margin_db=math.inf)
    _, _, down = select_estimation_resolution(a, b, inf_cfg)
    assert down is False
    assert cfg.downsample_margin_db == 3.0  # default stays finite


def test_large_motion_selects_downsampled(cfg):
    # High-frequency checkerboard shifted by one pixel: at full resolution
    # the pair is anti-correlated, after blurring both collapse to flat
    # gray, so the downsampled PSNR wins by far more than the margin.
    h = w = 64
    base = np.indices((h, w)).sum(axis=0) % 2
    a_y = (base * 255).astype(np.uint16)
    b_y = ((1 - base) * 255).astype(np.uint16)
    c = np.full((h // 2, w // 2), 128, dtype=np.uint16)
    a = Frame(a_y, c.copy(), c.copy())
    b = Frame(b_y, c.copy(), c.copy())
    ca, cb, down = select_estimation_resolution(a, b, cfg)
    assert down is True
    assert ca.data.shape == (6, h // 4, w // 4)
    # sanity-check the two PSNR readings through the public metric path
    from nvc.core import plane_psnr
    full = plane_psnr(a.y, b.y, 255)
    assert full < 10.0  # anti-correlated at full resolution


def test_upsample_flow_scales_values():
    flow = torch.ones(2, 4, 4)
    up = upsample_flow(type("MF", (), {"flow": flow, "scale": 2})(), 2)
    assert up.flow.shape == (2, 8, 8)
    assert torch.allclose(up.flow, torch.full((2, 8, 8), 2.0))


# ---------------------------------------------------------------------------
# motion feature transform


def test_motion_feature_channel_count(cfg):
    t = MotionFeatureTransform(cfg)
    out = t(torch.randn(1, 2, 32, 32))
    assert out.shape == (1, 2 * cfg.groups * cfg.flows_per_group, 16, 16)
    assert torch.isfinite(out).all()


def test_motion_feature_zero_flow_zero_bias(cfg):
    t = MotionFeatureTransform(cfg)
    with torch.no_grad():
        t.conv.bias.zero_()
    out = t(torch.zeros(1, 2, 32, 32))
    assert torch.equal(out, torch.zeros_like(out))


# ---------------------------------------------------------------------------
# group-wise alignment


def _warp_oracle(feat: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Scalar bilinear warp with border clamping, written independently
    of the tensor implementation: out[y, x] = feat(y + dy, x + dx)."""

    h, w = feat.shape
    out = np.zeros_like(feat, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            sx = min(max(x + flow[0, y, x], 0.0), w - 1.0)
            sy = min(max(y + flow[1, y, x], 0.0), h - 1.0)
            x0, y0 = int(np.floor(sx)), int(np.floor(sy))
            x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
            fx, fy = sx - x0, sy - y0
            top = feat[y0, x0] * (1 - fx) + feat[y0, x1] * fx
            bot = feat[y1, x0] * (1 - fx) + feat[y1, x1] * fx
            out[y, x] = top * (1 - fy) + bot * fy
    return out


def test_single_group_matches_scalar_oracle():
    rng = np.random.default_rng(3)
    feat = rng.standard_normal((7, 9))
    flow = rng.uniform(-3, 3, (2, 7, 9))
    align = GroupwiseAlign(1, 1, 1).init_group_identity_().double()
    got = align(torch.from_numpy(feat).view(1, 1, 7, 9),
                torch.from_numpy(flow).view(1, 2, 7, 9))
    want = _warp_oracle(feat, flow)
    assert np.abs(got[0, 0].detach().numpy() - want).max() < 1e-6


def test_integer_flow_exact_shift():
    # flow (1, 0) on a ramp: output[y, x] = input[y, x+1] except at the
    # right border (clamped)
    feat = torch.arange(36, dtype=torch.float32).view(1, 1, 6, 6)
    flow = torch.zeros(1, 2, 6, 6)
    flow[:, 0] = 1.0
    align = GroupwiseAlign(1, 1, 1).init_group_identity_()
    out = align(feat, flow)
    assert torch.equal(out[0, 0, :, :5], feat[0, 0, :, 1:])
    assert torch.equal(out[0, 0, :, 5], feat[0, 0, :, 5])


def test_zero_flow_identity_after_group_init():
    rng = torch.Generator().manual_seed(4)
    feat = torch.randn(1, 8, 5, 5, generator=rng)
    align = GroupwiseAlign(8, 4, 2).init_group_identity_()
    flow = torch.zeros(1, 2 * 4 * 2, 5, 5)
    out = align(feat, flow)
    assert torch.allclose(out, feat, atol=1e-6)


def test_group_flow_channel_layout():
    # flow j of group i lives at channels 2*(i*k+j), 2*(i*k+j)+1; moving
    # only group 1's flow must leave group 0's channels untouched.
    align = GroupwiseAlign(4, 2, 1).init_group_identity_()
    feat = torch.arange(4 * 16, dtype=torch.float32).view(1, 4, 4, 4)
    flow = torch.zeros(1, 4, 4, 4)
    flow[:, 2] = 1.0  # group 1, dx
    out = align(feat, flow)
    assert torch.equal(out[:, :2], feat[:, :2])
    assert not torch.equal(out[:, 2:], feat[:, 2:])


def test_align_channel_mismatch_rejected():
    align = GroupwiseAlign(4, 2, 2)
    with pytest.raises(ValueError):
        align(torch.zeros(1, 4, 4, 4), torch.zeros(1, 6, 4, 4))


def test_warp_bilinear_batch_consistency():
    rng = torch.Generator().manual_seed(5)
    feat = torch.randn(2, 3, 6, 6, generator=rng)
    flow = torch.randn(2, 2, 6, 6, generator=rng)
    both = warp_bilinear(feat, flow)
    one = warp_bilinear(feat[1:], flow[1:])
    assert torch.allclose(both[1:], one, atol=1e-7)


# ---------------------------------------------------------------------------
# end-to-end motion path shape contract


def test_motion_branch_shapes(model, cfg):
    seq = make_sequence(SequenceSpec("pan", 32, 32, 2, seed=9))
    cur, ref = pad_frame(seq[1]), pad_frame(seq[0])
    cur_packed = pack_yuv420(cur).data.unsqueeze(0)
    with torch.no_grad():
        flow = model.flow_net(cur_packed, pack_yuv420(ref).data.unsqueeze(0))
        mf = model.motion_feat_transform(flow)
        feat = model.feature_extractor(cur_packed)
        half, quarter = model.multiscale(feat)
    assert flow.shape == (1, 2, 32, 32)
    assert mf.shape == (1, 16, 16, 16)
    assert feat.shape == (1, cfg.channels, 16, 16)
    assert half.shape == (1, cfg.channels, 16, 16)
    assert quarter.shape == (1, cfg.channels, 8, 8)

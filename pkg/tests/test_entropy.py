"""Entropy parameter heads, checkerboard causality, skip thresholds."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from nvc.core import CodecConfig, SegmentOrderError
from nvc.entropy import (
    CHECKERBOARD_PHASES,
    CheckerboardTracker,
    FactorizedModel,
    MotionEntropyModel,
    ResidualEntropyModel,
    adaptive_dequantize,
    adaptive_quantize,
    apply_skip,
    build_skip_mask,
    checkerboard_mask,
    compute_skip_threshold,
    gaussian_bits_proxy,
    positive_sigma,
    positive_step,
    segments_before_mask,
)


@pytest.fixture(scope="module")
def small_cfg():
    return CodecConfig(channels=8, groups=2, motion_latent=8,
                       residual_latent=8, hyper_channels=4,
                       spatial_prior_channels=4, motion_inter_channels=8)


# ---------------------------------------------------------------------------
# scale/step mappings and the quantization convention


def test_positive_sigma_at_zero():
    assert positive_sigma(torch.zeros(3)).allclose(
        torch.full((3,), math.log(2.0)), atol=1e-6)  # softplus(0) = ln 2


def test_positive_step_at_zero():
    assert positive_step(torch.zeros(3)).allclose(torch.ones(3))


def test_positive_maps_floored():
    assert positive_sigma(torch.tensor([-100.0])).item() == pytest.approx(1e-4)
    assert positive_step(torch.tensor([-100.0])).item() == pytest.approx(0.05)


def test_adaptive_quantize_unit_step():
    q = adaptive_quantize(torch.tensor([2.3]), torch.tensor([1.0]))
    assert q.item() == 2.0
    assert adaptive_dequantize(q, torch.tensor([1.0])).item() == 2.0


def test_adaptive_quantize_half_step():
    # hand evaluation: round(2.3 / 0.5) = round(4.6) = 5; 5 * 0.5 = 2.5
    q = adaptive_quantize(torch.tensor([2.3]), torch.tensor([0.5]))
    assert q.item() == 5.0
    assert adaptive_dequantize(q, torch.tensor([0.5])).item() == 2.5


@given(st.floats(-50, 50, allow_nan=False), st.floats(0.05, 4.0))
def test_quantize_error_bound(value, step):
    v = torch.tensor([value], dtype=torch.float64)
    s = torch.tensor([step], dtype=torch.float64)
    back = adaptive_dequantize(adaptive_quantize(v, s), s)
    assert abs(back.item() - value) <= step / 2 + 1e-9


def test_bits_proxy_matches_closed_form():
    v = torch.tensor([0.7])
    mu = torch.tensor([0.2])
    sigma = torch.tensor([1.3])
    from scipy.stats import norm
    want = -math.log2(norm.cdf((0.7 - 0.2 + 0.5) / 1.3)
                      - norm.cdf((0.7 - 0.2 - 0.5) / 1.3))
    assert gaussian_bits_proxy(v, mu, sigma).item() == pytest.approx(want, rel=1e-5)


def test_bits_proxy_nonnegative_and_monotone_in_distance():
    mu = torch.zeros(5)
    sigma = torch.ones(5)
    vals = torch.tensor([0.0, 1.0, 2.0, 3.0, 4.0])
    bits = gaussian_bits_proxy(vals, mu, sigma)
    assert (bits >= 0).all()
    assert (bits.diff() > 0).all()


# ---------------------------------------------------------------------------
# factorized model


def test_factorized_coding_params_broadcast():
    fm = FactorizedModel(3)
    with torch.no_grad():
        fm.loc.copy_(torch.tensor([0.0, 1.0, -1.0]))
    mu, sigma = fm.coding_params(torch.Size([1, 3, 2, 2]))
    assert mu.shape == (1, 3, 2, 2)
    assert torch.equal(mu[0, 1], torch.ones(2, 2))
    assert (sigma > 0).all()


def test_factorized_bits_proxy_shape():
    fm = FactorizedModel(4)
    bits = fm.bits_proxy(torch.randn(2, 4, 3, 3))
    assert bits.shape == (2, 4, 3, 3)
    assert (bits >= 0).all()


# ---------------------------------------------------------------------------
# checkerboard


def test_phase_order():
    assert CHECKERBOARD_PHASES == ((0, 0), (1, 1), (0, 1), (1, 0))


def test_mask_counts_4x4():
    for seg in range(4):
        assert int(checkerboard_mask(4, 4, seg).sum()) == 4
    union = torch.zeros(4, 4, dtype=torch.bool)
    for seg in range(4):
        m = checkerboard_mask(4, 4, seg)
        assert not (union & m).any()  # disjoint
        union |= m
    assert union.all()


def test_segments_before_mask_is_prefix_union():
    for seg in range(4):
        want = torch.zeros(6, 8, dtype=torch.bool)
        for i in range(seg):
            want |= checkerboard_mask(6, 8, i)
        assert torch.equal(segments_before_mask(6, 8, seg), want)


def test_odd_sized_masks_cover_grid():
    union = torch.zeros(5, 7, dtype=torch.bool)
    for seg in range(4):
        union |= checkerboard_mask(5, 7, seg)
    assert union.all()


def test_tracker_enforces_order():
    tr = CheckerboardTracker()
    tr.advance(0)
    with pytest.raises(SegmentOrderError):
        tr.advance(2)
    tr.advance(1)
    tr.advance(2)
    tr.advance(3)
    assert tr.complete


def test_segment_params_zero_case(small_cfg):
    # zero priors and zero biases: mu = 0, sigma = softplus(0) everywhere
    model = ResidualEntropyModel(small_cfg)
    with torch.no_grad():
        for m in model.modules():
            if isinstance(m, torch.nn.Conv2d) and m.bias is not None:
                m.bias.zero_()
    yl, sp = small_cfg.residual_latent, small_cfg.spatial_prior_channels
    p = model.segment_params(0, torch.zeros(1, 32, 4, 4),
                             torch.zeros(1, yl, 4, 4), torch.zeros(1, sp, 4, 4),
                             torch.zeros(1, yl, 4, 4))
    assert torch.equal(p.mu, torch.zeros_like(p.mu))
    assert torch.allclose(p.sigma, torch.full_like(p.sigma, math.log(2.0)))


def test_segment_causality_perturbation(small_cfg):
    # perturbing a phase-3 sample leaves phase-0/1/2 parameters bit-exact
    torch.manual_seed(0)
    model = ResidualEntropyModel(small_cfg)
    yl, sp = small_cfg.residual_latent, small_cfg.spatial_prior_channels
    hyper = torch.randn(1, 32, 4, 4)
    rp = torch.randn(1, yl, 4, 4)
    spr = torch.randn(1, sp, 4, 4)
    latent = torch.randn(1, yl, 4, 4)
    poked = latent.clone()
    pr, pc = CHECKERBOARD_PHASES[3]
    poked[0, 2, pr, pc] += 100.0
    with torch.no_grad():
        for seg in range(3):
            a = model.segment_params(seg, hyper, rp, spr, latent)
            b = model.segment_params(seg, hyper, rp, spr, poked)
            assert torch.equal(a.mu, b.mu)
            assert torch.equal(a.sigma, b.sigma)
        c = model.segment_params(3, hyper, rp, spr, latent)
        d = model.segment_params(3, hyper, rp, spr, poked)
        assert torch.equal(c.mu, d.mu)  # own phase is masked out too


def test_segment_params_use_earlier_segments(small_cfg):
    torch.manual_seed(1)
    model = ResidualEntropyModel(small_cfg)
    yl, sp = small_cfg.residual_latent, small_cfg.spatial_prior_channels
    hyper = torch.randn(1, 32, 4, 4)
    rp = torch.randn(1, yl, 4, 4)
    spr = torch.randn(1, sp, 4, 4)
    latent = torch.randn(1, yl, 4, 4)
    poked = latent.clone()
    pr, pc = CHECKERBOARD_PHASES[0]
    poked[0, 0, pr, pc] += 1.0
    with torch.no_grad():
        a = model.segment_params(1, hyper, rp, spr, latent)
        b = model.segment_params(1, hyper, rp, spr, poked)
    assert not torch.equal(a.mu, b.mu)


# ---------------------------------------------------------------------------
# hyper geometry


def test_motion_params_crop_to_odd_latent(small_cfg):
    model = MotionEntropyModel(small_cfg)
    ml, yl = small_cfg.motion_latent, small_cfg.residual_latent
    mp = torch.zeros(1, ml, 5, 7)
    rp = torch.zeros(1, yl, 5, 7)
    z = model.hyper(torch.zeros(1, ml, 5, 7), mp, rp)
    assert z.shape[2:] == (2, 2)  # two ceil-halvings: 5 -> 3 -> 2, 7 -> 4 -> 2
    p = model.params(z, mp, rp)
    assert p.mu.shape == (1, ml, 5, 7)
    assert p.sigma.shape == (1, ml, 5, 7)
    assert p.step.shape == (1, ml, 5, 7)


def test_residual_hyper_features_crop(small_cfg):
    model = ResidualEntropyModel(small_cfg)
    feat = model.hyper_features(torch.zeros(1, small_cfg.hyper_channels, 2, 2),
                                (5, 7))
    assert feat.shape == (1, 32, 5, 7)


# ---------------------------------------------------------------------------
# skip thresholds


def test_threshold_at_final_frame():
    assert compute_skip_threshold(10, 10, 0.25) == pytest.approx(0.25, abs=1e-12)


def test_threshold_at_start():
    # direct evaluation: beta * e^{-0.3}
    got = compute_skip_threshold(0, 8, 1.0)
    assert got == pytest.approx(math.exp(-0.3), abs=1e-9)
    assert got == pytest.approx(0.7408182206817179, abs=1e-9)


@given(st.integers(0, 64), st.integers(1, 64),
       st.floats(0.0, 10.0, allow_nan=False))
@settings(max_examples=200)
def test_threshold_direct_evaluation(t, n, beta):
    got = compute_skip_threshold(t, n, beta)
    want = beta * math.exp((t / n - 1.0) * 0.3)
    assert got == pytest.approx(want, rel=1e-12, abs=1e-9)


def test_threshold_monotone_in_t():
    etas = [compute_skip_threshold(t, 16, 0.5) for t in range(17)]
    assert all(a < b for a, b in zip(etas, etas[1:]))


def test_threshold_extremes():
    assert compute_skip_threshold(3, 8, 0.0) == 0.0
    assert compute_skip_threshold(3, 8, math.inf) == math.inf
    with pytest.raises(ValueError):
        compute_skip_threshold(-1, 8, 0.5)
    with pytest.raises(ValueError):
        compute_skip_threshold(0, 0, 0.5)


def test_skip_mask_and_substitution():
    sigma = torch.tensor([0.01, 0.5, 0.001, 2.0])
    mask = build_skip_mask(sigma, 0.1)
    assert mask.tolist() == [True, False, True, False]
    out = apply_skip(torch.tensor([5.0, 6.0, 7.0, 8.0]),
                     torch.tensor([0.0, 0.0, 0.0, 0.0]), mask)
    assert out.tolist() == [0.0, 6.0, 0.0, 8.0]
    assert not build_skip_mask(sigma, 0.0).any()
    assert build_skip_mask(sigma, math.inf).all()

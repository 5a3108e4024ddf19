"""Multi-scale reference pyramid and confidence-weighted context mining."""

import torch

from nvc.context import ContextMiner, MultiScaleExtractor, scale_flow
from nvc.layers import ResidualBlock, delta_init_


def _zero_biases(module: torch.nn.Module) -> None:
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, torch.nn.Conv2d) and m.bias is not None:
                m.bias.zero_()


def test_pyramid_shapes():
    ex = MultiScaleExtractor(32)
    half, quarter = ex(torch.randn(1, 32, 16, 16))
    assert half.shape == (1, 32, 16, 16)
    assert quarter.shape == (1, 32, 8, 8)


def test_pyramid_zero_in_zero_out():
    ex = MultiScaleExtractor(8)
    _zero_biases(ex)
    half, quarter = ex(torch.zeros(1, 8, 8, 8))
    assert torch.equal(half, torch.zeros_like(half))
    assert torch.equal(quarter, torch.zeros_like(quarter))


def test_pyramid_finite():
    ex = MultiScaleExtractor(8)
    half, quarter = ex(torch.randn(2, 8, 8, 8) * 10)
    assert torch.isfinite(half).all() and torch.isfinite(quarter).all()


def test_scale_flow_halving_convention():
    # constant flow (2, 2) at one scale becomes (1, 1) at the next
    flow = torch.ones(1, 2, 8, 8) * 2.0
    down = scale_flow(flow, 0.5)
    assert down.shape == (1, 2, 4, 4)
    assert torch.allclose(down, torch.ones(1, 2, 4, 4))


def test_scale_flow_doubles_values_up():
    flow = torch.ones(1, 2, 4, 4)
    up = scale_flow(flow, 2.0)
    assert up.shape == (1, 2, 8, 8)
    assert torch.allclose(up, torch.full((1, 2, 8, 8), 2.0))


def test_zero_confidence_nulls_aligned_path():
    # With conf == 0 the aligned contribution is multiplied away, so the
    # contexts cannot depend on the reference content.
    torch.manual_seed(0)
    miner = ContextMiner(8, 2, 2)
    mf = torch.randn(1, 8, 8, 8)
    zeros = torch.zeros(1, 8, 8, 8), torch.zeros(1, 8, 4, 4)
    with torch.no_grad():
        a = miner(torch.randn(1, 8, 8, 8), torch.randn(1, 8, 4, 4), mf, *zeros)
        b = miner(torch.randn(1, 8, 8, 8) * 5, torch.randn(1, 8, 4, 4) * 5, mf, *zeros)
    assert torch.allclose(a[0], b[0], atol=1e-6)
    assert torch.allclose(a[1], b[1], atol=1e-6)


def test_identity_path_reproduces_reference():
    # conf == 1, zero flow, identity-initialized refinement: the 1/2-scale
    # context equals the 1/2-scale reference to numerical precision.
    torch.manual_seed(1)
    miner = ContextMiner(8, 2, 2).init_identity_()
    ref_half = torch.randn(1, 8, 8, 8)
    ref_quarter = torch.randn(1, 8, 4, 4)
    mf = torch.zeros(1, 2 * 2 * 2, 8, 8)
    ones_h = torch.ones(1, 8, 8, 8)
    ones_q = torch.ones(1, 8, 4, 4)
    with torch.no_grad():
        ctx_half, _ = miner(ref_half, ref_quarter, mf, ones_h, ones_q)
    assert torch.allclose(ctx_half, ref_half, atol=1e-5)


def test_miner_output_shapes():
    miner = ContextMiner(32, 4, 2)
    ctx_half, ctx_quarter = miner(
        torch.randn(1, 32, 16, 16), torch.randn(1, 32, 8, 8),
        torch.randn(1, 16, 16, 16),
        torch.rand(1, 32, 16, 16), torch.rand(1, 32, 8, 8))
    assert ctx_half.shape == (1, 32, 16, 16)
    assert ctx_quarter.shape == (1, 32, 8, 8)


def test_delta_init_identity():
    conv = delta_init_(torch.nn.Conv2d(4, 4, 3, padding=1))
    x = torch.randn(1, 4, 6, 6)
    assert torch.equal(conv(x), x)


def test_residual_block_identity_init():
    block = ResidualBlock(4).init_identity_()
    x = torch.randn(1, 4, 6, 6)
    assert torch.equal(block(x), x)

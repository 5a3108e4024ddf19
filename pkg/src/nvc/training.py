"""Training curriculum: progressive stages, hierarchical scale training,
group-wise cascaded unrolling, reference-quality augmentation, and
validation-based checkpoint scoring.

The training forward mirrors the coding path but stays differentiable:
rate terms always use the additive-uniform-noise entropy proxy, while the
tensors fed to the decoder side use straight-through rounding by default
("ste") or the same noise ("noise", used by gradient checks so every loss
is smooth).  Inference-only machinery (skip thresholds, resolution
selection) is deliberately absent here.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import torch

from .codec import CodingContext, encode_frame, make_header
from .core import Frame, InvalidInputError, pack_yuv420
from .entropy import checkerboard_mask, gaussian_bits_proxy
from .model import DecodedBuffer, VideoModel
from .quality import quality_index, quality_weight, should_refresh

# 6:1:1 Y/U/V weighting spread over the four luma phases of a packed frame;
# the weighted channel mean equals (6*MSE_Y + MSE_U + MSE_V) / 8.
PLANE_WEIGHTS = (1.5, 1.5, 1.5, 1.5, 1.0, 1.0)

GRAD_CLIP = 1.0   # global-norm clip applied at every optimizer step

# Unroll length for the quality-bank stage: two full quality periods.
_BANK_UNROLL = 8

# Warm-cascade interleave for the joint stage.  Pair contexts always start
# from a fresh reference, so the temporal entropy priors are all zeros
# there; every few steps a short propagated cascade trains the
# conditioning heads (and, via the period, the refresh adaptor) on the
# state they actually see at encode time.
_WARM_EVERY = 4
_WARM_LEN = 6
_WARM_REFRESH = 4

# Tiny L1 pull on pre-quantization latent amplitude.  Rating the
# straight-through value leaves sub-step amplitude a flat direction; this
# breaks the tie toward silence so content with nothing to transmit decays
# to exact zeros instead of parking just past a quantization boundary.
AMP_TIEBREAK = 0.01


def _guarded_step(opt: torch.optim.Optimizer, params) -> bool:
    """Clip gradients and step, skipping the step on non-finite gradients.

    `clip_grad_norm_` turns an inf/NaN total norm into NaN parameter
    updates (inf * 0 scaling), which permanently poisons the model; a
    spiky batch is cheaper to drop than to recover from.
    """

    total = torch.nn.utils.clip_grad_norm_(params, GRAD_CLIP)
    if torch.isfinite(total):
        opt.step()
        stepped = True
    else:
        stepped = False
    opt.zero_grad(set_to_none=True)
    return stepped


def packed_distortion(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Compound-PSNR-aligned MSE between packed tensors [B, 6, h, w]."""

    w = torch.tensor(PLANE_WEIGHTS, dtype=a.dtype, device=a.device) / 8.0
    per_channel = ((a - b) ** 2).mean(dim=(0, 2, 3))
    return (per_channel * w).sum()


@dataclass
class LossBreakdown:
    motion_distortion: torch.Tensor
    recon_distortion: torch.Tensor
    motion_rate: torch.Tensor
    residual_rate: torch.Tensor
    total: torch.Tensor
    amp: torch.Tensor | None = None


def _noise_like(x: torch.Tensor, rng: torch.Generator | None) -> torch.Tensor:
    n = torch.empty_like(x)
    n.uniform_(-0.5, 0.5, generator=rng)
    return n


def _quantize_pair(x: torch.Tensor, step: torch.Tensor | None, mode: str,
                   rng: torch.Generator | None) -> tuple[torch.Tensor, torch.Tensor]:
    """(decoder-side feed, rate-side value) for one latent.

    "noise" feeds additive uniform noise to both sides; "ste" feeds the
    decoder straight-through rounding but rates the noisy value; "hard"
    rates the straight-through value as well.  Rating the noisy value
    charges amplitude before it ever crosses a quantization boundary,
    which at very low rates drives latents into a dead all-zeros
    equilibrium (cheap to code, so nothing pulls them back); "hard" rates
    what the coder would actually see and leaves sub-step amplitude free.
    """

    s = 1.0 if step is None else step
    if mode == "noise":
        noisy = x + s * _noise_like(x, rng)
        return noisy, noisy
    if mode not in ("ste", "hard"):
        raise InvalidInputError(f"unknown quantize mode {mode!r}")
    hard = torch.round(x / s) * s
    feed = x + (hard - x).detach()
    if mode == "hard":
        return feed, feed
    return feed, x + s * _noise_like(x, rng)


def initial_buffer(model: VideoModel, ref_packed: torch.Tensor,
                   adaptor=None) -> DecodedBuffer:
    """Fresh temporal state derived from a packed reference frame."""

    return DecodedBuffer.from_reconstruction(
        model.cfg, ref_packed, adaptor if adaptor is not None else model.adaptor_intra)


def detach_buffer(buffer: DecodedBuffer) -> DecodedBuffer:
    return DecodedBuffer(buffer.ref_feature.detach(),
                         buffer.motion_state.detach(),
                         buffer.motion_prior.detach(),
                         buffer.residual_prior.detach())


def _grad_buffer(model: VideoModel, ref_packed: torch.Tensor, adaptor) -> DecodedBuffer:
    """Like :func:`initial_buffer` but keeps the adaptor differentiable."""

    hh, hw = ref_packed.shape[2], ref_packed.shape[3]
    cfg = model.cfg
    kw = dict(dtype=ref_packed.dtype, device=ref_packed.device)
    b = ref_packed.shape[0]
    return DecodedBuffer(
        ref_feature=adaptor(ref_packed),
        motion_state=torch.zeros(b, cfg.motion_inter_channels, hh // 2, hw // 2, **kw),
        motion_prior=torch.zeros(b, cfg.motion_latent, hh // 8, hw // 8, **kw),
        residual_prior=torch.zeros(b, cfg.residual_latent, hh // 8, hw // 8, **kw),
    )


@dataclass
class TrainStepOut:
    recon_packed: torch.Tensor | None
    pred_packed: torch.Tensor | None
    motion_rate: torch.Tensor
    residual_rate: torch.Tensor | None
    buffer: DecodedBuffer | None
    amp: torch.Tensor | None = None  # mean |latent| across coded tensors


def forward_inter_train(model: VideoModel, cur_packed: torch.Tensor,
                        prev_packed: torch.Tensor, buffer: DecodedBuffer,
                        level: int, *, mode: str = "hard",
                        rng: torch.Generator | None = None,
                        flow_fn=None, need_pred: bool = False,
                        run_residual: bool = True) -> TrainStepOut:
    """Differentiable one-frame coding pass.

    ``prev_packed`` is only used for motion estimation (flow is always
    estimated between originals); temporal conditioning comes from
    ``buffer``.  Rates are totals in bits per padded luma pixel.
    """

    cfg = model.cfg
    bank = model.scale_bank
    pixels = cur_packed.shape[0] * 4 * cur_packed.shape[2] * cur_packed.shape[3]

    flow = (flow_fn or model.flow_net)(cur_packed, prev_packed)
    motion_feat = model.motion_feat_transform(flow)
    cur_feat = model.feature_extractor(cur_packed)
    ref_half, ref_quarter = model.multiscale(buffer.ref_feature)
    aligned = model.miner.align_half(ref_half, motion_feat)
    m = model.motion_encoder(motion_feat, cur_feat, ref_half, aligned,
                             buffer.motion_state)
    m_s = bank.apply("motion_enc_latent", m, level)
    mp = bank.apply("motion_temporal_prior", buffer.motion_prior, level)
    rp = bank.apply("residual_temporal_prior", buffer.residual_prior, level)

    z_m = model.motion_entropy.hyper(m_s, mp, rp)
    z_m_feed, z_m_noisy = _quantize_pair(z_m, None, mode, rng)
    bits_m = model.motion_entropy.factorized.bits_proxy(z_m_noisy).sum()
    params = model.motion_entropy.params(z_m_feed, mp, rp)
    m_feed, m_noisy = _quantize_pair(m_s, params.step, mode, rng)
    bits_m = bits_m + gaussian_bits_proxy(m_noisy, params.mu, params.sigma,
                                          params.step).sum()
    motion_rate = bits_m / pixels

    amp = m_s.abs().mean() + z_m.abs().mean()

    dec = model.motion_decoder(bank.apply("motion_dec_latent", m_feed, level))
    ctx_half, ctx_quarter = model.miner(ref_half, ref_quarter, dec.motion_feat,
                                        dec.conf_half, dec.conf_quarter)
    pred = model.prediction_head(ctx_half) if need_pred else None
    if not run_residual:
        return TrainStepOut(None, pred, motion_rate, None, None, amp)

    y = model.residual_encoder(cur_feat, ctx_half, ctx_quarter)
    y_s = bank.apply("residual_enc_latent", y, level)
    sp = bank.apply("residual_spatial_prior", model.spatial_prior(ctx_quarter),
                    level)
    z_y = model.residual_entropy.hyper(y_s, rp, sp)
    z_y_feed, z_y_noisy = _quantize_pair(z_y, None, mode, rng)
    bits_r = model.residual_entropy.factorized.bits_proxy(z_y_noisy).sum()
    lh, lw = y_s.shape[2], y_s.shape[3]
    hyper_feat = model.residual_entropy.hyper_features(z_y_feed, (lh, lw))
    y_feed, y_noisy = _quantize_pair(y_s, None, mode, rng)
    for seg in range(4):
        p = model.residual_entropy.segment_params(seg, hyper_feat, rp, sp, y_feed)
        pm = checkerboard_mask(lh, lw, seg, device=y_s.device)
        seg_bits = gaussian_bits_proxy(y_noisy, p.mu, p.sigma)
        bits_r = bits_r + seg_bits[:, :, pm].sum()
    residual_rate = bits_r / pixels

    amp = amp + y_s.abs().mean() + z_y.abs().mean()

    rdec = model.residual_decoder(bank.apply("residual_dec_latent", y_feed, level),
                                  ctx_quarter)
    out_feat, out_packed = model.generator(rdec.feat, rdec.gate, ctx_half)
    new_buffer = DecodedBuffer(out_feat, dec.inter, m_feed, y_feed)
    return TrainStepOut(out_packed, pred, motion_rate, residual_rate, new_buffer,
                        amp)


# ---------------------------------------------------------------------------
# the five losses


def loss_stage1(model: VideoModel, ref_packed, cur_packed, lam: float, *,
                mode: str = "hard", rng=None, flow_fn=None,
                adaptor=None) -> LossBreakdown:
    """Motion-only objective: lam * D_pred + R_motion."""

    buffer = _grad_buffer(model, ref_packed, adaptor or model.adaptor_intra)
    out = forward_inter_train(model, cur_packed, ref_packed, buffer, 1,
                              mode=mode, rng=rng, flow_fn=flow_fn,
                              need_pred=True, run_residual=False)
    d_m = packed_distortion(out.pred_packed, cur_packed)
    zero = torch.zeros((), dtype=d_m.dtype, device=d_m.device)
    total = lam * d_m + out.motion_rate + AMP_TIEBREAK * out.amp
    return LossBreakdown(d_m, zero, out.motion_rate, zero, total, out.amp)


def _pair_breakdown(model, ref_packed, cur_packed, lam, t, *, mode, rng,
                    flow_fn, adaptor) -> LossBreakdown:
    buffer = _grad_buffer(model, ref_packed, adaptor or model.adaptor_intra)
    out = forward_inter_train(model, cur_packed, ref_packed, buffer,
                              quality_index(t, model.cfg.quality_levels),
                              mode=mode, rng=rng, flow_fn=flow_fn)
    d_r = packed_distortion(out.recon_packed, cur_packed)
    zero = torch.zeros((), dtype=d_r.dtype, device=d_r.device)
    return LossBreakdown(zero, d_r, out.motion_rate, out.residual_rate,
                         total=zero, amp=out.amp)  # caller assembles the total


def loss_stage2(model, ref_packed, cur_packed, lam: float, *, mode="hard",
                rng=None, flow_fn=None, adaptor=None) -> LossBreakdown:
    """Residual-only objective: lam * D_recon + R_residual."""

    br = _pair_breakdown(model, ref_packed, cur_packed, lam, 1, mode=mode,
                         rng=rng, flow_fn=flow_fn, adaptor=adaptor)
    br.total = (lam * br.recon_distortion + br.residual_rate
                + AMP_TIEBREAK * br.amp)
    return br


def loss_stage3(model, ref_packed, cur_packed, lam: float, *, mode="hard",
                rng=None, flow_fn=None, adaptor=None) -> LossBreakdown:
    """Joint objective: lam * D_recon + R_motion + R_residual."""

    br = _pair_breakdown(model, ref_packed, cur_packed, lam, 1, mode=mode,
                         rng=rng, flow_fn=flow_fn, adaptor=adaptor)
    br.total = (lam * br.recon_distortion + br.motion_rate + br.residual_rate
                + AMP_TIEBREAK * br.amp)
    return br


def loss_hierarchical(model, ref_packed, cur_packed, lam: float, t: int, *,
                      mode="hard", rng=None, flow_fn=None,
                      adaptor=None) -> LossBreakdown:
    """Cyclic-weight objective: w_{t mod R} * lam * D + R_m + R_r."""

    br = _pair_breakdown(model, ref_packed, cur_packed, lam, t, mode=mode,
                         rng=rng, flow_fn=flow_fn, adaptor=adaptor)
    w = quality_weight(t)
    br.total = (w * lam * br.recon_distortion + br.motion_rate
                + br.residual_rate + AMP_TIEBREAK * br.amp)
    return br


def loss_cascaded(model, frames_packed: torch.Tensor, lam: float,
                  subgroups: tuple[int, ...], *, mode="hard", rng=None,
                  flow_fn=None, refresh_period: int = 0,
                  ) -> tuple[torch.Tensor, list[LossBreakdown]]:
    """Average hierarchical loss over an unrolled sequence.

    ``frames_packed``: [T+1, 6, h, w]; frame 0 seeds the buffer, frames
    1..T are coded in order with the buffer propagated.  The propagated
    state is detached at each subgroup boundary, which leaves the loss
    value untouched but truncates gradient flow (and with it the autograd
    graph that must be kept alive).
    """

    t_total = frames_packed.shape[0] - 1
    if sum(subgroups) != t_total:
        raise InvalidInputError("subgroup sizes must sum to the P-frame count")
    boundaries = set(np.cumsum(subgroups)[:-1].tolist())
    buffer = _grad_buffer(model, frames_packed[0:1], model.adaptor_intra)
    prev_recon = frames_packed[0:1]
    losses = []
    acc = None
    for t in range(1, t_total + 1):
        if refresh_period and should_refresh(t, refresh_period):
            buffer = _grad_buffer(model, prev_recon, model.adaptor_refresh)
        cur = frames_packed[t:t + 1]
        prev = frames_packed[t - 1:t]
        out = forward_inter_train(model, cur, prev, buffer,
                                  quality_index(t, model.cfg.quality_levels),
                                  mode=mode, rng=rng, flow_fn=flow_fn)
        d_r = packed_distortion(out.recon_packed, cur)
        zero = torch.zeros((), dtype=d_r.dtype, device=d_r.device)
        per = LossBreakdown(zero, d_r, out.motion_rate, out.residual_rate,
                            quality_weight(t) * lam * d_r
                            + out.motion_rate + out.residual_rate
                            + AMP_TIEBREAK * out.amp, out.amp)
        losses.append(per)
        acc = per.total if acc is None else acc + per.total
        buffer = out.buffer
        prev_recon = out.recon_packed
        if t in boundaries:
            buffer = detach_buffer(buffer)
            prev_recon = prev_recon.detach()
    return acc / t_total, losses


# ---------------------------------------------------------------------------
# reference-quality augmentation and flow distillation


def reference_quality_augment(model: VideoModel, ref_packed: torch.Tensor,
                              mode: str, rng: torch.Generator, *,
                              intra_pool=None, max_repeats: int = 40
                              ) -> torch.Tensor:
    """Degrade the reference the way deployment would.

    Mode "intra_pool": compress the reference with an intra codec drawn
    uniformly from the pool.  Mode "recompress": pass the reference through
    the current inter codec N times, N ~ Uniform{1..max_repeats}, each pass
    predicting from the previous pass's output.  No gradients flow through
    either path.
    """

    with torch.no_grad():
        if mode == "intra_pool":
            pool = intra_pool if intra_pool else [model.intra]
            pick = int(torch.randint(len(pool), (1,), generator=rng))
            codec = pool[pick]
            y = torch.round(codec.enc(ref_packed))
            return codec.dec(y).clamp(0.0, 1.0)
        if mode == "recompress":
            n = draw_repeat_count(rng, max_repeats)
            cur = ref_packed
            for _ in range(n):
                buffer = initial_buffer(model, cur)
                out = forward_inter_train(model, cur, cur, buffer, 1, mode="ste")
                cur = out.recon_packed.clamp(0.0, 1.0)
            return cur
    raise InvalidInputError(f"unknown augmentation mode {mode!r}")


def draw_repeat_count(rng: torch.Generator, max_repeats: int = 40) -> int:
    """N ~ Uniform{1..max_repeats}."""

    return int(torch.randint(1, max_repeats + 1, (1,), generator=rng))


@dataclass
class FlowDistillation:
    """Optional heavy-to-light flow wiring.

    With a teacher configured, early stages estimate motion with the frozen
    teacher (its output detached); later stages switch to the internal flow
    network with its parameters trainable.  Without a teacher the internal
    network is used throughout and nothing changes.
    """

    teacher: object | None = None
    teacher_stages: tuple[str, ...] = ("S1", "S2")

    def flow_fn(self, stage: str):
        if self.teacher is not None and stage in self.teacher_stages:
            teacher = self.teacher
            return lambda cur, ref: teacher(cur, ref).detach()
        return None

    def flow_trainable(self, stage: str) -> bool:
        return not (self.teacher is not None and stage in self.teacher_stages)


# ---------------------------------------------------------------------------
# validation scoring


def validate_checkpoint(model: VideoModel, clips: list[list[Frame]],
                        lambda_index: int) -> float:
    """Rate-distortion score of real (non-proxy) coding over clips.

    Full encode of every clip; per frame the cascaded-form term
    w_{t mod R} * lam * D + R, averaged over frames and clips.  Lower is
    better; deterministic for a fixed model.
    """

    cfg = model.cfg
    lam = cfg.lam(lambda_index)
    scores = []
    for clip in clips:
        header = make_header(cfg, clip[0].width, clip[0].height,
                             clip[0].bit_depth, len(clip), lambda_index)
        ctx = CodingContext(model, header)
        pixels = clip[0].width * clip[0].height
        terms = []
        for t, frame in enumerate(clip):
            _, recon, stats = encode_frame(frame, ctx)
            a = pack_yuv420(frame).data
            b = pack_yuv420(recon).data
            d = packed_distortion(a.unsqueeze(0), b.unsqueeze(0)).item()
            rate = stats.byte_size * 8.0 / pixels
            terms.append(quality_weight(t) * lam * d + rate)
        scores.append(sum(terms) / len(terms))
    return float(sum(scores) / len(scores))


def autograd_graph_size(value: torch.Tensor) -> int:
    """Number of distinct autograd nodes reachable from ``value``.

    Serves as the backward-memory proxy for the subgroup-detachment
    property: detaching at subgroup boundaries bounds the retained graph
    by the largest subgroup instead of the whole unrolled sequence.
    """

    if value.grad_fn is None:
        return 0
    seen = set()
    queue = deque([value.grad_fn])
    while queue:
        node = queue.popleft()
        if node is None or node in seen:
            continue
        seen.add(node)
        for nxt, _ in node.next_functions:
            if nxt is not None and nxt not in seen:
                queue.append(nxt)
    return len(seen)


# ---------------------------------------------------------------------------
# data sampling


class ClipSampler:
    """Seeded sampler of aligned crops from synthetic sequences.

    Sequences are pre-packed once; crops are taken in the packed domain at
    even luma offsets so they remain valid YUV420 frames.
    """

    def __init__(self, sequences: list[list[Frame]], crop: int = 64,
                 seed: int = 0) -> None:
        if crop % 16:
            raise InvalidInputError("crop size must be a multiple of 16")
        self.crop = crop
        self._rng = np.random.default_rng(seed)
        self._packed = []
        for frames in sequences:
            self._packed.append(torch.stack(
                [pack_yuv420(f).data for f in frames]))

    def _window(self, seq: torch.Tensor) -> tuple[slice, slice]:
        hc = self.crop // 2
        hmax = seq.shape[2] - hc
        wmax = seq.shape[3] - hc
        y0 = int(self._rng.integers(0, hmax + 1))
        x0 = int(self._rng.integers(0, wmax + 1))
        return slice(y0, y0 + hc), slice(x0, x0 + hc)

    def pairs(self, batch: int) -> tuple[torch.Tensor, torch.Tensor, list[int]]:
        """(reference batch, current batch, current frame indices)."""

        refs, curs, ts = [], [], []
        for _ in range(batch):
            seq = self._packed[int(self._rng.integers(len(self._packed)))]
            t = int(self._rng.integers(1, seq.shape[0]))
            ys, xs = self._window(seq)
            refs.append(seq[t - 1, :, ys, xs])
            curs.append(seq[t, :, ys, xs])
            ts.append(t)
        return torch.stack(refs), torch.stack(curs), ts

    def clip(self, length: int) -> torch.Tensor:
        """[length, 6, crop/2, crop/2] consecutive window from one sequence."""

        fits = [s for s in self._packed if s.shape[0] >= length]
        if not fits:
            raise InvalidInputError("no sequence long enough for the cascade")
        seq = fits[int(self._rng.integers(len(fits)))]
        t0 = int(self._rng.integers(0, seq.shape[0] - length + 1))
        ys, xs = self._window(seq)
        return seq[t0:t0 + length, :, ys, xs]

    def intra_batch(self, batch: int) -> torch.Tensor:
        out = []
        for _ in range(batch):
            seq = self._packed[int(self._rng.integers(len(self._packed)))]
            t = int(self._rng.integers(seq.shape[0]))
            ys, xs = self._window(seq)
            out.append(seq[t, :, ys, xs])
        return torch.stack(out)


# ---------------------------------------------------------------------------
# stage plans and the trainer


@dataclass
class StageConfig:
    name: str
    steps: int
    lr: float
    batch: int = 2
    cascade_lengths: tuple[int, ...] = ()
    cascade_iters: int = 2
    # Cascaded stages can rebuild the buffer more often than deployment
    # does; the adaptor's task is period-independent and short periods
    # give it far more gradient moments.  None keeps the config period.
    refresh_period: int | None = None


def default_plan(cfg=None) -> list[StageConfig]:
    return [
        StageConfig("S0", steps=400, lr=1e-3, batch=4),
        StageConfig("S1", steps=200, lr=1e-3),
        StageConfig("S2", steps=220, lr=1e-3),
        StageConfig("S3", steps=260, lr=7e-4),
        StageConfig("S4", steps=150, lr=5e-3, batch=1),
        StageConfig("S5", steps=0, lr=2e-4,
                    cascade_lengths=(6, 15, 20, 28), cascade_iters=3,
                    refresh_period=8),
    ]


_STAGE_MODULES = {
    "S0": ("intra",),
    "S1": ("flow_net", "motion_feat_transform", "motion_encoder",
           "motion_decoder", "motion_entropy", "feature_extractor",
           "multiscale", "miner", "adaptor_intra", "prediction_head"),
    "S2": ("residual_encoder", "residual_decoder", "generator",
           "spatial_prior", "residual_entropy", "adaptor_refresh"),
    "S3": ("flow_net", "motion_feat_transform", "motion_encoder",
           "motion_decoder", "motion_entropy", "feature_extractor",
           "multiscale", "miner", "adaptor_intra", "adaptor_refresh",
           "residual_encoder", "residual_decoder", "generator",
           "spatial_prior", "residual_entropy"),
    "S4": ("scale_bank",),
    "S5": ("flow_net", "motion_feat_transform", "motion_encoder",
           "motion_decoder", "motion_entropy", "feature_extractor",
           "multiscale", "miner", "adaptor_intra", "adaptor_refresh",
           "residual_encoder", "residual_decoder", "generator",
           "spatial_prior", "residual_entropy", "scale_bank"),
}


def stage_parameters(model: VideoModel, stage: str,
                     flow_trainable: bool = True) -> list[torch.nn.Parameter]:
    names = _STAGE_MODULES[stage]
    params = []
    for name in names:
        if name == "flow_net" and not flow_trainable:
            continue
        params.extend(getattr(model, name).parameters())
    return params


def _intra_loss(model: VideoModel, batch: torch.Tensor, lam: float,
                rng: torch.Generator) -> torch.Tensor:
    recon, bits_y, bits_z = model.intra.train_forward(batch, rng)
    pixels = batch.shape[0] * 4 * batch.shape[2] * batch.shape[3]
    d = packed_distortion(recon, batch)
    return lam * d + (bits_y + bits_z) / pixels


def train_full(model: VideoModel, lambda_index: int, *, seed: int = 0,
               plan: list[StageConfig] | None = None,
               sampler: ClipSampler | None = None,
               validation_clips: list[list[Frame]] | None = None,
               distillation: FlowDistillation | None = None,
               augment_every: int = 3,
               log=None) -> dict:
    """Run the full curriculum in place; returns a history dictionary."""

    from .data import make_sequence, training_specs, validation_specs

    cfg = model.cfg
    lam = cfg.lam(lambda_index)
    plan = plan if plan is not None else default_plan()
    if sampler is None:
        sampler = ClipSampler([make_sequence(s) for s in training_specs(seed + 1)],
                              crop=64, seed=seed + 2)
    if validation_clips is None:
        validation_clips = [make_sequence(s) for s in validation_specs(seed + 3)]
    distillation = distillation or FlowDistillation()
    rng = torch.Generator().manual_seed(seed + 4)
    aug_rng = torch.Generator().manual_seed(seed + 5)
    history: dict = {"stages": {}, "validation": {}}

    def emit(msg: str) -> None:
        if log:
            log(msg)

    model.train()
    for stage_no, stage in enumerate(plan):
        torch.manual_seed(seed + 1000 * (stage_no + 1))
        flow_ok = distillation.flow_trainable(stage.name)
        params = stage_parameters(model, stage.name, flow_trainable=flow_ok)
        opt = torch.optim.Adam(params, lr=stage.lr)
        flow_fn = distillation.flow_fn(stage.name)
        curve = []

        skipped = 0
        if stage.name == "S5":
            for length in stage.cascade_lengths:
                for _ in range(stage.cascade_iters):
                    frames = sampler.clip(length + 1)
                    subgroups = _split_subgroups(length, cfg.cascade_subgroup)
                    period = (stage.refresh_period
                              if stage.refresh_period is not None
                              else cfg.refresh_period)
                    loss, _ = loss_cascaded(model, frames, lam, subgroups,
                                            rng=rng, flow_fn=flow_fn,
                                            refresh_period=period)
                    opt.zero_grad()
                    loss.backward()
                    skipped += not _guarded_step(opt, params)
                    curve.append(float(loss.detach()))
                emit(f"{stage.name} len={length} loss={curve[-1]:.4f}")
        else:
            for step in range(stage.steps):
                if stage.name == "S0":
                    batch = sampler.intra_batch(stage.batch)
                    loss = _intra_loss(model, batch, lam, rng)
                elif stage.name == "S4":
                    # The bank's working point only exists under warm
                    # propagated state: pair contexts carry all-zero
                    # temporal priors (two sites receive no gradient at
                    # all) and unrealistically busy latents.
                    frames = sampler.clip(_BANK_UNROLL + 1)
                    loss, _ = loss_cascaded(model, frames, lam,
                                            (_BANK_UNROLL,), rng=rng,
                                            flow_fn=flow_fn)
                elif (stage.name == "S3"
                      and step % _WARM_EVERY == _WARM_EVERY - 1):
                    frames = sampler.clip(_WARM_LEN + 1)
                    loss, _ = loss_cascaded(model, frames, lam, (_WARM_LEN,),
                                            rng=rng, flow_fn=flow_fn,
                                            refresh_period=_WARM_REFRESH)
                else:
                    ref, cur, ts = sampler.pairs(stage.batch)
                    if augment_every and step % augment_every == augment_every - 1:
                        ref = reference_quality_augment(model, ref,
                                                        "intra_pool", aug_rng)
                    adaptor = (model.adaptor_refresh if step % 2 else
                               model.adaptor_intra)
                    if stage.name == "S1":
                        br = loss_stage1(model, ref, cur, lam, rng=rng,
                                         flow_fn=flow_fn)
                    elif stage.name == "S2":
                        br = loss_stage2(model, ref, cur, lam, rng=rng,
                                         flow_fn=flow_fn, adaptor=adaptor)
                    elif stage.name == "S3":
                        br = loss_stage3(model, ref, cur, lam, rng=rng,
                                         flow_fn=flow_fn, adaptor=adaptor)
                    else:
                        raise InvalidInputError(f"unknown stage {stage.name}")
                    loss = br.total
                opt.zero_grad()
                loss.backward()
                skipped += not _guarded_step(opt, params)
                curve.append(float(loss.detach()))
                if step % 50 == 0:
                    emit(f"{stage.name} step={step} loss={curve[-1]:.4f}")
        history["stages"][stage.name] = curve
        history.setdefault("skipped", {})[stage.name] = skipped
        model.eval()
        score = validate_checkpoint(model, validation_clips, lambda_index)
        model.train()
        history["validation"][stage.name] = score
        emit(f"{stage.name} done, validation={score:.5f} skipped={skipped}")

    model.eval()
    return history


def _split_subgroups(length: int, subgroup: int) -> tuple[int, ...]:
    """Split an unroll length into detachment subgroups of at most
    ``subgroup`` frames (28 with the default 16 becomes (16, 12))."""

    out = []
    rest = length
    while rest > subgroup:
        out.append(subgroup)
        rest -= subgroup
    out.append(rest)
    return tuple(out)

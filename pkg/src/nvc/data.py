"""Seeded synthetic YUV420 sequences.

All content is sampled from continuous procedural textures (sums of
oriented sinusoids) evaluated at per-frame affine-transformed coordinates,
so motion is exact, fractional, and free of resampling drift; the same
spec always reproduces the same bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Frame, InvalidInputError

KINDS = ("static", "pan", "rotate", "ramp", "noise", "mixed")


@dataclass(frozen=True)
class SequenceSpec:
    kind: str
    width: int
    height: int
    frames: int
    seed: int
    velocity: tuple[float, float] = (1.4, -0.6)   # luma pixels / frame
    spin: float = 0.8                             # degrees / frame
    ramp: float = 1.5                             # code levels / frame
    noise_sigma: float = 2.0
    bit_depth: int = 8

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown sequence kind {self.kind!r}")
        if self.width % 2 or self.height % 2:
            raise InvalidInputError("YUV420 needs even dimensions")


class _Texture:
    """Band-limited random field: value(x, y) in roughly [-1, 1]."""

    def __init__(self, rng: np.random.Generator, waves: int,
                 min_cycles: float, max_cycles: float) -> None:
        self.freq = np.exp(rng.uniform(np.log(min_cycles), np.log(max_cycles),
                                       size=waves))
        angle = rng.uniform(0.0, 2.0 * np.pi, size=waves)
        self.fx = self.freq * np.cos(angle)
        self.fy = self.freq * np.sin(angle)
        self.phase = rng.uniform(0.0, 2.0 * np.pi, size=waves)
        amp = rng.uniform(0.4, 1.0, size=waves) / np.sqrt(waves)
        self.amp = amp

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        acc = np.zeros_like(x)
        for fx, fy, ph, a in zip(self.fx, self.fy, self.phase, self.amp):
            acc += a * np.sin(2.0 * np.pi * (fx * x + fy * y) + ph)
        return np.tanh(acc)


def _grid(width: int, height: int, step: float, offset: float
          ) -> tuple[np.ndarray, np.ndarray]:
    ys = offset + step * np.arange(height, dtype=np.float64)
    xs = offset + step * np.arange(width, dtype=np.float64)
    return np.meshgrid(xs, ys)


def _transform(x, y, t, spec: SequenceSpec, cx: float, cy: float):
    moving = spec.kind in ("pan", "mixed")
    rotating = spec.kind in ("rotate", "mixed")
    dx = spec.velocity[0] * t if moving else 0.0
    dy = spec.velocity[1] * t if moving else 0.0
    if rotating:
        theta = np.deg2rad(spec.spin) * t
        c, s = np.cos(theta), np.sin(theta)
        xr = c * (x - cx) - s * (y - cy) + cx
        yr = s * (x - cx) + c * (y - cy) + cy
    else:
        xr, yr = x, y
    return xr + dx, yr + dy


def make_sequence(spec: SequenceSpec) -> list[Frame]:
    rng = np.random.default_rng(spec.seed)
    luma_tex = _Texture(rng, waves=14, min_cycles=1 / 48, max_cycles=1 / 5)
    u_tex = _Texture(rng, waves=6, min_cycles=1 / 96, max_cycles=1 / 12)
    v_tex = _Texture(rng, waves=6, min_cycles=1 / 96, max_cycles=1 / 12)
    base = rng.uniform(0.35, 0.65)
    maxv = (1 << spec.bit_depth) - 1
    cx, cy = spec.width / 2.0, spec.height / 2.0

    xl, yl = _grid(spec.width, spec.height, 1.0, 0.0)
    xc, yc = _grid(spec.width // 2, spec.height // 2, 2.0, 0.5)

    frames = []
    for t in range(spec.frames):
        xt, yt = _transform(xl, yl, t, spec, cx, cy)
        y = base + 0.32 * luma_tex(xt, yt)
        if spec.kind in ("ramp", "mixed"):
            y = y + spec.ramp * t / maxv
        y = y * maxv
        if spec.kind in ("noise", "mixed") and spec.noise_sigma > 0:
            frame_rng = np.random.default_rng((spec.seed, 0xA5, t))
            y = y + frame_rng.normal(0.0, spec.noise_sigma, size=y.shape)
        xtc, ytc = _transform(xc, yc, t, spec, cx, cy)
        u = (0.5 + 0.18 * u_tex(xtc, ytc)) * maxv
        v = (0.5 + 0.18 * v_tex(xtc, ytc)) * maxv
        frames.append(Frame(
            np.clip(np.rint(y), 0, maxv).astype(np.uint16),
            np.clip(np.rint(u), 0, maxv).astype(np.uint16),
            np.clip(np.rint(v), 0, maxv).astype(np.uint16),
            spec.bit_depth))
    return frames


def crop_sequence(frames: list[Frame], x0: int, y0: int,
                  width: int, height: int) -> list[Frame]:
    """Even-aligned spatial crop of every frame."""

    if x0 % 2 or y0 % 2 or width % 2 or height % 2:
        raise InvalidInputError("crops must be even-aligned for YUV420")
    out = []
    for f in frames:
        out.append(Frame(
            f.y[y0:y0 + height, x0:x0 + width].copy(),
            f.u[y0 // 2:(y0 + height) // 2, x0 // 2:(x0 + width) // 2].copy(),
            f.v[y0 // 2:(y0 + height) // 2, x0 // 2:(x0 + width) // 2].copy(),
            f.bit_depth))
    return out


def training_specs(seed: int = 11, frames: int = 32) -> list[SequenceSpec]:
    """Small mixed-motion corpus for the toy curriculum."""

    kinds = ("pan", "rotate", "mixed", "pan", "ramp", "noise", "mixed", "static")
    specs = []
    for i, kind in enumerate(kinds):
        specs.append(SequenceSpec(
            kind=kind, width=96, height=64, frames=frames, seed=seed + 97 * i,
            velocity=(0.8 + 0.45 * (i % 4), -0.5 + 0.3 * (i % 3)),
            spin=0.5 + 0.25 * (i % 3)))
    return specs


def validation_specs(seed: int = 301, frames: int = 12) -> list[SequenceSpec]:
    return [
        SequenceSpec("pan", 64, 64, frames, seed, velocity=(1.2, 0.4)),
        SequenceSpec("mixed", 64, 64, frames, seed + 7),
    ]


def acceptance_specs(frames: int = 32) -> list[SequenceSpec]:
    """The five determinism-gate sequences spanning 64x64 .. 128x128."""

    return [
        SequenceSpec("pan", 64, 64, frames, 1000),
        SequenceSpec("rotate", 64, 64, frames, 1001),
        SequenceSpec("mixed", 80, 64, frames, 1002),
        SequenceSpec("ramp", 96, 96, frames, 1003, ramp=2.0),
        SequenceSpec("noise", 128, 128, frames, 1004, noise_sigma=1.5),
    ]

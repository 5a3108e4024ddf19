"""Platform-stable scalar math for entropy-table construction.

Probability tables baked into the bitstream must be identical wherever a
stream is produced or consumed.  Library ``exp``/``erf`` are transcendental
and may differ by ULPs across libm builds, so this module reimplements the
needed pieces using only IEEE-754 basic operations (+, -, *, /, sqrt,
round-half-even, ldexp), which are correctly rounded everywhere.  Any other
implementation (e.g. the accelerated coder) must mirror these formulas
operation for operation; the algorithms and constants are normative and
documented in FORMAT.md.

All functions accept numpy arrays or scalars and compute in float64.
"""

from __future__ import annotations

import numpy as np

LN2 = 0.6931471805599453
INV_LN2 = 1.4426950408889634
INV_SQRT2 = 0.7071067811865476

# Exp Taylor coefficients 1/13! .. 1/2! for Horner evaluation.
_EXP_COEFFS = (
    1.6059043836821613e-10,  # 1/13!
    2.08767569878681e-09,    # 1/12!
    2.505210838544172e-08,   # 1/11!
    2.755731922398589e-07,   # 1/10!
    2.7557319223985893e-06,  # 1/9!
    2.48015873015873e-05,    # 1/8!
    0.0001984126984126984,   # 1/7!
    0.001388888888888889,    # 1/6!
    0.008333333333333333,    # 1/5!
    0.041666666666666664,    # 1/4!
    0.16666666666666666,     # 1/3!
    0.5,                     # 1/2!
)

# Rational erf approximation constants (max abs error ~1.5e-7).
_ERF_P = 0.3275911
_ERF_A = (0.254829592, -0.284496736, 1.421413741, -1.453152027, 1.061405429)


def det_exp(x):
    """Deterministic exp for non-positive arguments."""

    x = np.asarray(x, dtype=np.float64)
    clipped = np.maximum(x, -745.0)
    k = np.rint(clipped * INV_LN2)
    r = clipped - k * LN2
    p = np.full_like(r, _EXP_COEFFS[0])
    for c in _EXP_COEFFS[1:]:
        p = p * r + c
    p = p * r * r + r + 1.0
    out = np.ldexp(p, k.astype(np.int64))
    out = np.where(x < -745.0, 0.0, out)
    return out if out.ndim else float(out)


def det_erf(x):
    """Deterministic erf via the classic rational approximation."""

    x = np.asarray(x, dtype=np.float64)
    ax = np.abs(x)
    t = 1.0 / (1.0 + _ERF_P * ax)
    poly = np.full_like(t, _ERF_A[4])
    for c in (_ERF_A[3], _ERF_A[2], _ERF_A[1], _ERF_A[0]):
        poly = poly * t + c
    poly = poly * t
    mag = 1.0 - poly * det_exp(-(ax * ax))
    out = np.where(x < 0.0, -mag, mag)
    return out if out.ndim else float(out)


def det_norm_cdf(x):
    """Deterministic standard normal CDF."""

    x = np.asarray(x, dtype=np.float64)
    out = 0.5 * (1.0 + np.asarray(det_erf(x * INV_SQRT2)))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Frozen scale-quantization table: 64 geometric steps spanning [1e-4, 64].
# The values are literal constants (not recomputed) so that every
# implementation shares them exactly.

SIGMA_TABLE = np.array([
    0.0001, 0.00012364073749509353, 0.00015287031968330624, 0.00018900999066754696,
    0.0002336933464007625, 0.0002889401769668664, 0.0003572477657214619, 0.0004417037722227594,
    0.0005461258015198678, 0.0006752339686501552, 0.0008348642586564405, 0.0010322323264857682,
    0.0012762596611297656, 0.0015779768573732234, 0.0019510222239581534, 0.0024122582663950363,
    0.0029825339108571804, 0.003687626923425073, 0.004559409124190388, 0.00563728706656758,
    0.00696998330381968, 0.008617738760127537, 0.010655035758422216, 0.013173964792079159,
    0.016288387226270636, 0.020139082092617624, 0.024900109624054742, 0.030786679176268043,
    0.03806487718378619, 0.04706369487663483, 0.05818989943791185, 0.07194642081268748,
    0.08895508529413026, 0.10998472349705214, 0.13598592326369469, 0.16813399841274407,
    0.2078821156175056, 0.2570269808698869, 0.31779005470890115, 0.39291796732814654,
    0.48580667255525095, 0.6006549527476864, 0.742654213378045, 0.9182231464590005,
    1.135297870132561, 1.4036906593979872, 1.735533483429413, 2.1458263983864128,
    2.653115584329364, 3.2803316750620857, 4.055826275331918, 5.0146535183401655,
    6.200154592899436, 7.665916864496776, 9.478196147024562, 11.718911617412706,
    14.489348750167265, 17.91473765294292, 22.149913754409834, 27.386316720479478,
    33.86064396594294, 41.86554992007973, 51.76287467756312, 64.0,
], dtype=np.float64)

SIGMA_MIN = float(SIGMA_TABLE[0])
SIGMA_MAX = float(SIGMA_TABLE[-1])

# Geometric midpoints used for nearest-in-log snapping (sqrt is a basic op).
_SIGMA_MIDPOINTS = np.sqrt(SIGMA_TABLE[:-1] * SIGMA_TABLE[1:])

MU_GRID = 64  # means are snapped to a 1/64 grid


def snap_sigma_index(sigma):
    """Index of the nearest table entry (geometric-midpoint bisection)."""

    sigma = np.asarray(sigma, dtype=np.float64)
    idx = np.searchsorted(_SIGMA_MIDPOINTS, np.clip(sigma, SIGMA_MIN, SIGMA_MAX),
                          side="left")
    return idx if idx.ndim else int(idx)


def snap_mu(mu):
    """Snap means to the 1/64 grid, returning the scaled integer(s)."""

    mu = np.asarray(mu, dtype=np.float64)
    m = np.rint(mu * MU_GRID).astype(np.int64)
    return m if m.ndim else int(m)

//! Deterministic scalar math mirrored from the reference implementation.
//!
//! Probability tables are part of the bitstream contract, so `exp`/`erf`
//! here must match the reference bit for bit.  Both sides therefore use
//! the same explicit formulas built only from IEEE-754 basic operations
//! (+, -, *, /, round-half-even, ldexp), evaluated in the same order.
//! FORMAT.md is the normative description; the constants below are frozen
//! literals shared with the reference.

pub const LN2: f64 = 0.6931471805599453;
pub const INV_LN2: f64 = 1.4426950408889634;
pub const INV_SQRT2: f64 = 0.7071067811865476;

/// Taylor coefficients 1/13! .. 1/2! for the Horner loop in `det_exp`.
const EXP_COEFFS: [f64; 12] = [
    1.6059043836821613e-10, // 1/13!
    2.08767569878681e-09,   // 1/12!
    2.505210838544172e-08,  // 1/11!
    2.755731922398589e-07,  // 1/10!
    2.7557319223985893e-06, // 1/9!
    2.48015873015873e-05,   // 1/8!
    0.0001984126984126984,  // 1/7!
    0.001388888888888889,   // 1/6!
    0.008333333333333333,   // 1/5!
    0.041666666666666664,   // 1/4!
    0.16666666666666666,    // 1/3!
    0.5,                    // 1/2!
];

const ERF_P: f64 = 0.3275911;
const ERF_A: [f64; 5] = [
    0.254829592,
    -0.284496736,
    1.421413741,
    -1.453152027,
    1.061405429,
];

/// `x * 2^n` with a single final rounding, musl-style.
///
/// The two-sided chunking keeps the last multiply the only inexact step,
/// so results (including subnormals) are correctly rounded and identical
/// to the libm `ldexp` the reference calls.
pub fn ldexp(x: f64, n: i64) -> f64 {
    const P1023: f64 = f64::from_bits(0x7FE0_0000_0000_0000); // 2^1023
    const PM1022: f64 = f64::from_bits(0x0010_0000_0000_0000); // 2^-1022
    const P53: f64 = f64::from_bits(0x4340_0000_0000_0000); // 2^53
    let mut y = x;
    let mut n = n;
    if n > 1023 {
        y *= P1023;
        n -= 1023;
        if n > 1023 {
            y *= P1023;
            n -= 1023;
            if n > 1023 {
                n = 1023;
            }
        }
    } else if n < -1022 {
        // keep the final exponent above -53 so the subnormal range is
        // reached with one rounding only
        y *= PM1022 * P53;
        n += 1022 - 53;
        if n < -1022 {
            y *= PM1022 * P53;
            n += 1022 - 53;
            if n < -1022 {
                n = -1022;
            }
        }
    }
    y * f64::from_bits(((0x3FF + n) as u64) << 52)
}

/// Deterministic `exp` for non-positive arguments.
pub fn det_exp(x: f64) -> f64 {
    let clipped = if x > -745.0 { x } else { -745.0 };
    let k = (clipped * INV_LN2).round_ties_even();
    let r = clipped - k * LN2;
    let mut p = EXP_COEFFS[0];
    for &c in &EXP_COEFFS[1..] {
        p = p * r + c;
    }
    p = p * r * r + r + 1.0;
    let out = ldexp(p, k as i64);
    if x < -745.0 {
        0.0
    } else {
        out
    }
}

/// Deterministic `erf` via the classic rational approximation.
pub fn det_erf(x: f64) -> f64 {
    let ax = x.abs();
    let t = 1.0 / (1.0 + ERF_P * ax);
    let mut poly = ERF_A[4];
    for &c in &[ERF_A[3], ERF_A[2], ERF_A[1], ERF_A[0]] {
        poly = poly * t + c;
    }
    poly *= t;
    let mag = 1.0 - poly * det_exp(-(ax * ax));
    if x < 0.0 {
        -mag
    } else {
        mag
    }
}

/// Deterministic standard normal CDF.
pub fn det_norm_cdf(x: f64) -> f64 {
    0.5 * (1.0 + det_erf(x * INV_SQRT2))
}

/// Means snap to a 1/64 grid.
pub const MU_GRID: i64 = 64;

/// Frozen 64-entry geometric scale table spanning [1e-4, 64].  Shared
/// literal for literal with the reference; never recomputed.
pub const SIGMA_TABLE: [f64; 64] = [
    0.0001,
    0.00012364073749509353,
    0.00015287031968330624,
    0.00018900999066754696,
    0.0002336933464007625,
    0.0002889401769668664,
    0.0003572477657214619,
    0.0004417037722227594,
    0.0005461258015198678,
    0.0006752339686501552,
    0.0008348642586564405,
    0.0010322323264857682,
    0.0012762596611297656,
    0.0015779768573732234,
    0.0019510222239581534,
    0.0024122582663950363,
    0.0029825339108571804,
    0.003687626923425073,
    0.004559409124190388,
    0.00563728706656758,
    0.00696998330381968,
    0.008617738760127537,
    0.010655035758422216,
    0.013173964792079159,
    0.016288387226270636,
    0.020139082092617624,
    0.024900109624054742,
    0.030786679176268043,
    0.03806487718378619,
    0.04706369487663483,
    0.05818989943791185,
    0.07194642081268748,
    0.08895508529413026,
    0.10998472349705214,
    0.13598592326369469,
    0.16813399841274407,
    0.2078821156175056,
    0.2570269808698869,
    0.31779005470890115,
    0.39291796732814654,
    0.48580667255525095,
    0.6006549527476864,
    0.742654213378045,
    0.9182231464590005,
    1.135297870132561,
    1.4036906593979872,
    1.735533483429413,
    2.1458263983864128,
    2.653115584329364,
    3.2803316750620857,
    4.055826275331918,
    5.0146535183401655,
    6.200154592899436,
    7.665916864496776,
    9.478196147024562,
    11.718911617412706,
    14.489348750167265,
    17.91473765294292,
    22.149913754409834,
    27.386316720479478,
    33.86064396594294,
    41.86554992007973,
    51.76287467756312,
    64.0,
];

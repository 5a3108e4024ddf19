//! Discretized-Gaussian table construction, identical to the reference.
//!
//! A table depends only on the scale index (into the frozen 64-entry
//! table) and the mean fraction on the 1/64 grid, so the whole domain is
//! 64 x 64 tables.  Layout and rounding rules follow FORMAT.md: the
//! alphabet is `2W + 4` (low escape, the integers `-W .. W+1` relative to
//! the integer mean, high escape), raw frequencies are
//! `max(floor(p * (2^16 - alphabet)), 1)`, and the rounding remainder is
//! settled on the most probable (then largest) slots.

use crate::coder::CoderError;
use crate::detmath::{det_norm_cdf, MU_GRID, SIGMA_TABLE};

pub const TOTAL: i64 = 1 << 16;

/// Window half-width for a scale: `max(1, ceil(16 sigma))`.
pub fn window_size(sigma: f64) -> i64 {
    let w = (16.0 * sigma).ceil() as i64;
    w.max(1)
}

/// Alphabet size of the table for `sigma_index`.
pub fn alphabet_size(sigma_index: usize) -> usize {
    (2 * window_size(SIGMA_TABLE[sigma_index]) + 4) as usize
}

/// Build the table for `(sigma_index, mu_frac)` in the flat u16 layout:
/// `cum[0..=A]` (last entry modulo 2^16) followed by `freq[0..=A]` (last
/// entry zero padding).  Returns the number of u16 values written.
pub fn build_cdf(
    sigma_index: usize,
    mu_frac: u32,
    out: &mut [u16],
) -> Result<usize, CoderError> {
    if sigma_index >= SIGMA_TABLE.len() || mu_frac as i64 >= MU_GRID {
        return Err(CoderError::BadArgs);
    }
    let sigma = SIGMA_TABLE[sigma_index];
    let w = window_size(sigma);
    let mu = mu_frac as f64 / MU_GRID as f64;
    let nsym = (2 * w + 4) as usize;
    let span = 2 * nsym + 2;
    if out.len() < span {
        return Err(CoderError::BufferTooSmall);
    }

    // probabilities: low tail, the 2W+2 regular bins, high tail
    let mut p = vec![0.0f64; nsym];
    p[0] = det_norm_cdf((-(w as f64) - 0.5 - mu) / sigma).max(0.0);
    for (i, d) in (-w..w + 2).enumerate() {
        let hi = det_norm_cdf((d as f64 + 0.5 - mu) / sigma);
        let lo = det_norm_cdf((d as f64 - 0.5 - mu) / sigma);
        p[i + 1] = (hi - lo).max(0.0);
    }
    p[nsym - 1] = (1.0 - det_norm_cdf((w as f64 + 1.5 - mu) / sigma)).max(0.0);

    let scale = (TOTAL - nsym as i64) as f64;
    let mut freq: Vec<i64> = p.iter().map(|&q| ((q * scale).floor() as i64).max(1)).collect();
    let mut rem = TOTAL - freq.iter().sum::<i64>();
    if rem >= 0 {
        // first index of the maximal probability, as the reference's argmax
        let imax = p
            .iter()
            .enumerate()
            .fold(0usize, |best, (i, &q)| if q > p[best] { i } else { best });
        freq[imax] += rem;
    } else {
        while rem < 0 {
            let imax = freq
                .iter()
                .enumerate()
                .fold(0usize, |best, (i, &f)| if f > freq[best] { i } else { best });
            let take = (freq[imax] - 1).min(-rem);
            freq[imax] -= take;
            rem += take;
        }
    }

    let mut cum = 0i64;
    for i in 0..nsym {
        out[i] = (cum & 0xFFFF) as u16;
        cum += freq[i];
    }
    out[nsym] = (cum & 0xFFFF) as u16;
    for i in 0..nsym {
        out[nsym + 1 + i] = freq[i] as u16;
    }
    out[span - 1] = 0;
    Ok(span)
}

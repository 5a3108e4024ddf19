//! C-callable boundary.
//!
//! All functions are `extern "C"` with flat arrays and explicit lengths;
//! return value 0 means success and negative values are the error codes of
//! [`CoderError`](crate::coder::CoderError).  The caller owns every
//! buffer; nothing allocated here crosses the boundary.
//!
//! Table layout (shared by all entry points): a table for an alphabet of
//! `A` symbols is `2A + 2` u16 values — the cumulative counts
//! `cum[0..=A]` stored modulo 2^16 (so a total of exactly 2^16 stores a 0
//! in the last slot) followed by the `A` frequencies and one zero padding
//! value.  Tables for a stream are concatenated in coding order and
//! described by a parallel array of alphabet sizes.

use crate::coder::{decode_stream, encode_stream, CoderError};
use crate::gaussian::build_cdf;
use std::slice;

fn code(e: CoderError) -> i32 {
    e as i32
}

/// ABI version of this library.
#[no_mangle]
pub extern "C" fn accel_version() -> u32 {
    1
}

/// Encode `n` symbols; writes at most `out_cap` bytes and stores the
/// stream length in `out_len`.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out`/`out_len` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn accel_encode(
    symbols: *const u16,
    n: usize,
    alphabets: *const u16,
    tables: *const u16,
    tables_len: usize,
    out: *mut u8,
    out_cap: usize,
    out_len: *mut usize,
) -> i32 {
    if out_len.is_null()
        || (n > 0 && (symbols.is_null() || alphabets.is_null()))
        || (tables_len > 0 && tables.is_null())
        || (out_cap > 0 && out.is_null())
    {
        return code(CoderError::BadArgs);
    }
    let symbols = if n > 0 { slice::from_raw_parts(symbols, n) } else { &[] };
    let alphabets = if n > 0 { slice::from_raw_parts(alphabets, n) } else { &[] };
    let tables = if tables_len > 0 {
        slice::from_raw_parts(tables, tables_len)
    } else {
        &[]
    };
    let out = if out_cap > 0 {
        slice::from_raw_parts_mut(out, out_cap)
    } else {
        &mut []
    };
    match encode_stream(symbols, alphabets, tables, out) {
        Ok(written) => {
            *out_len = written;
            0
        }
        Err(e) => code(e),
    }
}

/// Decode `n` symbols from `data` into `out_symbols`.
///
/// # Safety
/// Pointers must be valid for the stated lengths; `out_symbols` must hold
/// `n` values.
#[no_mangle]
pub unsafe extern "C" fn accel_decode(
    data: *const u8,
    data_len: usize,
    n: usize,
    alphabets: *const u16,
    tables: *const u16,
    tables_len: usize,
    out_symbols: *mut u16,
) -> i32 {
    if (data_len > 0 && data.is_null())
        || (n > 0 && (alphabets.is_null() || out_symbols.is_null()))
        || (tables_len > 0 && tables.is_null())
    {
        return code(CoderError::BadArgs);
    }
    let data = if data_len > 0 {
        slice::from_raw_parts(data, data_len)
    } else {
        &[]
    };
    let alphabets = if n > 0 { slice::from_raw_parts(alphabets, n) } else { &[] };
    let tables = if tables_len > 0 {
        slice::from_raw_parts(tables, tables_len)
    } else {
        &[]
    };
    let out = if n > 0 {
        slice::from_raw_parts_mut(out_symbols, n)
    } else {
        &mut []
    };
    match decode_stream(data, alphabets, tables, out) {
        Ok(()) => 0,
        Err(e) => code(e),
    }
}

/// Build the discretized-Gaussian table for `(sigma_index, mu_frac)` in
/// the flat layout; stores the value count in `out_len`.
///
/// # Safety
/// `out` must be valid for `out_cap` u16 values; `out_len` writable.
#[no_mangle]
pub unsafe extern "C" fn accel_build_cdf(
    sigma_index: u32,
    mu_frac: u32,
    out: *mut u16,
    out_cap: usize,
    out_len: *mut usize,
) -> i32 {
    if out.is_null() || out_len.is_null() {
        return code(CoderError::BadArgs);
    }
    let out = slice::from_raw_parts_mut(out, out_cap);
    match build_cdf(sigma_index as usize, mu_frac, out) {
        Ok(written) => {
            *out_len = written;
            0
        }
        Err(e) => code(e),
    }
}

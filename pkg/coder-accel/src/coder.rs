//! 64-bit carry-aware range coder, byte-identical to the reference.
//!
//! State and emission rule follow FORMAT.md exactly: 16-bit big-endian
//! words, renormalization while `range < 2^48`, a cache + pending-word
//! carry scheme, and a finish rule that rounds `low` up inside the final
//! interval and drops trailing zero words.  A decoder that runs past the
//! end of its buffer reads zero words.
//!
//! Everything here writes into caller-provided buffers; nothing is
//! allocated.

pub const TOTAL_LIMIT: u32 = 1 << 16;
const RENORM_LIMIT: u64 = 1 << 48;
const WORD_BITS: u32 = 16;
const MASK64: u128 = u64::MAX as u128;
const HIGH_WORD: u128 = 0xFFFF << 48;

/// Error codes shared with the C boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(i32)]
pub enum CoderError {
    BadArgs = -1,
    BadTable = -2,
    BufferTooSmall = -3,
    BadStream = -4,
    BadSymbol = -5,
}

pub struct RangeEncoder<'a> {
    low: u128, // at most 65 bits in use
    range: u64,
    cache: u16,
    cache_valid: bool,
    pending: usize,
    out: &'a mut [u8],
    words: usize, // 16-bit words written so far
    ops: u64,
}

impl<'a> RangeEncoder<'a> {
    pub fn new(out: &'a mut [u8]) -> Self {
        RangeEncoder {
            low: 0,
            range: u64::MAX,
            cache: 0,
            cache_valid: false,
            pending: 0,
            out,
            words: 0,
            ops: 0,
        }
    }

    fn push_word(&mut self, w: u16) -> Result<(), CoderError> {
        let at = self.words * 2;
        if at + 2 > self.out.len() {
            return Err(CoderError::BufferTooSmall);
        }
        self.out[at] = (w >> 8) as u8;
        self.out[at + 1] = (w & 0xFF) as u8;
        self.words += 1;
        Ok(())
    }

    fn shift_low(&mut self) -> Result<(), CoderError> {
        let low = self.low;
        if low < HIGH_WORD || low > MASK64 {
            let carry = (low >> 64) as u16;
            if self.cache_valid {
                self.push_word(self.cache.wrapping_add(carry))?;
            }
            for _ in 0..self.pending {
                self.push_word(0xFFFFu16.wrapping_add(carry))?;
            }
            self.pending = 0;
            self.cache = ((low >> 48) & 0xFFFF) as u16;
            self.cache_valid = true;
        } else {
            self.pending += 1;
        }
        self.low = (low << WORD_BITS) & MASK64;
        Ok(())
    }

    fn renorm(&mut self) -> Result<(), CoderError> {
        while self.range < RENORM_LIMIT {
            self.shift_low()?;
            self.range <<= WORD_BITS;
        }
        Ok(())
    }

    /// Code one symbol occupying `[cum, cum + freq)` of `total`.
    pub fn encode(&mut self, cum: u32, freq: u32, total: u32) -> Result<(), CoderError> {
        if freq == 0 || cum + freq > total || total > TOTAL_LIMIT {
            return Err(CoderError::BadTable);
        }
        let r = self.range / total as u64;
        self.low += (r * cum as u64) as u128;
        self.range = r * freq as u64;
        self.ops += 1;
        self.renorm()
    }

    /// Close the stream; returns the byte length written.
    pub fn finish(mut self) -> Result<usize, CoderError> {
        if self.ops == 0 {
            return Ok(0);
        }
        let k = 63 - self.range.leading_zeros();
        let bias = (1u128 << k) - 1;
        self.low = ((self.low + bias) >> k) << k;
        for _ in 0..4 {
            self.shift_low()?;
        }
        if self.cache_valid {
            let w = self.cache;
            self.push_word(w)?;
        }
        for _ in 0..self.pending {
            self.push_word(0xFFFF)?;
        }
        let mut words = self.words;
        while words > 0 {
            let at = (words - 1) * 2;
            if self.out[at] == 0 && self.out[at + 1] == 0 {
                words -= 1;
            } else {
                break;
            }
        }
        Ok(words * 2)
    }
}

pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    range: u64,
    code: u64,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self, CoderError> {
        if data.len() % 2 != 0 {
            return Err(CoderError::BadStream);
        }
        let mut dec = RangeDecoder {
            data,
            pos: 0,
            range: u64::MAX,
            code: 0,
        };
        for _ in 0..4 {
            dec.code = (dec.code << WORD_BITS) | dec.next_word() as u64;
        }
        Ok(dec)
    }

    fn next_word(&mut self) -> u16 {
        if self.pos + 2 <= self.data.len() {
            let w = ((self.data[self.pos] as u16) << 8) | self.data[self.pos + 1] as u16;
            self.pos += 2;
            w
        } else {
            0
        }
    }

    fn renorm(&mut self) {
        while self.range < RENORM_LIMIT {
            self.code = (self.code << WORD_BITS) | self.next_word() as u64;
            self.range <<= WORD_BITS;
        }
    }

    /// Decode one symbol from a logical cumulative table.
    ///
    /// `cum` holds the stored `A + 1` entries; entries below the last are
    /// literal, the last wraps modulo 2^16 (0 encodes a total of 2^16 when
    /// the alphabet is non-empty).
    pub fn decode(&mut self, cum: &[u16]) -> Result<u16, CoderError> {
        let a = cum.len() - 1;
        if a == 0 {
            return Err(CoderError::BadTable);
        }
        let total = logical_total(cum);
        if total == 0 || total > TOTAL_LIMIT || cum[0] != 0 {
            return Err(CoderError::BadTable);
        }
        let r = self.range / total as u64;
        let mut f = self.code / r;
        if f >= total as u64 {
            f = total as u64 - 1;
        }
        // the last logical entry equals `total` and can never be <= f
        let sym = cum[..a].partition_point(|&c| (c as u64) <= f) - 1;
        let lo = cum[sym] as u64;
        let hi = if sym + 1 == a {
            total as u64
        } else {
            cum[sym + 1] as u64
        };
        if hi <= lo {
            return Err(CoderError::BadTable);
        }
        self.code -= r * lo;
        self.range = r * (hi - lo);
        self.renorm();
        Ok(sym as u16)
    }
}

/// Total frequency of a stored cumulative table (see [`RangeDecoder::decode`]).
pub fn logical_total(cum: &[u16]) -> u32 {
    let last = cum[cum.len() - 1] as u32;
    if last == 0 && cum.len() > 1 {
        TOTAL_LIMIT
    } else {
        last
    }
}

/// One table of the flat stream layout: `cum[0..=A]` then `freq[0..=A]`
/// (the final freq entry is padding), 2A + 2 u16 values in total.
pub struct TableRef<'a> {
    pub cum: &'a [u16],
    pub freq: &'a [u16],
}

/// Walk the flat table blob for `alphabets[i]`-sized tables.
pub struct TableWalker<'a> {
    blob: &'a [u16],
    offset: usize,
}

impl<'a> TableWalker<'a> {
    pub fn new(blob: &'a [u16]) -> Self {
        TableWalker { blob, offset: 0 }
    }

    pub fn next(&mut self, alphabet: u16) -> Result<TableRef<'a>, CoderError> {
        let a = alphabet as usize;
        if a == 0 {
            return Err(CoderError::BadTable);
        }
        let span = 2 * a + 2;
        if self.offset + span > self.blob.len() {
            return Err(CoderError::BadArgs);
        }
        let t = &self.blob[self.offset..self.offset + span];
        self.offset += span;
        Ok(TableRef {
            cum: &t[..a + 1],
            freq: &t[a + 1..],
        })
    }

    pub fn fully_consumed(&self) -> bool {
        self.offset == self.blob.len()
    }
}

/// Encode `symbols[i]` under the i-th table of the blob.
pub fn encode_stream(
    symbols: &[u16],
    alphabets: &[u16],
    tables: &[u16],
    out: &mut [u8],
) -> Result<usize, CoderError> {
    if symbols.len() != alphabets.len() {
        return Err(CoderError::BadArgs);
    }
    let mut walker = TableWalker::new(tables);
    let mut enc = RangeEncoder::new(out);
    for (&sym, &alpha) in symbols.iter().zip(alphabets) {
        let t = walker.next(alpha)?;
        let a = alpha as usize;
        if (sym as usize) >= a {
            return Err(CoderError::BadSymbol);
        }
        let lo = t.cum[sym as usize] as u32;
        let total = logical_total(t.cum);
        let hi = if sym as usize + 1 == a {
            total
        } else {
            t.cum[sym as usize + 1] as u32
        };
        if hi <= lo || t.freq[sym as usize] as u32 != hi - lo {
            return Err(CoderError::BadTable);
        }
        enc.encode(lo, hi - lo, total)?;
    }
    if !walker.fully_consumed() {
        return Err(CoderError::BadArgs);
    }
    enc.finish()
}

/// Inverse of [`encode_stream`]; writes decoded symbols into `out`.
pub fn decode_stream(
    data: &[u8],
    alphabets: &[u16],
    tables: &[u16],
    out: &mut [u16],
) -> Result<(), CoderError> {
    if out.len() != alphabets.len() {
        return Err(CoderError::BadArgs);
    }
    let mut walker = TableWalker::new(tables);
    let mut dec = RangeDecoder::new(data)?;
    for (slot, &alpha) in out.iter_mut().zip(alphabets) {
        let t = walker.next(alpha)?;
        *slot = dec.decode(t.cum)?;
    }
    if !walker.fully_consumed() {
        return Err(CoderError::BadArgs);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Build the flat layout from a plain cumulative table.
    fn layout(cum: &[u32]) -> (u16, Vec<u16>) {
        let a = cum.len() - 1;
        let mut v: Vec<u16> = cum.iter().map(|&c| (c & 0xFFFF) as u16).collect();
        for i in 0..a {
            v.push((cum[i + 1] - cum[i]) as u16);
        }
        v.push(0);
        (a as u16, v)
    }

    fn run(symbols: &[u16], cums: &[&[u32]]) -> Vec<u8> {
        let mut alphabets = Vec::new();
        let mut blob = Vec::new();
        for c in cums {
            let (a, mut t) = layout(c);
            alphabets.push(a);
            blob.append(&mut t);
        }
        let mut out = vec![0u8; symbols.len() * 8 + 64];
        let n = encode_stream(symbols, &alphabets, &blob, &mut out).unwrap();
        out.truncate(n);
        let mut back = vec![0u16; symbols.len()];
        decode_stream(&out, &alphabets, &blob, &mut back).unwrap();
        assert_eq!(back, symbols);
        out
    }

    #[test]
    fn empty_stream_is_empty() {
        let mut out = [0u8; 8];
        assert_eq!(encode_stream(&[], &[], &[], &mut out).unwrap(), 0);
    }

    #[test]
    fn matches_reference_bytes() {
        // Frozen outputs of the reference coder for the same streams.
        let a: &[u32] = &[0, 10, 600, 65536];
        let b: &[u32] = &[0, 32768, 65536];
        let syms = [0u16, 1, 2, 1, 0, 2, 2, 1, 1, 0];
        let cums: [&[u32]; 10] = [a, b, a, a, b, a, a, b, a, b];
        assert_eq!(run(&syms, &cums), vec![0u8, 5, 14, 210]);

        // guaranteed symbol at the low edge collapses to zero bytes
        let c: &[u32] = &[0, 1, 65536];
        assert_eq!(run(&[0], &[c]), Vec::<u8>::new());

        // small total (bypass-style table)
        let d: &[u32] = &[0, 1, 2, 3, 4];
        assert_eq!(run(&[3, 0, 2], &[d, d, d]), vec![200u8, 0]);
    }

    #[test]
    fn roundtrip_random_streams() {
        // deterministic xorshift so the test needs no external crates
        let mut state = 0x243F6A8885A308D3u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..500 {
            let n = (next() % 40 + 1) as usize;
            let mut alphabets = Vec::new();
            let mut blob = Vec::new();
            let mut symbols = Vec::new();
            for _ in 0..n {
                let a = (next() % 20 + 2) as usize;
                let mut freqs: Vec<u32> = (0..a).map(|_| (next() % 2000 + 1) as u32).collect();
                let sum: u32 = freqs.iter().sum();
                // stretch the largest slot so the table totals 2^16 half
                // the time, which exercises the wrapped storage
                if next() % 2 == 0 {
                    let imax = freqs
                        .iter()
                        .enumerate()
                        .max_by_key(|(_, &f)| f)
                        .map(|(i, _)| i)
                        .unwrap();
                    freqs[imax] += TOTAL_LIMIT - sum;
                }
                let mut cum = vec![0u32];
                for f in &freqs {
                    cum.push(cum.last().unwrap() + f);
                }
                let (alpha, mut t) = layout(&cum);
                alphabets.push(alpha);
                blob.append(&mut t);
                symbols.push((next() % a as u64) as u16);
            }
            let mut out = vec![0u8; n * 8 + 64];
            let len = encode_stream(&symbols, &alphabets, &blob, &mut out).unwrap();
            out.truncate(len);
            let mut back = vec![0u16; n];
            decode_stream(&out, &alphabets, &blob, &mut back).unwrap();
            assert_eq!(back, symbols);
        }
    }

    #[test]
    fn rejects_malformed_input() {
        let c: &[u32] = &[0, 1, 65536];
        let (a, t) = layout(c);
        let mut out = [0u8; 16];
        // symbol out of range
        assert_eq!(
            encode_stream(&[5], &[a], &t, &mut out).unwrap_err(),
            CoderError::BadSymbol
        );
        // blob too short
        assert_eq!(
            encode_stream(&[0, 0], &[a, a], &t, &mut out).unwrap_err(),
            CoderError::BadArgs
        );
        // odd-length stream
        let mut syms = [0u16];
        assert_eq!(
            decode_stream(&[1u8], &[a], &t, &mut syms).unwrap_err(),
            CoderError::BadStream
        );
        // zero-frequency slot
        let bad: &[u32] = &[0, 0, 65536];
        let (ab, tb) = layout(bad);
        assert_eq!(
            encode_stream(&[0], &[ab], &tb, &mut out).unwrap_err(),
            CoderError::BadTable
        );
    }
}

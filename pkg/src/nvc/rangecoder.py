"""Reference range coder and discretized-Gaussian symbol tables.

The coder is a 64-bit-state range coder with 16-bit renormalization and
carry propagation (cache + pending-word scheme).  Streams are sequences of
big-endian 16-bit words; a decoder that runs past the end of a stream reads
zero words, which the finish rule exploits to drop trailing zeros.  The
exact emission rule is normative and documented in FORMAT.md; any
alternative implementation must be byte-identical.

Conditional latents are coded with discretized Gaussians.  Means are
snapped to a 1/64 grid and scales to a frozen 64-entry geometric table, so
each integer CDF depends only on (scale index, mean fraction) and can be
cached.  Values outside the +-16-sigma window are escape-coded through a
raw-bit bypass path.
"""

from __future__ import annotations

import numpy as np

from .core import DecodeError
from .detmath import (
    MU_GRID,
    SIGMA_TABLE,
    det_norm_cdf,
    snap_mu,
    snap_sigma_index,
)

MASK64 = (1 << 64) - 1
RENORM_LIMIT = 1 << 48          # renormalize while range is below this
WORD_BITS = 16
TOTAL = 1 << 16                 # frequency tables always sum to 2**16
_HIGH_WORD = 0xFFFF << 48


class RangeEncoder:
    """Carry-aware range encoder emitting big-endian 16-bit words."""

    def __init__(self) -> None:
        self.low = 0
        self.range = MASK64
        self._cache = 0
        self._cache_valid = False
        self._pending = 0
        self._words: list[int] = []
        self._ops = 0

    def encode_symbol(self, cum: int, freq: int, total: int = TOTAL) -> None:
        if freq <= 0 or cum < 0 or cum + freq > total or total > TOTAL:
            raise ValueError("bad frequency interval")
        r = self.range // total
        self.low += r * cum
        self.range = r * freq
        self._ops += 1
        self._renorm()

    def encode_bits(self, value: int, nbits: int) -> None:
        """Bypass path: ``nbits`` raw bits (at most 16 per call)."""

        if not 0 < nbits <= WORD_BITS or not 0 <= value < (1 << nbits):
            raise ValueError("bad bypass value")
        r = self.range >> nbits
        self.low += r * value
        self.range = r
        self._ops += 1
        self._renorm()

    def _renorm(self) -> None:
        while self.range < RENORM_LIMIT:
            self._shift_low()
            self.range <<= WORD_BITS

    def _shift_low(self) -> None:
        low = self.low
        if low < _HIGH_WORD or low > MASK64:
            carry = low >> 64
            if self._cache_valid:
                self._words.append((self._cache + carry) & 0xFFFF)
            self._words.extend([(0xFFFF + carry) & 0xFFFF] * self._pending)
            self._pending = 0
            self._cache = (low >> 48) & 0xFFFF
            self._cache_valid = True
        else:
            self._pending += 1
        self.low = (low << WORD_BITS) & MASK64

    def finish(self) -> bytes:
        """Close the stream.  A coder that never coded anything yields
        zero bytes; otherwise the shortest final value in the current
        interval is emitted and trailing zero words are dropped."""

        if self._ops == 0:
            return b""
        k = self.range.bit_length() - 1
        self.low = ((self.low + (1 << k) - 1) >> k) << k
        for _ in range(4):
            self._shift_low()
        if self._cache_valid:
            self._words.append(self._cache)
            self._cache_valid = False
        self._words.extend([0xFFFF] * self._pending)
        self._pending = 0
        while self._words and self._words[-1] == 0:
            self._words.pop()
        out = bytearray()
        for w in self._words:
            out.append(w >> 8)
            out.append(w & 0xFF)
        return bytes(out)


class RangeDecoder:
    """Mirror of :class:`RangeEncoder`; missing words read as zero."""

    def __init__(self, data: bytes) -> None:
        if len(data) % 2:
            raise DecodeError("range-coded chunk has odd byte length")
        self._data = data
        self._pos = 0
        self.range = MASK64
        self.code = 0
        for _ in range(4):
            self.code = (self.code << WORD_BITS) | self._next_word()

    def _next_word(self) -> int:
        if self._pos + 2 <= len(self._data):
            w = (self._data[self._pos] << 8) | self._data[self._pos + 1]
            self._pos += 2
            return w
        return 0

    def decode_symbol(self, cum_table: np.ndarray, total: int = TOTAL) -> int:
        r = self.range // total
        f = self.code // r
        if f >= total:
            f = total - 1
        sym = int(np.searchsorted(cum_table, f, side="right")) - 1
        lo = int(cum_table[sym])
        hi = int(cum_table[sym + 1])
        self.code -= r * lo
        self.range = r * (hi - lo)
        self._renorm()
        return sym

    def decode_bits(self, nbits: int) -> int:
        r = self.range >> nbits
        v = self.code // r
        limit = (1 << nbits) - 1
        if v > limit:
            v = limit
        self.code -= r * v
        self.range = r
        self._renorm()
        return v

    def _renorm(self) -> None:
        while self.range < RENORM_LIMIT:
            self.code = ((self.code << WORD_BITS) | self._next_word()) & MASK64
            self.range <<= WORD_BITS


def range_encode(symbols, cdfs) -> bytes:
    """Encode ``symbols[i]`` under cumulative table ``cdfs[i]``.

    Each table is an integer array ``cum[0..A]`` with ``cum[0] == 0`` and
    ``cum[A]`` equal to the total frequency (at most 2**16).
    """

    enc = RangeEncoder()
    for sym, cdf in zip(symbols, cdfs):
        total = int(cdf[-1])
        lo = int(cdf[sym])
        enc.encode_symbol(lo, int(cdf[sym + 1]) - lo, total)
    return enc.finish()


def range_decode(data: bytes, cdfs) -> list[int]:
    """Inverse of :func:`range_encode` given the same table sequence."""

    dec = RangeDecoder(data)
    out = []
    for cdf in cdfs:
        arr = np.asarray(cdf)
        out.append(dec.decode_symbol(arr, int(arr[-1])))
    return out


# ---------------------------------------------------------------------------
# discretized Gaussians


def _window_size(sigma: float) -> int:
    return max(1, int(np.ceil(16.0 * sigma)))


class _CdfEntry:
    __slots__ = ("window", "cum", "freq", "bits")

    def __init__(self, window: int, cum: np.ndarray, freq: np.ndarray) -> None:
        self.window = window
        self.cum = cum
        self.freq = freq
        self.bits = -np.log2(freq.astype(np.float64) / TOTAL)


_CDF_CACHE: dict[tuple[int, int], _CdfEntry] = {}


def gaussian_cdf_entry(sigma_index: int, mu_frac: int) -> _CdfEntry:
    """Integer CDF for a Gaussian with scale ``SIGMA_TABLE[sigma_index]``
    and mean ``mu_frac / 64`` (mu_frac in [0, 64)).

    Alphabet layout: symbol 0 is the low tail escape, symbols
    ``1 .. 2W+2`` are the integers ``-W .. W+1`` relative to the integer
    part of the mean, and the last symbol is the high tail escape.
    """

    key = (int(sigma_index), int(mu_frac))
    hit = _CDF_CACHE.get(key)
    if hit is not None:
        return hit
    sigma = float(SIGMA_TABLE[sigma_index])
    w = _window_size(sigma)
    mu = mu_frac / MU_GRID
    d = np.arange(-w, w + 2, dtype=np.float64)
    hi = det_norm_cdf((d + 0.5 - mu) / sigma)
    lo = det_norm_cdf((d - 0.5 - mu) / sigma)
    p_reg = np.maximum(hi - lo, 0.0)
    p_low = det_norm_cdf((-w - 0.5 - mu) / sigma)
    p_high = 1.0 - det_norm_cdf((w + 1.5 - mu) / sigma)
    p = np.concatenate(([max(p_low, 0.0)], p_reg, [max(p_high, 0.0)]))
    nsym = p.shape[0]
    scale = TOTAL - nsym
    freq = np.maximum(np.floor(p * scale), 1.0).astype(np.int64)
    rem = TOTAL - int(freq.sum())
    if rem >= 0:
        freq[int(np.argmax(p))] += rem
    else:
        while rem < 0:
            i = int(np.argmax(freq))
            take = min(int(freq[i]) - 1, -rem)
            freq[i] -= take
            rem += take
    cum = np.zeros(nsym + 1, dtype=np.int64)
    np.cumsum(freq, out=cum[1:])
    entry = _CdfEntry(w, cum, freq)
    _CDF_CACHE[key] = entry
    return entry


def snap_gaussian(mu, sigma):
    """Snap raw (mu, sigma) onto the coding grids.

    Returns ``(mu_scaled, sigma_index)`` where ``mu_scaled`` is the mean
    times 64 rounded to an integer.  Snapping already snapped parameters is
    the identity.
    """

    return snap_mu(mu), snap_sigma_index(np.asarray(sigma, dtype=np.float64))


def snapped_sigma(sigma_index):
    return SIGMA_TABLE[sigma_index]


def _encode_varint(enc: RangeEncoder, value: int) -> None:
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            enc.encode_bits(byte | 0x80, 8)
        else:
            enc.encode_bits(byte, 8)
            return


def _decode_varint(dec: RangeDecoder) -> int:
    value = 0
    shift = 0
    while True:
        byte = dec.decode_bits(8)
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value
        shift += 7
        if shift > 63:
            raise DecodeError("escape value out of range")


def gaussian_encode(enc: RangeEncoder, values: np.ndarray,
                    mu_scaled: np.ndarray, sigma_index: np.ndarray) -> float:
    """Code integer ``values`` under snapped per-element Gaussians.

    Returns the table self-information in bits (escape payload counts 8
    bits per bypass chunk).
    """

    values = np.asarray(values, dtype=np.int64).ravel()
    mu_scaled = np.asarray(mu_scaled, dtype=np.int64).ravel()
    sigma_index = np.asarray(sigma_index, dtype=np.int64).ravel()
    bits = 0.0
    for v, m, s in zip(values.tolist(), mu_scaled.tolist(), sigma_index.tolist()):
        entry = gaussian_cdf_entry(s, m - (m >> 6 << 6))
        w = entry.window
        center = m >> 6
        d = v - center
        if d < -w:
            idx = 0
        elif d > w + 1:
            idx = 2 * w + 3
        else:
            idx = d + w + 1
        cum = entry.cum
        enc.encode_symbol(int(cum[idx]), int(entry.freq[idx]))
        bits += float(entry.bits[idx])
        if idx == 0:
            excess = (-w - 1) - d
            _encode_varint(enc, excess)
            bits += 8.0 * max(1, (excess.bit_length() + 6) // 7)
        elif idx == 2 * w + 3:
            excess = d - (w + 2)
            _encode_varint(enc, excess)
            bits += 8.0 * max(1, (excess.bit_length() + 6) // 7)
    return bits


def gaussian_decode(dec: RangeDecoder, mu_scaled: np.ndarray,
                    sigma_index: np.ndarray) -> np.ndarray:
    """Inverse of :func:`gaussian_encode`."""

    mu_scaled = np.asarray(mu_scaled, dtype=np.int64).ravel()
    sigma_index = np.asarray(sigma_index, dtype=np.int64).ravel()
    out = np.empty(mu_scaled.shape[0], dtype=np.int64)
    for i, (m, s) in enumerate(zip(mu_scaled.tolist(), sigma_index.tolist())):
        entry = gaussian_cdf_entry(s, m - (m >> 6 << 6))
        w = entry.window
        center = m >> 6
        idx = dec.decode_symbol(entry.cum)
        if idx == 0:
            out[i] = center - w - 1 - _decode_varint(dec)
        elif idx == 2 * w + 3:
            out[i] = center + w + 2 + _decode_varint(dec)
        else:
            out[i] = center + idx - w - 1
    return out


def gaussian_bits(values: np.ndarray, mu_scaled: np.ndarray,
                  sigma_index: np.ndarray) -> float:
    """Table self-information of ``values`` without touching a coder."""

    values = np.asarray(values, dtype=np.int64).ravel()
    mu_scaled = np.asarray(mu_scaled, dtype=np.int64).ravel()
    sigma_index = np.asarray(sigma_index, dtype=np.int64).ravel()
    bits = 0.0
    for v, m, s in zip(values.tolist(), mu_scaled.tolist(), sigma_index.tolist()):
        entry = gaussian_cdf_entry(s, m - (m >> 6 << 6))
        w = entry.window
        d = v - (m >> 6)
        if d < -w:
            idx, excess = 0, (-w - 1) - d
        elif d > w + 1:
            idx, excess = 2 * w + 3, d - (w + 2)
        else:
            idx, excess = d + w + 1, None
        bits += float(entry.bits[idx])
        if excess is not None:
            bits += 8.0 * max(1, (excess.bit_length() + 6) // 7)
    return bits

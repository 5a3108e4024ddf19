"""ctypes bridge to the optional Rust range-coder kernel.

The kernel is a shared library (``libcoder_accel``) exposing three C entry
points: ``accel_encode`` / ``accel_decode`` for symbol streams and
``accel_build_cdf`` for discretized-Gaussian tables.  Streams are described
as flat arrays: one u16 symbol per op, a parallel array of alphabet sizes,
and a concatenated table blob where each table stores ``cum[0..A]`` followed
by ``freq[0..A]`` (the final freq slot is padding), i.e. ``2A + 2`` u16
values.  ``cum`` entries are stored modulo 2**16; only the final entry may
wrap, so a stored 0 there means a total of 2**16.

Everything in this module is optional: :func:`available` reports whether the
library could be loaded, and nothing else in the package imports this module
for correctness.  The bypass path of the reference coder (``encode_bits``)
is arithmetic-identical to coding a symbol under a uniform table, which is
how Gaussian escape payloads are expressed here.

Error codes cross the boundary unchanged and are re-raised as the exception
types the reference coder uses for the same condition:

====  ==============  =========================================
code  kernel meaning  raised as
====  ==============  =========================================
 -1   bad arguments   ``ValueError``
 -2   bad table       ``ValueError``
 -3   buffer small    ``RuntimeError`` (wrapper sizing bug)
 -4   bad stream      :class:`~nvc.core.DecodeError`
 -5   bad symbol      ``ValueError``
====  ==============  =========================================
"""

from __future__ import annotations

import ctypes
import os
from pathlib import Path

import numpy as np

from .core import DecodeError
from .rangecoder import gaussian_cdf_entry

_ENV_VAR = "NVC_ACCEL_LIB"
_ERRORS = {
    -1: (ValueError, "bad arguments"),
    -2: (ValueError, "bad table"),
    -3: (RuntimeError, "output buffer too small"),
    -4: (DecodeError, "bad stream"),
    -5: (ValueError, "symbol out of range"),
}

_U16P = ctypes.POINTER(ctypes.c_uint16)
_U8P = ctypes.POINTER(ctypes.c_uint8)


def _candidate_paths():
    env = os.environ.get(_ENV_VAR)
    if env:
        yield Path(env)
    root = Path(__file__).resolve().parents[2]
    for profile in ("release", "debug"):
        base = root / "coder-accel" / "target" / profile
        for name in ("libcoder_accel.so", "libcoder_accel.dylib", "coder_accel.dll"):
            yield base / name


def _load() -> ctypes.CDLL | None:
    for path in _candidate_paths():
        if not path.is_file():
            continue
        lib = ctypes.CDLL(str(path))
        lib.accel_version.restype = ctypes.c_uint32
        lib.accel_version.argtypes = []
        lib.accel_encode.restype = ctypes.c_int32
        lib.accel_encode.argtypes = [
            _U16P, ctypes.c_size_t,           # symbols
            _U16P,                            # alphabets
            _U16P, ctypes.c_size_t,           # tables
            _U8P, ctypes.c_size_t,            # out buffer
            ctypes.POINTER(ctypes.c_size_t),  # out length
        ]
        lib.accel_decode.restype = ctypes.c_int32
        lib.accel_decode.argtypes = [
            _U8P, ctypes.c_size_t,            # stream
            ctypes.c_size_t,                  # op count
            _U16P,                            # alphabets
            _U16P, ctypes.c_size_t,           # tables
            _U16P,                            # out symbols
        ]
        lib.accel_build_cdf.restype = ctypes.c_int32
        lib.accel_build_cdf.argtypes = [
            ctypes.c_uint32, ctypes.c_uint32,
            _U16P, ctypes.c_size_t,
            ctypes.POINTER(ctypes.c_size_t),
        ]
        if lib.accel_version() != 1:
            continue
        return lib
    return None


_LIB: ctypes.CDLL | None = None
_TRIED = False


def available() -> bool:
    """True when the shared library was found and loaded."""

    global _LIB, _TRIED
    if not _TRIED:
        _TRIED = True
        try:
            _LIB = _load()
        except OSError:
            _LIB = None
    return _LIB is not None


def _require() -> ctypes.CDLL:
    if not available():
        raise RuntimeError("accelerated coder library is not available")
    assert _LIB is not None
    return _LIB


def _check(rc: int) -> None:
    if rc == 0:
        return
    kind, msg = _ERRORS.get(rc, (RuntimeError, "unknown kernel error"))
    raise kind(f"accelerated coder: {msg} (code {rc})")


def _u16(arr) -> np.ndarray:
    return np.ascontiguousarray(arr, dtype=np.uint16)


def _ptr(arr: np.ndarray, ty):
    # NULL for empty arrays; the kernel accepts that pairing
    if arr.size == 0:
        return None
    return arr.ctypes.data_as(ty)


def pack_cdf(cum) -> np.ndarray:
    """Flatten one cumulative table into the kernel's storage layout.

    ``cum`` is the reference-coder table ``[0, ..., total]`` with
    ``total <= 2**16``; the result is the ``2A + 2`` u16 block described in
    the module docstring.
    """

    cum = np.asarray(cum, dtype=np.int64)
    a = cum.shape[0] - 1
    out = np.empty(2 * a + 2, dtype=np.uint16)
    out[: a + 1] = cum & 0xFFFF
    out[a + 1 : 2 * a + 1] = np.diff(cum) & 0xFFFF
    out[-1] = 0
    return out


def encode_ops(symbols, alphabets, tables) -> bytes:
    """Encode a flat op stream; mirrors the reference coder byte for byte."""

    lib = _require()
    symbols = _u16(symbols)
    alphabets = _u16(alphabets)
    tables = _u16(tables)
    n = symbols.shape[0]
    out = np.empty(8 * n + 64, dtype=np.uint8)
    out_len = ctypes.c_size_t()
    _check(lib.accel_encode(
        _ptr(symbols, _U16P), n,
        _ptr(alphabets, _U16P),
        _ptr(tables, _U16P), tables.shape[0],
        out.ctypes.data_as(_U8P), out.shape[0],
        ctypes.byref(out_len),
    ))
    return out[: out_len.value].tobytes()


def decode_ops(data: bytes, alphabets, tables) -> np.ndarray:
    """Decode a flat op stream produced by :func:`encode_ops`."""

    lib = _require()
    alphabets = _u16(alphabets)
    tables = _u16(tables)
    n = alphabets.shape[0]
    buf = np.frombuffer(data, dtype=np.uint8)
    out = np.empty(n, dtype=np.uint16)
    _check(lib.accel_decode(
        _ptr(buf, _U8P), buf.shape[0], n,
        _ptr(alphabets, _U16P),
        _ptr(tables, _U16P), tables.shape[0],
        _ptr(out, _U16P),
    ))
    return out


def build_cdf(sigma_index: int, mu_frac: int) -> np.ndarray:
    """Gaussian table for ``(sigma_index, mu_frac)`` in storage layout."""

    lib = _require()
    out = np.empty(8 * 2048 + 16, dtype=np.uint16)
    out_len = ctypes.c_size_t()
    _check(lib.accel_build_cdf(
        sigma_index, mu_frac,
        out.ctypes.data_as(_U16P), out.shape[0],
        ctypes.byref(out_len),
    ))
    return out[: out_len.value].copy()


def range_encode(symbols, cdfs) -> bytes:
    """Drop-in for :func:`nvc.rangecoder.range_encode`."""

    alphabets = np.array([len(c) - 1 for c in cdfs], dtype=np.uint16)
    blocks = [pack_cdf(c) for c in cdfs]
    tables = np.concatenate(blocks) if blocks else np.empty(0, dtype=np.uint16)
    return encode_ops(symbols, alphabets, tables)


def range_decode(data: bytes, cdfs) -> list[int]:
    """Drop-in for :func:`nvc.rangecoder.range_decode`."""

    alphabets = np.array([len(c) - 1 for c in cdfs], dtype=np.uint16)
    blocks = [pack_cdf(c) for c in cdfs]
    tables = np.concatenate(blocks) if blocks else np.empty(0, dtype=np.uint16)
    return decode_ops(data, alphabets, tables).astype(np.int64).tolist()


# ---------------------------------------------------------------------------
# Gaussian streams

_BYPASS_ALPHA = 256
_BYPASS_TABLE = pack_cdf(np.arange(_BYPASS_ALPHA + 1))

_ENTRY_BLOBS: dict[tuple[int, int], tuple[int, np.ndarray, int]] = {}


def _entry_blob(sigma_index: int, mu_frac: int) -> tuple[int, np.ndarray, int]:
    key = (sigma_index, mu_frac)
    hit = _ENTRY_BLOBS.get(key)
    if hit is None:
        entry = gaussian_cdf_entry(sigma_index, mu_frac)
        alpha = entry.cum.shape[0] - 1
        hit = (alpha, pack_cdf(entry.cum), entry.window)
        _ENTRY_BLOBS[key] = hit
    return hit


def _varint_bytes(value: int) -> list[int]:
    out = []
    while True:
        byte = value & 0x7F
        value >>= 7
        out.append(byte | 0x80 if value else byte)
        if not value:
            return out


def gaussian_ops(values, mu_scaled, sigma_index):
    """Flatten a Gaussian stream (escapes included) into op arrays.

    Returns ``(symbols, alphabets, tables)`` suitable for
    :func:`encode_ops`; escape payload bytes become uniform-table ops, so
    the resulting stream is byte-identical to the reference
    ``gaussian_encode``.
    """

    values = np.asarray(values, dtype=np.int64).ravel()
    mu_scaled = np.asarray(mu_scaled, dtype=np.int64).ravel()
    sigma_index = np.asarray(sigma_index, dtype=np.int64).ravel()
    symbols: list[int] = []
    alphabets: list[int] = []
    blocks: list[np.ndarray] = []
    for v, m, s in zip(values.tolist(), mu_scaled.tolist(), sigma_index.tolist()):
        alpha, blob, w = _entry_blob(s, m - (m >> 6 << 6))
        d = v - (m >> 6)
        if d < -w:
            idx, excess = 0, (-w - 1) - d
        elif d > w + 1:
            idx, excess = 2 * w + 3, d - (w + 2)
        else:
            idx, excess = d + w + 1, None
        symbols.append(idx)
        alphabets.append(alpha)
        blocks.append(blob)
        if excess is not None:
            for byte in _varint_bytes(excess):
                symbols.append(byte)
                alphabets.append(_BYPASS_ALPHA)
                blocks.append(_BYPASS_TABLE)
    tables = np.concatenate(blocks) if blocks else np.empty(0, dtype=np.uint16)
    return (
        np.array(symbols, dtype=np.uint16),
        np.array(alphabets, dtype=np.uint16),
        tables,
    )


def gaussian_encode(values, mu_scaled, sigma_index) -> bytes:
    """Accelerated equivalent of the reference ``gaussian_encode`` stream."""

    return encode_ops(*gaussian_ops(values, mu_scaled, sigma_index))

//! Accelerated range-coder kernel.
//!
//! A drop-in replacement for the reference entropy-coding hot path:
//! the 64-bit/16-bit-word carry-aware range coder and the
//! discretized-Gaussian table builder.  Output is byte-identical to the
//! reference implementation — FORMAT.md in the repository root is the
//! single normative description both implementations follow, and the
//! Python test suite fuzzes the two against each other.
//!
//! The crate builds as a `cdylib` exposing a small C ABI (see [`ffi`])
//! and as an `rlib` for the Rust tests.

pub mod coder;
pub mod detmath;
pub mod ffi;
pub mod gaussian;

pub use coder::{decode_stream, encode_stream, CoderError, RangeDecoder, RangeEncoder};
pub use gaussian::{alphabet_size, build_cdf, window_size};

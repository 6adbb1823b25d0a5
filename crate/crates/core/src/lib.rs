//! Approximate computation on the nonnegative `(x, max)` semiring, and on the
//! isomorphic `(+, min)` and `(+, max)` semirings, by running fast algorithms
//! on the ring `(x, +)` at a family of exponents `p` and estimating maxima from
//! the resulting norm-power sequences.
//!
//! * [`maxconv`]: max-convolution through FFT convolution.
//! * [`apsp`]: all-pairs shortest path distances through Strassen products.
//! * [`topk`]: the largest `k` values of `x_i + y_j`, with index recovery.
//! * [`norm_projection`]: the shared maximum estimator and `p` schedules.
//! * [`cli_bench`]: file formats, generators and benchmark tables for the binary.

pub mod apsp;
pub mod cli_bench;
pub mod error;
pub mod maxconv;
pub mod norm_projection;
pub mod topk;

pub use error::{Error, Result};

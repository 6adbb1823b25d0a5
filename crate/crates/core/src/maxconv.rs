//! Standard and max-convolution.
//!
//! `z_m = max_i x_i * y_(m-i)` is the maximum of the diagonal vector
//! `u^(m)_i = x_i * y_(m-i)`. For each exponent `p` of a schedule the standard
//! convolution of `x^p` and `y^p` yields `||u^(m)||_p^p` at every index at
//! once, so a handful of FFT convolutions produce a norm-power sequence per
//! index from which the maximum is estimated.

use std::ops::Deref;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::norm_projection::{
    checked_max, estimate_max_detailed, ring_power, EstimatorConfig, MaxEstimate, NormPowerSequence,
    PStarSchedule,
};

/// A nonempty vector of finite nonnegative reals.
#[derive(Debug, Clone, PartialEq)]
pub struct NonNegVector(Vec<f64>);

impl NonNegVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty);
        }
        checked_max(&values)?;
        Ok(NonNegVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for NonNegVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for NonNegVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        NonNegVector::new(values)
    }
}

/// Length of the diagonal `{(i, m - i)}` for inputs of lengths `nx` and `ny`.
pub fn diagonal_len(m: usize, nx: usize, ny: usize) -> usize {
    let total = nx + ny - 1;
    if m >= total {
        return 0;
    }
    (m + 1).min(nx).min(ny).min(total - m)
}

/// `z_m = sum_i x_i * y_(m-i)`, in O(nx * ny).
pub fn naive_convolution(x: &[f64], y: &[f64]) -> Vec<f64> {
    if x.is_empty() || y.is_empty() {
        return Vec::new();
    }
    let mut z = vec![0.0; x.len() + y.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &yj) in y.iter().enumerate() {
            z[i + j] += xi * yj;
        }
    }
    z
}

/// FFT convolution of a fixed pair of input lengths, padded to the next power
/// of two at least `nx + ny - 1`.
pub struct ConvolutionPlan {
    nx: usize,
    ny: usize,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl ConvolutionPlan {
    pub fn new(nx: usize, ny: usize) -> Self {
        let out = (nx + ny).saturating_sub(1).max(1);
        let fft_len = out.next_power_of_two();
        let mut planner = FftPlanner::new();
        ConvolutionPlan {
            nx,
            ny,
            fft_len,
            forward: planner.plan_fft_forward(fft_len),
            inverse: planner.plan_fft_inverse(fft_len),
        }
    }

    pub fn output_len(&self) -> usize {
        if self.nx == 0 || self.ny == 0 {
            0
        } else {
            self.nx + self.ny - 1
        }
    }

    pub fn convolve(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        assert_eq!((x.len(), y.len()), (self.nx, self.ny), "plan built for other lengths");
        let out = self.output_len();
        if out == 0 {
            return Vec::new();
        }
        let mut fx = self.spectrum(x);
        let fy = self.spectrum(y);
        for (a, b) in fx.iter_mut().zip(&fy) {
            *a *= *b;
        }
        self.inverse.process(&mut fx);
        let scale = 1.0 / self.fft_len as f64;
        fx[..out].iter().map(|c| c.re * scale).collect()
    }

    fn spectrum(&self, v: &[f64]) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len];
        for (slot, &value) in buf.iter_mut().zip(v) {
            slot.re = value;
        }
        self.forward.process(&mut buf);
        buf
    }
}

/// Standard convolution in O(n log n). Agrees with [`naive_convolution`]
/// to round-off, which for inputs in `[0, 1]` is far below `1e-10`.
pub fn fft_convolution(x: &[f64], y: &[f64]) -> Vec<f64> {
    ConvolutionPlan::new(x.len(), y.len()).convolve(x, y)
}

/// Exact max-convolution, `z_m = max_i x_i * y_(m-i)`, in O(nx * ny).
pub fn naive_max_convolution(x: &NonNegVector, y: &NonNegVector) -> NonNegVector {
    let mut z = vec![0.0f64; x.len() + y.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        for (j, &yj) in y.iter().enumerate() {
            z[i + j] = z[i + j].max(xi * yj);
        }
    }
    NonNegVector(z)
}

/// Approximate max-convolution with per-index estimation diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxConvolution {
    pub values: Vec<f64>,
    /// Estimate per index; `value` is in the caller's (unscaled) units.
    pub estimates: Vec<MaxEstimate>,
}

impl MaxConvolution {
    pub fn underflow_count(&self) -> usize {
        self.estimates.iter().filter(|e| e.is_underflow()).count()
    }
}

/// Fast max-convolution estimate through FFT convolutions at every exponent
/// of `schedule`. Indices whose norm powers all underflow are returned as 0.
pub fn fast_max_convolution(
    x: &NonNegVector,
    y: &NonNegVector,
    schedule: &PStarSchedule,
    config: &EstimatorConfig,
) -> Result<NonNegVector> {
    fast_max_convolution_detailed(x, y, schedule, config).map(|r| NonNegVector(r.values))
}

pub fn fast_max_convolution_detailed(
    x: &NonNegVector,
    y: &NonNegVector,
    schedule: &PStarSchedule,
    config: &EstimatorConfig,
) -> Result<MaxConvolution> {
    config.validate()?;
    let (nx, ny) = (x.len(), y.len());
    let out = nx + ny - 1;
    let x_peak = checked_max(x)?;
    let y_peak = checked_max(y)?;
    if x_peak == 0.0 || y_peak == 0.0 {
        let underflow = estimate_max_detailed(
            &NormPowerSequence::from_ring_outputs(&[], [], config.tau),
            config,
            None,
        );
        return Ok(MaxConvolution {
            values: vec![0.0; out],
            estimates: vec![underflow; out],
        });
    }
    let xs: Vec<f64> = x.iter().map(|v| v / x_peak).collect();
    let ys: Vec<f64> = y.iter().map(|v| v / y_peak).collect();

    let plan = ConvolutionPlan::new(nx, ny);
    let exponents = schedule.exponents();
    let ring_outputs: Vec<Vec<f64>> = exponents
        .par_iter()
        .map(|&p| {
            let xp: Vec<f64> = xs.iter().map(|&v| ring_power(v, p)).collect();
            let yp: Vec<f64> = ys.iter().map(|&v| ring_power(v, p)).collect();
            plan.convolve(&xp, &yp)
        })
        .collect();

    let scale = x_peak * y_peak;
    let estimates: Vec<MaxEstimate> = (0..out)
        .map(|m| {
            let seq = NormPowerSequence::from_ring_outputs(
                exponents,
                ring_outputs.iter().map(|row| row[m]),
                config.tau,
            );
            let mut est = estimate_max_detailed(&seq, config, Some(diagonal_len(m, nx, ny)));
            est.value *= scale;
            est
        })
        .collect();
    Ok(MaxConvolution {
        values: estimates.iter().map(|e| e.value).collect(),
        estimates,
    })
}

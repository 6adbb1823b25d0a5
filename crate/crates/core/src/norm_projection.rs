//! Maximum estimation from norm-power sequences.
//!
//! A nonnegative vector `u` is observed only through its norm powers
//! `s(p) = sum_i u_i^p` for the exponents `p` of a [`PStarSchedule`]. The
//! estimators in this module recover `max_i u_i` from those observations:
//!
//! * raw: `s(p)^(1/p)` at the largest stable `p`, optionally divided by
//!   `n^(1/p)` to center the worst-case error;
//! * order-1 projection: `(s(2p) / s(p))^(1/p)`;
//! * order-2 projection: model `u` as a multiset with two distinct values,
//!   `s(kp) ~ n_1 a_1^k + n_2 a_2^k` with `a_j = alpha_j^p`, and recover the
//!   `a_j` as the roots of the polynomial whose coefficients span the null
//!   space of the Hankel matrix `[[s(p), s(2p), s(3p)], [s(2p), s(3p), s(4p)]]`.
//!
//! Entries below the stability threshold `tau` are considered destroyed by
//! underflow and never participate in an estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest norm power a double-precision FFT or matrix product reproduces reliably.
pub const DEFAULT_TAU: f64 = 1e-12;

/// Slack allowed above the raw upper bound when accepting an order-2 root.
const ROOT_UPPER_SLACK: f64 = 1e-9;

/// An order-2 fit whose quadratic coefficient falls below this is treated as
/// a single-value multiset.
const DEGENERATE_QUADRATIC: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Projection {
    /// `s(p)^(1/p)` at the largest stable exponent.
    Raw,
    R1,
    R2,
}

impl Projection {
    pub fn from_order(r: u32) -> Result<Self> {
        match r {
            0 => Ok(Projection::Raw),
            1 => Ok(Projection::R1),
            2 => Ok(Projection::R2),
            _ => Err(Error::InvalidArgument(format!(
                "projection order must be 0, 1 or 2, got {r}"
            ))),
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Projection::Raw => 0,
            Projection::R1 => 1,
            Projection::R2 => 2,
        }
    }

    /// Order of the schedule a projection needs (raw estimates use the order-1 layout).
    pub fn schedule_order(self) -> u32 {
        self.order().max(1)
    }
}

/// The ordered set of exponents at which ring computations are performed.
///
/// For projection order `r` the exponents are the union, over power-of-two
/// bases `b <= p_max / (2r)`, of the evenly spaced multiples `b, 2b, ..., 2r*b`.
/// With `r = 2` this yields 18 exponents for `p_max = 512` and 24 for
/// `p_max = 4096`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PStarSchedule {
    p_max: u32,
    order: u32,
    exponents: Vec<u32>,
    bases: Vec<u32>,
}

pub fn build_p_schedule(p_max: u32, r: u32) -> Result<PStarSchedule> {
    if r != 1 && r != 2 {
        return Err(Error::InvalidSchedule(format!(
            "schedule order must be 1 or 2, got {r}"
        )));
    }
    if !p_max.is_power_of_two() {
        return Err(Error::InvalidSchedule(format!(
            "p_max must be a power of two, got {p_max}"
        )));
    }
    let span = 2 * r;
    if p_max < span {
        return Err(Error::InvalidSchedule(format!(
            "p_max must be at least {span} for order {r}, got {p_max}"
        )));
    }

    let top_base = p_max / span;
    let bases: Vec<u32> = std::iter::successors(Some(1u32), |b| Some(b * 2))
        .take_while(|&b| b <= top_base)
        .collect();
    let mut exponents: Vec<u32> = bases
        .iter()
        .flat_map(|&b| (1..=span).map(move |k| b * k))
        .filter(|&p| p <= p_max)
        .collect();
    exponents.sort_unstable();
    exponents.dedup();

    Ok(PStarSchedule {
        p_max,
        order: r,
        exponents,
        bases,
    })
}

impl PStarSchedule {
    /// Schedule suitable for `projection` with the given largest exponent.
    pub fn for_projection(p_max: u32, projection: Projection) -> Result<Self> {
        build_p_schedule(p_max, projection.schedule_order())
    }

    pub fn p_max(&self) -> u32 {
        self.p_max
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn bases(&self) -> &[u32] {
        &self.bases
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }
}

/// Observed norm powers `(p, s(p))` of an implicit nonnegative vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NormPowerSequence {
    entries: Vec<(u32, f64)>,
    tau: f64,
}

impl NormPowerSequence {
    /// Validating constructor: exponents strictly increasing and positive,
    /// norm powers finite and nonnegative, `tau > 0`.
    pub fn new(entries: Vec<(u32, f64)>, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        for (index, &(p, s)) in entries.iter().enumerate() {
            if p == 0 {
                return Err(Error::InvalidArgument("exponent 0 in norm-power sequence".into()));
            }
            if index > 0 && entries[index - 1].0 >= p {
                return Err(Error::InvalidArgument(
                    "norm-power exponents must be strictly increasing".into(),
                ));
            }
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::InvalidValue { index, value: s });
            }
        }
        Ok(NormPowerSequence { entries, tau })
    }

    /// Builds a sequence from ring outputs aligned with `exponents`.
    ///
    /// Negative or NaN values are round-off from a fast ring algorithm and are
    /// clamped to zero.
    pub fn from_ring_outputs<I>(exponents: &[u32], values: I, tau: f64) -> Self
    where
        I: IntoIterator<Item = f64>,
    {
        debug_assert!(exponents.windows(2).all(|w| w[0] < w[1]));
        let entries = exponents
            .iter()
            .zip(values)
            .map(|(&p, s)| (p, if s > 0.0 { s } else { 0.0 }))
            .collect();
        NormPowerSequence { entries, tau }
    }

    /// Exact norm powers of `u` at each exponent, evaluated directly.
    pub fn from_values(u: &[f64], exponents: &[u32], tau: f64) -> Self {
        Self::from_ring_outputs(exponents, exponents.iter().map(|&p| norm_power(u, p)), tau)
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `s(p)` if present and stable.
    pub fn get(&self, p: u32) -> Option<f64> {
        self.entries
            .binary_search_by_key(&p, |&(q, _)| q)
            .ok()
            .map(|i| self.entries[i].1)
            .filter(|&s| s >= self.tau)
    }

    pub fn is_stable(&self, p: u32) -> bool {
        self.get(p).is_some()
    }

    fn largest_stable(&self) -> Option<(u32, f64)> {
        self.entries.iter().rev().copied().find(|&(_, s)| s >= self.tau)
    }

    fn stable_descending(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().rev().copied().filter(|&(_, s)| s >= self.tau)
    }
}

/// `sum_i u_i^p`.
pub fn norm_power(u: &[f64], p: u32) -> f64 {
    u.iter().map(|&v| v.powi(p as i32)).sum()
}

/// `v^p` for an entry in `[0, 1]`, flushed to zero once subnormal. Such values
/// are far below any usable `tau` and only slow the ring kernels down.
#[inline]
pub(crate) fn ring_power(v: f64, p: u32) -> f64 {
    let w = v.powi(p as i32);
    if w < f64::MIN_POSITIVE {
        0.0
    } else {
        w
    }
}

/// Result of an order-`r` projection.
///
/// The hidden vector is modelled as a multiset of `e_m` unique values `beta_j`
/// with multiplicities `h_j`; the projection replaces it with `r` values
/// `alpha_j` with multiplicities `n_j` such that `s(kp) ~ sum_j n_j alpha_j^(kp)`.
/// `gammas` (lowest degree first) is a unit null vector of the Hankel matrix of
/// norm powers at multiples of `base_p`, and the `alpha_j` are the `1/base_p`
/// powers of the roots of `sum_i gamma_i a^i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionModel {
    pub order: u32,
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub base_p: u32,
}

impl ProjectionModel {
    pub fn estimate(&self) -> f64 {
        self.alphas.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateMethod {
    R2,
    R1,
    Raw,
    /// No stable entry; the estimate is 0.
    Underflow,
}

/// A maximum estimate together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MaxEstimate {
    pub value: f64,
    pub method: EstimateMethod,
    /// Base exponent of a projection, or the exponent of a raw estimate.
    pub exponent: Option<u32>,
}

impl MaxEstimate {
    pub const UNDERFLOW: MaxEstimate = MaxEstimate {
        value: 0.0,
        method: EstimateMethod::Underflow,
        exponent: None,
    };

    pub fn is_underflow(&self) -> bool {
        self.method == EstimateMethod::Underflow
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub projection: Projection,
    pub tau: f64,
    /// Divide raw estimates by `n^(1/p)`; never applied to projections.
    pub bias_correct: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            projection: Projection::R2,
            tau: DEFAULT_TAU,
            bias_correct: false,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau > 0.0 && self.tau.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("tau must be positive, got {}", self.tau)))
        }
    }
}

/// `s(p)^(1/p)` at the largest stable exponent.
///
/// With `bias_correct` and a known length `n_hint` the estimate is divided by
/// `n^(1/p)`, which halves the worst-case relative error.
pub fn estimate_max_raw(
    seq: &NormPowerSequence,
    n_hint: Option<usize>,
    bias_correct: bool,
) -> Result<f64> {
    raw_estimate(seq, n_hint, bias_correct)
        .map(|e| e.value)
        .ok_or(Error::AllUnderflow)
}

fn raw_estimate(seq: &NormPowerSequence, n_hint: Option<usize>, bias_correct: bool) -> Option<MaxEstimate> {
    let (p, s) = seq.largest_stable()?;
    let inv = 1.0 / f64::from(p);
    let mut value = s.powf(inv);
    if let (true, Some(n)) = (bias_correct, n_hint) {
        if n > 0 {
            value /= (n as f64).powf(inv);
        }
    }
    Some(MaxEstimate {
        value,
        method: EstimateMethod::Raw,
        exponent: Some(p),
    })
}

/// Order-1 projection `(s(2p) / s(p))^(1/p)` at the largest `p` with both
/// entries stable, falling back to the raw estimate when no such pair exists.
pub fn estimate_max_r1(seq: &NormPowerSequence) -> Result<f64> {
    r1_estimate(seq)
        .or_else(|| raw_estimate(seq, None, false))
        .map(|e| e.value)
        .ok_or(Error::AllUnderflow)
}

fn r1_estimate(seq: &NormPowerSequence) -> Option<MaxEstimate> {
    seq.stable_descending().find_map(|(p, s)| {
        let s2 = seq.get(p.checked_mul(2)?)?;
        Some(MaxEstimate {
            value: (s2 / s).powf(1.0 / f64::from(p)),
            method: EstimateMethod::R1,
            exponent: Some(p),
        })
    })
}

/// Order-2 projection at the largest base `p` whose multiples `p, 2p, 3p, 4p`
/// are all stable.
///
/// Fails with [`Error::DegenerateProjection`] when the fitted quadratic has a
/// vanishing leading coefficient, complex roots, or no root below the raw
/// upper bound; [`estimate_max`] then degrades to the order-1 projection.
pub fn estimate_max_r2(seq: &NormPowerSequence) -> Result<ProjectionModel> {
    let (p, s1, s2, s3, s4) = seq
        .stable_descending()
        .find_map(|(p, s1)| {
            let s2 = seq.get(p.checked_mul(2)?)?;
            let s3 = seq.get(p.checked_mul(3)?)?;
            let s4 = seq.get(p.checked_mul(4)?)?;
            Some((p, s1, s2, s3, s4))
        })
        .ok_or(Error::DegenerateProjection("no base with four stable multiples"))?;

    // Substituting a = t * a' with t = s2 / s1 normalizes the Hankel rows to
    // [1, 1, u3] and [1, u3, u3 * u4]; the null vector is their cross product.
    let t = s2 / s1;
    let q3 = s3 / s2;
    let q4 = s4 / s3;
    let u3 = q3 / t;
    let u4 = q4 / t;
    let g0 = u3 * (u4 - u3);
    let g1 = u3 * (1.0 - u4);
    let g2 = u3 - 1.0;

    if !(g2 > DEGENERATE_QUADRATIC) || !g0.is_finite() || !g1.is_finite() {
        return Err(Error::DegenerateProjection("vanishing quadratic coefficient"));
    }
    let disc = g1 * g1 - 4.0 * g0 * g2;
    if disc < 0.0 {
        return Err(Error::DegenerateProjection("complex roots"));
    }
    // -g1 >= 0, so the larger root has no cancellation; the smaller follows from
    // the product of roots.
    let big = (-g1 + disc.sqrt()) / (2.0 * g2);
    let small = if big > 0.0 { g0 / (g2 * big) } else { 0.0 };

    let inv = 1.0 / f64::from(p);
    let upper = seq
        .largest_stable()
        .map(|(q, s)| s.powf(1.0 / f64::from(q)))
        .unwrap_or(f64::INFINITY)
        * (1.0 + ROOT_UPPER_SLACK);
    let to_alpha = |root: f64| (t * root.max(0.0)).powf(inv);
    let top = to_alpha(big);
    if !(top > 0.0 && top <= upper) {
        // The small root alone would understate the maximum.
        return Err(Error::DegenerateProjection("largest root not admissible"));
    }
    let mut alphas = vec![top];
    let low = to_alpha(small);
    if low.is_finite() && low <= upper {
        alphas.push(low);
    }

    let gammas = [g0, g1 / t, g2 / (t * t)];
    let norm = gammas.iter().map(|g| g * g).sum::<f64>().sqrt();
    Ok(ProjectionModel {
        order: 2,
        alphas,
        gammas: gammas.iter().map(|g| g / norm).collect(),
        base_p: p,
    })
}

/// Total maximum estimator: order 2, then order 1, then raw, then 0.
pub fn estimate_max(seq: &NormPowerSequence, config: &EstimatorConfig, n_hint: Option<usize>) -> f64 {
    estimate_max_detailed(seq, config, n_hint).value
}

pub fn estimate_max_detailed(
    seq: &NormPowerSequence,
    config: &EstimatorConfig,
    n_hint: Option<usize>,
) -> MaxEstimate {
    let r2 = || {
        estimate_max_r2(seq).ok().map(|model| MaxEstimate {
            value: model.estimate(),
            method: EstimateMethod::R2,
            exponent: Some(model.base_p),
        })
    };
    let r1 = || r1_estimate(seq);
    let raw = || raw_estimate(seq, n_hint, config.bias_correct);

    let found = match config.projection {
        Projection::R2 => r2().or_else(r1).or_else(raw),
        Projection::R1 => r1().or_else(raw),
        Projection::Raw => raw(),
    };
    found.unwrap_or(MaxEstimate::UNDERFLOW)
}

/// Worst-case relative error of the raw estimate for a length-`n` vector:
/// `n^(1/p) - 1`, or `1 - n^(-1/p)` for the bias-corrected estimate.
pub fn relative_error_bound(n: usize, p: u32, corrected: bool) -> f64 {
    let n = n.max(1) as f64;
    let root = n.powf(1.0 / f64::from(p.max(1)));
    if corrected {
        1.0 - 1.0 / root
    } else {
        root - 1.0
    }
}

/// Inputs divided by their own maxima.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledProblem {
    pub scaled_inputs: Vec<Vec<f64>>,
    pub scale_factors: Vec<f64>,
}

impl ScaledProblem {
    /// Product of every scale factor; the factor by which a multilinear result
    /// of the scaled inputs must be multiplied.
    pub fn combined_scale(&self) -> f64 {
        self.scale_factors.iter().product()
    }
}

/// Divides each tensor by its maximum so every entry lies in `[0, 1]`.
///
/// Raising scaled entries to large powers can only underflow, never overflow.
pub fn scale_inputs(inputs: &[&[f64]]) -> Result<ScaledProblem> {
    let mut scaled_inputs = Vec::with_capacity(inputs.len());
    let mut scale_factors = Vec::with_capacity(inputs.len());
    for (which, tensor) in inputs.iter().enumerate() {
        let peak = checked_max(tensor)?;
        if peak <= 0.0 {
            return Err(Error::AllZero(which));
        }
        scaled_inputs.push(tensor.iter().map(|&v| v / peak).collect());
        scale_factors.push(peak);
    }
    Ok(ScaledProblem {
        scaled_inputs,
        scale_factors,
    })
}

/// Maximum of a nonnegative slice; rejects negative, NaN and infinite entries.
pub(crate) fn checked_max(values: &[f64]) -> Result<f64> {
    let mut peak = 0.0f64;
    for (index, &value) in values.iter().enumerate() {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::InvalidValue { index, value });
        }
        peak = peak.max(value);
    }
    Ok(peak)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact(u: &[f64], p_max: u32) -> NormPowerSequence {
        let schedule = build_p_schedule(p_max, 2).unwrap();
        NormPowerSequence::from_values(u, schedule.exponents(), DEFAULT_TAU)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn schedule_512_matches_reported_size() {
        let s = build_p_schedule(512, 2).unwrap();
        assert_eq!(
            s.exponents(),
            &[1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256, 384, 512]
        );
        assert_eq!(s.bases(), &[1, 2, 4, 8, 16, 32, 64, 128]);
    }

    #[test]
    fn schedule_4096_has_24_exponents() {
        let s = build_p_schedule(4096, 2).unwrap();
        assert_eq!(s.len(), 24);
        assert_eq!(*s.exponents().last().unwrap(), 4096);
    }

    #[test]
    fn schedule_small_and_order_one() {
        assert_eq!(build_p_schedule(4, 2).unwrap().exponents(), &[1, 2, 3, 4]);
        assert_eq!(build_p_schedule(16, 1).unwrap().exponents(), &[1, 2, 4, 8, 16]);
    }

    #[test]
    fn schedule_rejects_bad_p_max() {
        assert!(build_p_schedule(96, 2).is_err());
        assert!(build_p_schedule(2, 2).is_err());
        assert!(build_p_schedule(1, 1).is_err());
        assert!(build_p_schedule(0, 1).is_err());
        assert!(build_p_schedule(64, 3).is_err());
    }

    #[test]
    fn scaling_examples() {
        let s = scale_inputs(&[&[0.2, 0.4]]).unwrap();
        assert_eq!(s.scaled_inputs[0], vec![0.5, 1.0]);
        assert_eq!(s.scale_factors, vec![0.4]);

        let s = scale_inputs(&[&[1.0, 1.0]]).unwrap();
        assert_eq!(s.scaled_inputs[0], vec![1.0, 1.0]);
        assert_eq!(s.scale_factors, vec![1.0]);

        let s = scale_inputs(&[&[3.0, 6.0], &[10.0, 5.0]]).unwrap();
        assert_eq!(s.scale_factors, vec![6.0, 10.0]);
        assert!(s
            .scaled_inputs
            .iter()
            .flatten()
            .all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(s.combined_scale(), 60.0);
    }

    #[test]
    fn scaling_rejects_zero_and_negative() {
        assert!(matches!(scale_inputs(&[&[0.0, 0.0]]), Err(Error::AllZero(0))));
        assert!(matches!(
            scale_inputs(&[&[1.0], &[-1.0]]),
            Err(Error::InvalidValue { index: 0, .. })
        ));
    }

    #[test]
    fn raw_constant_vector() {
        for n in [1usize, 2, 7, 64] {
            let u = vec![1.0; n];
            let seq = exact(&u, 64);
            let est = estimate_max_raw(&seq, Some(n), false).unwrap();
            assert!(close(est, (n as f64).powf(1.0 / 64.0), 1e-12));
            let corrected = estimate_max_raw(&seq, Some(n), true).unwrap();
            assert!(close(corrected, 1.0, 1e-12));
        }
    }

    #[test]
    fn raw_two_values_at_p8() {
        let seq = NormPowerSequence::from_values(&[1.0, 0.5], &[8], DEFAULT_TAU);
        assert_eq!(seq.get(8), Some(1.00390625));
        let est = estimate_max_raw(&seq, None, false).unwrap();
        assert!(close(est, 1.000_487_448_816_54, 1e-10), "{est}");
    }

    #[test]
    fn r1_two_values_at_p8() {
        let seq = NormPowerSequence::from_values(&[1.0, 0.5], &[8, 16], DEFAULT_TAU);
        let est = estimate_max_r1(&seq).unwrap();
        // (1.0000152587890625 / 1.00390625)^(1/8)
        assert!(close(est, 0.999_514_695_080_67, 1e-10), "{est}");
        assert!(est < 1.0);
    }

    #[test]
    fn r1_constant_is_exact() {
        let seq = exact(&[0.3; 9], 64);
        assert!(close(estimate_max_r1(&seq).unwrap(), 0.3, 1e-12));
    }

    #[test]
    fn r1_worst_case_vector() {
        let p = 8;
        for n in [4usize, 9, 100] {
            let lambda = ((n as f64).sqrt() - 1.0) / (n as f64 - 1.0);
            let mut u = vec![lambda.powf(1.0 / f64::from(p)); n];
            u[0] = 1.0;
            let seq = NormPowerSequence::from_values(&u, &[p, 2 * p], DEFAULT_TAU);
            let est = estimate_max_r1(&seq).unwrap();
            let ratio = 2.0 * ((n as f64).sqrt() - 1.0) / (n as f64 - 1.0);
            assert!(close(1.0 - est, 1.0 - ratio.powf(1.0 / f64::from(p)), 1e-9));
            if n == 4 {
                assert!(close(ratio, 2.0 / 3.0, 1e-12));
            }
        }
    }

    #[test]
    fn r2_recovers_two_value_multiset() {
        let u = [1.0, 0.5, 0.5, 0.5];
        let seq = exact(&u, 16);
        let model = estimate_max_r2(&seq).unwrap();
        assert_eq!(model.base_p, 4);
        let mut alphas = model.alphas.clone();
        alphas.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(alphas.len(), 2);
        assert!((alphas[0] - 1.0).abs() < 1e-6, "{alphas:?}");
        assert!((alphas[1] - 0.5).abs() < 1e-6, "{alphas:?}");

        // At base 128 the 0.5 component vanishes below double precision; the
        // maximum is still exact.
        let est = estimate_max(&exact(&u, 512), &EstimatorConfig::default(), Some(4));
        assert!((est - 1.0).abs() < 1e-12);
    }

    #[test]
    fn r2_null_vector_residual() {
        let u = [0.9, 0.7, 0.7, 0.2, 0.65];
        let seq = exact(&u, 64);
        let model = estimate_max_r2(&seq).unwrap();
        let p = model.base_p;
        let s: Vec<f64> = (1..=4).map(|k| seq.get(k * p).unwrap()).collect();
        let g = &model.gammas;
        for row in 0..2 {
            let dot: f64 = (0..3).map(|c| s[row + c] * g[c]).sum();
            let scale: f64 = (0..3).map(|c| (s[row + c] * g[c]).abs()).sum();
            assert!(dot.abs() <= 1e-9 * scale, "row {row}: {dot} vs {scale}");
        }
        assert!((g.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn r2_constant_degenerates_to_exact_value() {
        let seq = exact(&[0.25; 5], 512);
        assert!(estimate_max_r2(&seq).is_err());
        let est = estimate_max_detailed(&seq, &EstimatorConfig::default(), Some(5));
        assert_eq!(est.method, EstimateMethod::R1);
        assert!(close(est.value, 0.25, 1e-12));
    }

    #[test]
    fn all_underflow_maps_to_zero() {
        let seq = NormPowerSequence::new(vec![(1, 1e-13), (2, 1e-20)], DEFAULT_TAU).unwrap();
        for projection in [Projection::R2, Projection::R1, Projection::Raw] {
            let config = EstimatorConfig {
                projection,
                ..Default::default()
            };
            let est = estimate_max_detailed(&seq, &config, None);
            assert!(est.is_underflow());
            assert_eq!(est.value, 0.0);
        }
        assert!(matches!(estimate_max_raw(&seq, None, false), Err(Error::AllUnderflow)));
        assert!(matches!(estimate_max_r1(&seq), Err(Error::AllUnderflow)));
    }

    #[test]
    fn constant_vector_exact_under_every_projection() {
        let seq = exact(&[0.75; 3], 512);
        let r2 = estimate_max(&seq, &EstimatorConfig::default(), Some(3));
        let r1 = estimate_max(
            &seq,
            &EstimatorConfig {
                projection: Projection::R1,
                ..Default::default()
            },
            Some(3),
        );
        let raw = estimate_max(
            &seq,
            &EstimatorConfig {
                projection: Projection::Raw,
                bias_correct: true,
                ..Default::default()
            },
            Some(3),
        );
        for est in [r2, r1, raw] {
            assert!(close(est, 0.75, 1e-9), "{est}");
        }
    }

    #[test]
    fn sequence_validation() {
        assert!(NormPowerSequence::new(vec![(2, 1.0), (1, 1.0)], DEFAULT_TAU).is_err());
        assert!(NormPowerSequence::new(vec![(1, -1.0)], DEFAULT_TAU).is_err());
        assert!(NormPowerSequence::new(vec![(0, 1.0)], DEFAULT_TAU).is_err());
        assert!(NormPowerSequence::new(vec![(1, 1.0)], 0.0).is_err());
        let seq = NormPowerSequence::from_ring_outputs(&[1, 2], [-1e-18, 0.5], DEFAULT_TAU);
        assert_eq!(seq.entries(), &[(1, 0.0), (2, 0.5)]);
        assert!(!seq.is_stable(1));
    }

    #[test]
    fn error_bound_values() {
        assert!(close(relative_error_bound(2, 8, false), 2f64.powf(0.125) - 1.0, 1e-15));
        assert!((relative_error_bound(2, 8, false) - 0.0905).abs() < 1e-4);
        assert_eq!(relative_error_bound(1, 17, false), 0.0);
        assert_eq!(relative_error_bound(1, 17, true), 0.0);
        assert!(close(relative_error_bound(4, 1, true), 0.75, 1e-15));
    }

    #[test]
    fn projection_orders() {
        assert_eq!(Projection::from_order(2).unwrap(), Projection::R2);
        assert_eq!(Projection::Raw.schedule_order(), 1);
        assert!(Projection::from_order(3).is_err());
    }
}

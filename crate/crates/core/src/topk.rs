//! Approximate top-k of `x_i + y_j` without forming the `n^2` sums.
//!
//! With `x'_i = e^(x_i - max x)`, ordering `x_i + y_j` is ordering
//! `x'_i * y'_j`. Every positive diagonal `m = i + j` of the outer product is
//! summarized by a [`NormQueue`] filled from FFT convolutions of powers of `x'`
//! and `y'`; a heap over the diagonals' estimated maxima then pops values in
//! (approximately) descending order. Running again on reversed `y` places each
//! value on its negative diagonal as well, which pins down `(i, j)`.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maxconv::{diagonal_len, ConvolutionPlan};
use crate::norm_projection::{
    estimate_max_detailed, ring_power, EstimatorConfig, MaxEstimate, NormPowerSequence,
    PStarSchedule,
};

/// Default relative tolerance when checking a recovered `(i, j)` against its value.
pub const DEFAULT_VERIFY_TOLERANCE: f64 = 1e-2;

/// Default relative uncertainty assumed for a popped estimate. After removing
/// `alpha`, an `s(p)` left below `guard * p * alpha^p` is cancellation noise
/// and is zeroed.
pub const DEFAULT_CANCELLATION_GUARD: f64 = 1e-4;

/// A multiset known only through its norm powers `s(p) = sum_v v^p`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormQueue {
    exponents: Vec<u32>,
    powers: Vec<f64>,
    config: EstimatorConfig,
    len_hint: Option<usize>,
    guard: f64,
}

impl NormQueue {
    pub fn new(schedule: &PStarSchedule, config: EstimatorConfig) -> Result<Self> {
        config.validate()?;
        Ok(NormQueue {
            exponents: schedule.exponents().to_vec(),
            powers: vec![0.0; schedule.len()],
            config,
            len_hint: Some(0),
            guard: DEFAULT_CANCELLATION_GUARD,
        })
    }

    pub fn from_values(values: &[f64], schedule: &PStarSchedule, config: EstimatorConfig) -> Result<Self> {
        let mut q = NormQueue::new(schedule, config)?;
        for &v in values {
            q.push(v)?;
        }
        Ok(q)
    }

    /// A queue over precomputed norm powers; negative entries are clamped to 0.
    pub fn from_norm_powers(
        exponents: &[u32],
        powers: &[f64],
        config: EstimatorConfig,
        len_hint: Option<usize>,
    ) -> Result<Self> {
        config.validate()?;
        if exponents.len() != powers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} exponents, {} norm powers",
                exponents.len(),
                powers.len()
            )));
        }
        Ok(NormQueue {
            exponents: exponents.to_vec(),
            powers: powers.iter().map(|&s| if s > 0.0 { s } else { 0.0 }).collect(),
            config,
            len_hint,
            guard: DEFAULT_CANCELLATION_GUARD,
        })
    }

    /// Replaces the cancellation guard; 0 keeps every positive residual.
    pub fn with_guard(mut self, guard: f64) -> Result<Self> {
        if !(guard >= 0.0 && guard.is_finite()) {
            return Err(Error::InvalidArgument(format!("cancellation guard {guard}")));
        }
        self.guard = guard;
        Ok(self)
    }

    pub fn guard(&self) -> f64 {
        self.guard
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn norm_powers(&self) -> &[f64] {
        &self.powers
    }

    /// Number of values still held, when known.
    pub fn len_hint(&self) -> Option<usize> {
        self.len_hint
    }

    pub fn sequence(&self) -> NormPowerSequence {
        NormPowerSequence::from_ring_outputs(&self.exponents, self.powers.iter().copied(), self.config.tau)
    }

    pub fn is_exhausted(&self) -> bool {
        self.len_hint == Some(0) || self.powers.iter().all(|&s| s < self.config.tau)
    }

    pub fn push(&mut self, v: f64) -> Result<()> {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::InvalidValue { index: 0, value: v });
        }
        if v > 0.0 {
            for (s, &p) in self.powers.iter_mut().zip(&self.exponents) {
                *s += ring_power(v, p);
            }
        }
        self.len_hint = self.len_hint.map(|n| n + 1);
        Ok(())
    }

    /// Current estimate of the largest value, without removing it.
    pub fn peek_max(&self) -> MaxEstimate {
        if self.len_hint == Some(0) {
            return MaxEstimate::UNDERFLOW;
        }
        estimate_max_detailed(&self.sequence(), &self.config, self.len_hint)
    }

    /// Estimates the largest value and subtracts its powers from every `s(p)`.
    pub fn pop_max(&mut self) -> Result<f64> {
        let est = self.peek_max();
        if est.is_underflow() {
            return Err(Error::Exhausted);
        }
        self.remove(est.value);
        Ok(est.value)
    }

    fn remove(&mut self, alpha: f64) {
        for (s, &p) in self.powers.iter_mut().zip(&self.exponents) {
            let a = ring_power(alpha, p);
            let left = *s - a;
            *s = if left > self.guard * p as f64 * a { left } else { 0.0 };
        }
        self.len_hint = self.len_hint.map(|n| n.saturating_sub(1));
    }
}

/// One value of an approximate top-k.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopKItem {
    /// Estimate of `x'_i * y'_j`, in `(0, 1]`.
    pub value: f64,
    /// The same estimate as `x_i + y_j`.
    pub log_value: f64,
    /// Positive diagonal `i + j` the value was drawn from.
    pub m_star: usize,
    pub i: Option<usize>,
    pub j: Option<usize>,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopKResult {
    pub items: Vec<TopKItem>,
    /// Fewer than `k` items could be produced.
    pub exhausted: bool,
}

/// `x'_i = e^(x_i - max x)`, and `max x`.
pub fn shifted_exp(x: &[f64]) -> Result<(Vec<f64>, f64)> {
    if x.is_empty() {
        return Err(Error::Empty);
    }
    for (index, &v) in x.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidValue { index, value: v });
        }
    }
    let top = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((x.iter().map(|&v| (v - top).exp()).collect(), top))
}

fn check_k(k: usize, nx: usize, ny: usize) -> Result<()> {
    if k == 0 || k > nx * ny {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={}", nx * ny)));
    }
    Ok(())
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Empty);
    }
    match x.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::InvalidValue { index, value: x[index] }),
        None => Ok(()),
    }
}

/// Top `k` of `x_i + y_j` by sorting all pairs. Ties go to the smaller `(i, j)`.
pub fn naive_topk_sort(x: &[f64], y: &[f64], k: usize) -> Result<Vec<(f64, usize, usize)>> {
    check_finite(x)?;
    check_finite(y)?;
    check_k(k, x.len(), y.len())?;
    let mut all: Vec<(f64, usize, usize)> = Vec::with_capacity(x.len() * y.len());
    for (i, &xi) in x.iter().enumerate() {
        for (j, &yj) in y.iter().enumerate() {
            all.push((xi + yj, i, j));
        }
    }
    let order = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
        b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2)))
    };
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, order);
        all.truncate(k);
    }
    all.sort_unstable_by(order);
    Ok(all)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Top `k` products `x'_i * y'_j` by repeatedly taking the largest diagonal
/// maximum. Returns `(value, m)`; ties go to the lower diagonal.
pub fn naive_topk_diagonal(xp: &[f64], yp: &[f64], k: usize) -> Result<Vec<(f64, usize)>> {
    for v in [xp, yp] {
        check_finite(v)?;
        crate::norm_projection::checked_max(v)?;
    }
    let (nx, ny) = (xp.len(), yp.len());
    check_k(k, nx, ny)?;
    let mut diagonals: Vec<Vec<f64>> = (0..nx + ny - 1)
        .map(|m| {
            let lo = m.saturating_sub(ny - 1);
            let hi = m.min(nx - 1);
            let mut u: Vec<f64> = (lo..=hi).map(|i| xp[i] * yp[m - i]).collect();
            u.sort_unstable_by(|a, b| a.total_cmp(b));
            u
        })
        .collect();
    let mut heap: BinaryHeap<(Key, Reverse<usize>)> = diagonals
        .iter()
        .enumerate()
        .map(|(m, u)| (Key(*u.last().expect("diagonals are nonempty")), Reverse(m)))
        .collect();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let (Key(value), Reverse(m)) = heap.pop().expect("k <= nx * ny");
        out.push((value, m));
        diagonals[m].pop();
        if let Some(&next) = diagonals[m].last() {
            heap.push((Key(next), Reverse(m)));
        }
    }
    Ok(out)
}

/// Approximate top `k` of `x_i + y_j` through per-diagonal norm queues.
///
/// Items come out in non-increasing estimated order with `m_star` set and
/// indices unset. A diagonal yields at most as many items as it holds.
pub fn fast_topk(
    x: &[f64],
    y: &[f64],
    k: usize,
    schedule: &PStarSchedule,
    config: &EstimatorConfig,
) -> Result<TopKResult> {
    config.validate()?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let (xp, x_top) = shifted_exp(x)?;
    let (yp, y_top) = shifted_exp(y)?;
    let (nx, ny) = (xp.len(), yp.len());
    let plan = ConvolutionPlan::new(nx, ny);
    let exponents = schedule.exponents();
    let sigma: Vec<Vec<f64>> = exponents
        .par_iter()
        .map(|&p| {
            let xs: Vec<f64> = xp.iter().map(|&v| ring_power(v, p)).collect();
            let ys: Vec<f64> = yp.iter().map(|&v| ring_power(v, p)).collect();
            plan.convolve(&xs, &ys)
        })
        .collect();

    let mut queues = Vec::with_capacity(nx + ny - 1);
    let mut heap = BinaryHeap::with_capacity(nx + ny - 1);
    let mut column = vec![0.0; exponents.len()];
    for m in 0..nx + ny - 1 {
        for (slot, row) in column.iter_mut().zip(&sigma) {
            *slot = row[m];
        }
        let q = NormQueue::from_norm_powers(exponents, &column, *config, Some(diagonal_len(m, nx, ny)))?;
        let est = q.peek_max();
        if !est.is_underflow() {
            heap.push((Key(est.value), Reverse(m)));
        }
        queues.push(q);
    }

    let shift = x_top + y_top;
    let mut items = Vec::with_capacity(k);
    while items.len() < k {
        let Some((Key(value), Reverse(m))) = heap.pop() else {
            break;
        };
        items.push(TopKItem {
            value,
            log_value: value.ln() + shift,
            m_star: m,
            i: None,
            j: None,
            verified: false,
        });
        let q = &mut queues[m];
        q.remove(value);
        let next = q.peek_max();
        if !next.is_underflow() {
            heap.push((Key(next.value), Reverse(m)));
        }
    }
    Ok(TopKResult {
        exhausted: items.len() < k,
        items,
    })
}

/// `(i, j)` per rank from a run on `y` and a run on reversed `y`:
/// `m1 = i + j`, `m2 = i + (ny - 1 - j)`, so `i = (m1 + m2 - ny + 1) / 2`.
/// `None` where `i` would be fractional or either index out of range.
pub fn recover_indices(
    fwd: &[TopKItem],
    rev: &[TopKItem],
    nx: usize,
    ny: usize,
) -> Result<Vec<Option<(usize, usize)>>> {
    if fwd.len() != rev.len() {
        return Err(Error::ShapeMismatch(format!(
            "forward run has {} items, reversed run {}",
            fwd.len(),
            rev.len()
        )));
    }
    Ok(fwd
        .iter()
        .zip(rev)
        .map(|(a, b)| pair_from_diagonals(a.m_star, b.m_star, nx, ny))
        .collect())
}

pub fn pair_from_diagonals(m1: usize, m2: usize, nx: usize, ny: usize) -> Option<(usize, usize)> {
    let twice_i = (m1 + m2 + 1).checked_sub(ny)?;
    if twice_i % 2 != 0 {
        return None;
    }
    let i = twice_i / 2;
    let j = m1.checked_sub(i)?;
    (i < nx && j < ny).then_some((i, j))
}

/// Verified one-to-one matching of forward and reversed items.
///
/// Every (forward, reversed) pair whose diagonals give a valid `(i, j)` is a
/// candidate if `x'_i * y'_j` is within `tolerance` of both estimates. The
/// candidates are taken greedily by summed log discrepancy, each item and each
/// `(i, j)` at most once.
pub fn recover_indices_verified(
    fwd: &[TopKItem],
    rev: &[TopKItem],
    xp: &[f64],
    yp: &[f64],
    tolerance: f64,
) -> Vec<Option<(usize, usize)>> {
    let (nx, ny) = (xp.len(), yp.len());
    let close = |actual: f64, v: f64| (actual - v).abs() <= tolerance * v;
    let mut candidates = Vec::new();
    for (a, f) in fwd.iter().enumerate() {
        for (b, r) in rev.iter().enumerate() {
            let Some((i, j)) = pair_from_diagonals(f.m_star, r.m_star, nx, ny) else {
                continue;
            };
            let actual = xp[i] * yp[j];
            if actual > 0.0 && close(actual, f.value) && close(actual, r.value) {
                let cost = (actual / f.value).ln().abs() + (actual / r.value).ln().abs();
                candidates.push((cost, a, b, (i, j)));
            }
        }
    }
    candidates.sort_by(|u, v| u.0.total_cmp(&v.0).then(u.1.cmp(&v.1)).then(u.2.cmp(&v.2)));
    let mut out = vec![None; fwd.len()];
    let mut rev_used = vec![false; rev.len()];
    let mut taken = HashSet::new();
    for (_, a, b, pair) in candidates {
        if out[a].is_none() && !rev_used[b] && taken.insert(pair) {
            out[a] = Some(pair);
            rev_used[b] = true;
        }
    }
    out
}

/// How forward and reversed items are paired up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Matching {
    /// Same rank in both runs.
    Rank,
    /// [`recover_indices_verified`], falling back to rank for leftovers.
    #[default]
    Verified,
}

/// [`fast_topk`] on `y` and on reversed `y`, with indices recovered per
/// `matching` and checked against `x'_i * y'_j` at relative tolerance `tolerance`.
///
/// If one run exhausts earlier, both are truncated to the shorter length.
pub fn fast_topk_with_indices(
    x: &[f64],
    y: &[f64],
    k: usize,
    schedule: &PStarSchedule,
    config: &EstimatorConfig,
    tolerance: f64,
    matching: Matching,
) -> Result<TopKResult> {
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidArgument(format!("verification tolerance {tolerance}")));
    }
    let mut fwd = fast_topk(x, y, k, schedule, config)?;
    let y_rev: Vec<f64> = y.iter().rev().copied().collect();
    let mut rev = fast_topk(x, &y_rev, k, schedule, config)?;
    let len = fwd.items.len().min(rev.items.len());
    fwd.items.truncate(len);
    rev.items.truncate(len);

    let (xp, _) = shifted_exp(x)?;
    let (yp, _) = shifted_exp(y)?;
    let mut pairs = recover_indices(&fwd.items, &rev.items, x.len(), y.len())?;
    if matching == Matching::Verified {
        let matched = recover_indices_verified(&fwd.items, &rev.items, &xp, &yp, tolerance);
        let taken: HashSet<_> = matched.iter().flatten().copied().collect();
        for (slot, m) in pairs.iter_mut().zip(matched) {
            *slot = m.or(slot.filter(|p| !taken.contains(p)));
        }
    }
    for (item, pair) in fwd.items.iter_mut().zip(pairs) {
        if let Some((i, j)) = pair {
            item.i = Some(i);
            item.j = Some(j);
            let actual = xp[i] * yp[j];
            item.verified = (actual - item.value).abs() <= tolerance * item.value;
        }
    }
    fwd.exhausted |= rev.exhausted;
    Ok(fwd)
}

/// Share of the `k` oracle pairs that appear among the recovered `(i, j)`.
pub fn index_accuracy(items: &[TopKItem], oracle: &[(f64, usize, usize)]) -> f64 {
    if oracle.is_empty() {
        return 1.0;
    }
    let truth: HashSet<(usize, usize)> = oracle.iter().map(|&(_, i, j)| (i, j)).collect();
    let found: HashSet<(usize, usize)> = items
        .iter()
        .filter_map(|it| Some((it.i?, it.j?)))
        .filter(|pair| truth.contains(pair))
        .collect();
    found.len() as f64 / oracle.len() as f64
}

//! Matrix products over `(+, min)`, `(x, max)` and `(x, +)`, and all-pairs
//! shortest paths by repeated approximate squaring.
//!
//! Weights `w` map to `e^-w`, which turns `(+, min)` into `(x, max)`. A
//! max-times product is then approximated from ordinary products of
//! elementwise powers, one per exponent of a [`PStarSchedule`], computed by
//! any [`RingKernel`].

use std::ops::{Index, IndexMut};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::norm_projection::{
    estimate_max_detailed, ring_power, EstimatorConfig, MaxEstimate, NormPowerSequence,
    PStarSchedule,
};

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "{} entries for a {n}x{n} matrix",
                data.len()
            )));
        }
        Ok(Matrix { n, data })
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Matrix {
            n,
            data: vec![value; n * n],
        }
    }

    pub fn zeros(n: usize) -> Self {
        Matrix::filled(n, 0.0)
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n.max(1)).take(self.n)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self[(i, j)] == self[(j, i)]))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

fn same_shape(x: &Matrix, y: &Matrix) -> Result<usize> {
    if x.n != y.n {
        return Err(Error::ShapeMismatch(format!("{0}x{0} times {1}x{1}", x.n, y.n)));
    }
    Ok(x.n)
}

/// `R_ij = min_k X_ik + Y_kj`; `+inf` marks an absent edge.
pub fn naive_minplus_matmul(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    let n = same_shape(x, y)?;
    let mut r = Matrix::filled(n, f64::INFINITY);
    for i in 0..n {
        for k in 0..n {
            let xik = x[(i, k)];
            if xik == f64::INFINITY {
                continue;
            }
            let (yk, ri) = (y.row(k), &mut r.data[i * n..(i + 1) * n]);
            for (acc, &ykj) in ri.iter_mut().zip(yk) {
                *acc = acc.min(xik + ykj);
            }
        }
    }
    Ok(r)
}

/// `R_ij = max_k X_ik * Y_kj`.
pub fn naive_maxtimes_matmul(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    let n = same_shape(x, y)?;
    let mut r = Matrix::zeros(n);
    for i in 0..n {
        for k in 0..n {
            let xik = x[(i, k)];
            let (yk, ri) = (y.row(k), &mut r.data[i * n..(i + 1) * n]);
            for (acc, &ykj) in ri.iter_mut().zip(yk) {
                *acc = acc.max(xik * ykj);
            }
        }
    }
    Ok(r)
}

/// Standard product in O(n^3).
pub fn naive_standard_matmul(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    let n = same_shape(x, y)?;
    let mut r = Matrix::zeros(n);
    gemm_acc(&x.data, &y.data, &mut r.data, n);
    Ok(r)
}

/// `c += a * b` for `n x n` row-major blocks.
fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], n: usize) {
    for i in 0..n {
        let ci = &mut c[i * n..(i + 1) * n];
        for (k, &aik) in a[i * n..(i + 1) * n].iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (acc, &bkj) in ci.iter_mut().zip(&b[k * n..(k + 1) * n]) {
                *acc += aik * bkj;
            }
        }
    }
}

/// Leaf size below which [`strassen_matmul`] multiplies naively.
pub const STRASSEN_LEAF: usize = 64;

/// Standard product by Strassen's seven-product recursion.
pub fn strassen_matmul(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    strassen_with_leaf(x, y, STRASSEN_LEAF)
}

/// Padded size `s * 2^k >= n` with `s <= leaf`: the recursion halves `k` times
/// and lands exactly on leaves of size `s`.
pub fn strassen_padded_len(n: usize, leaf: usize) -> usize {
    let leaf = leaf.max(1);
    let mut levels = 0u32;
    while n.div_ceil(1 << levels) > leaf {
        levels += 1;
    }
    n.div_ceil(1 << levels) << levels
}

pub fn strassen_with_leaf(x: &Matrix, y: &Matrix, leaf: usize) -> Result<Matrix> {
    let n = same_shape(x, y)?;
    let m = strassen_padded_len(n, leaf);
    if m == n {
        return Ok(Matrix {
            n,
            data: strassen_rec(&x.data, &y.data, n, leaf),
        });
    }
    let padded = strassen_rec(&pad(&x.data, n, m), &pad(&y.data, n, m), m, leaf);
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        data.extend_from_slice(&padded[i * m..i * m + n]);
    }
    Ok(Matrix { n, data })
}

fn pad(a: &[f64], n: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..n {
        out[i * m..i * m + n].copy_from_slice(&a[i * n..(i + 1) * n]);
    }
    out
}

fn strassen_rec(x: &[f64], y: &[f64], n: usize, leaf: usize) -> Vec<f64> {
    if n <= leaf || n % 2 == 1 {
        let mut c = vec![0.0; n * n];
        gemm_acc(x, y, &mut c, n);
        return c;
    }
    let h = n / 2;
    let [a, b, c, d] = quadrants(x, n);
    let [e, f, g, hh] = quadrants(y, n);
    let mul = |l: &[f64], r: &[f64]| strassen_rec(l, r, h, leaf);

    let p1 = mul(&a, &sub(&f, &hh));
    let p2 = mul(&add(&a, &b), &hh);
    let p3 = mul(&add(&c, &d), &e);
    let p4 = mul(&d, &sub(&g, &e));
    let p5 = mul(&add(&a, &d), &add(&e, &hh));
    let p6 = mul(&sub(&b, &d), &add(&g, &hh));
    let p7 = mul(&sub(&a, &c), &add(&e, &f));

    let mut out = vec![0.0; n * n];
    for i in 0..h {
        for j in 0..h {
            let t = i * h + j;
            out[i * n + j] = p5[t] + p4[t] - p2[t] + p6[t];
            out[i * n + j + h] = p1[t] + p2[t];
            out[(i + h) * n + j] = p3[t] + p4[t];
            out[(i + h) * n + j + h] = p1[t] + p5[t] - p3[t] - p7[t];
        }
    }
    out
}

fn quadrants(m: &[f64], n: usize) -> [Vec<f64>; 4] {
    let h = n / 2;
    let block = |r0: usize, c0: usize| {
        let mut q = Vec::with_capacity(h * h);
        for i in 0..h {
            q.extend_from_slice(&m[(r0 + i) * n + c0..(r0 + i) * n + c0 + h]);
        }
        q
    };
    [block(0, 0), block(0, h), block(h, 0), block(h, h)]
}

fn add(l: &[f64], r: &[f64]) -> Vec<f64> {
    l.iter().zip(r).map(|(a, b)| a + b).collect()
}

fn sub(l: &[f64], r: &[f64]) -> Vec<f64> {
    l.iter().zip(r).map(|(a, b)| a - b).collect()
}

/// A standard matrix multiplication used for the per-exponent products.
pub trait RingKernel: Sync {
    fn name(&self) -> &'static str;
    fn multiply(&self, x: &Matrix, y: &Matrix) -> Result<Matrix>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NaiveKernel;

impl RingKernel for NaiveKernel {
    fn name(&self) -> &'static str {
        "naive"
    }

    fn multiply(&self, x: &Matrix, y: &Matrix) -> Result<Matrix> {
        naive_standard_matmul(x, y)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StrassenKernel {
    pub leaf: usize,
}

impl Default for StrassenKernel {
    fn default() -> Self {
        StrassenKernel { leaf: STRASSEN_LEAF }
    }
}

impl RingKernel for StrassenKernel {
    fn name(&self) -> &'static str {
        "strassen"
    }

    fn multiply(&self, x: &Matrix, y: &Matrix) -> Result<Matrix> {
        strassen_with_leaf(x, y, self.leaf)
    }
}

/// Approximate max-times product with one estimate per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxTimesProduct {
    pub values: Matrix,
    /// Row-major, in the caller's units.
    pub estimates: Vec<MaxEstimate>,
}

impl MaxTimesProduct {
    pub fn underflow_count(&self) -> usize {
        self.estimates.iter().filter(|e| e.is_underflow()).count()
    }
}

/// Approximates `max_k X_ik * Y_kj` with Strassen products of elementwise
/// powers. Inputs are divided by their maxima first; cells whose norm powers
/// all underflow come back as 0.
pub fn approx_maxtimes_matmul(
    x: &Matrix,
    y: &Matrix,
    schedule: &PStarSchedule,
    config: &EstimatorConfig,
) -> Result<Matrix> {
    approx_maxtimes_matmul_with(&StrassenKernel::default(), x, y, schedule, config).map(|p| p.values)
}

pub fn approx_maxtimes_matmul_with(
    kernel: &dyn RingKernel,
    x: &Matrix,
    y: &Matrix,
    schedule: &PStarSchedule,
    config: &EstimatorConfig,
) -> Result<MaxTimesProduct> {
    config.validate()?;
    let n = same_shape(x, y)?;
    let x_peak = crate::norm_projection::checked_max(&x.data)?;
    let y_peak = crate::norm_projection::checked_max(&y.data)?;
    if n == 0 || x_peak == 0.0 || y_peak == 0.0 {
        return Ok(MaxTimesProduct {
            values: Matrix::zeros(n),
            estimates: vec![underflow_estimate(config); n * n],
        });
    }
    let xs = x.map(|v| v / x_peak);
    let ys = y.map(|v| v / y_peak);

    let exponents = schedule.exponents();
    let products: Vec<Matrix> = exponents
        .par_iter()
        .map(|&p| kernel.multiply(&xs.map(|v| ring_power(v, p)), &ys.map(|v| ring_power(v, p))))
        .collect::<Result<_>>()?;

    let scale = x_peak * y_peak;
    let estimates: Vec<MaxEstimate> = (0..n * n)
        .map(|cell| {
            let seq = NormPowerSequence::from_ring_outputs(
                exponents,
                products.iter().map(|c| c.data[cell]),
                config.tau,
            );
            let mut est = estimate_max_detailed(&seq, config, Some(n));
            est.value *= scale;
            est
        })
        .collect();
    Ok(MaxTimesProduct {
        values: Matrix {
            n,
            data: estimates.iter().map(|e| e.value).collect(),
        },
        estimates,
    })
}

fn underflow_estimate(config: &EstimatorConfig) -> MaxEstimate {
    estimate_max_detailed(&NormPowerSequence::from_ring_outputs(&[], [], config.tau), config, None)
}

/// Nonnegative edge weights with `+inf` for absent edges and a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(Matrix);

impl WeightMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.n == 0 {
            return Err(Error::Empty);
        }
        for (index, &w) in m.data.iter().enumerate() {
            if w.is_nan() || w < 0.0 {
                return Err(Error::InvalidValue { index, value: w });
            }
            if index / m.n == index % m.n && w != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "diagonal entry {} is {w}, expected 0",
                    index / m.n
                )));
            }
        }
        Ok(WeightMatrix(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        WeightMatrix::new(Matrix::from_rows(rows)?)
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// `e^-w` of a [`WeightMatrix`]: entries in `[0, 1]`, diagonal 1, absent 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedMatrix(Matrix);

impl TransformedMatrix {
    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

pub fn transform_weights(w: &WeightMatrix) -> TransformedMatrix {
    TransformedMatrix(w.0.map(|v| (-v).exp()))
}

/// `-ln` elementwise; 0 maps to `+inf`.
pub fn untransform(m: &Matrix) -> Matrix {
    m.map(|v| if v > 0.0 { -v.ln() } else { f64::INFINITY })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApspResult {
    pub distances: Matrix,
    /// Exponents of the schedule; empty for the exact oracle.
    pub exponents: Vec<u32>,
    /// Squarings performed.
    pub iterations: usize,
    /// Cells recomputed exactly because every norm power underflowed.
    pub repaired_cells: usize,
}

/// Exact all-pairs shortest paths in O(n^3).
pub fn floyd_warshall(w: &WeightMatrix) -> ApspResult {
    let n = w.n();
    let mut d = w.0.clone();
    for k in 0..n {
        let dk = d.row(k).to_vec();
        for i in 0..n {
            let dik = d[(i, k)];
            if dik == f64::INFINITY {
                continue;
            }
            for (dij, &dkj) in d.data[i * n..(i + 1) * n].iter_mut().zip(&dk) {
                let via = dik + dkj;
                if via < *dij {
                    *dij = via;
                }
            }
        }
    }
    ApspResult {
        distances: d,
        exponents: Vec::new(),
        iterations: 0,
        repaired_cells: 0,
    }
}

/// `ceil(log2(n - 1))`: squarings needed to cover simple paths of `n - 1` edges.
pub fn squaring_count(n: usize) -> usize {
    if n <= 2 {
        0
    } else {
        (usize::BITS - (n - 2).leading_zeros()) as usize
    }
}

/// Approximate shortest-path distances by repeated approximate squaring.
pub fn apsp_approx(
    w: &WeightMatrix,
    schedule: &PStarSchedule,
    config: &EstimatorConfig,
) -> Result<ApspResult> {
    apsp_approx_with(&StrassenKernel::default(), w, schedule, config)
}

/// Each squaring relaxes `D_ij` against paths `i -> k -> j` with `k` distinct
/// from both ends, as `a_i + b_j + min_k (D_ik - a_i) + (D_kj - b_j)` where
/// `a_i` and `b_j` are the smallest off-diagonal entries of row `i` and column
/// `j`. The factors `e^(-lambda (D_ik - a_i))` and `e^(-lambda (D_kj - b_j))`
/// peak at exactly 1, and `lambda` is chosen per squaring so that any detour
/// that could still shorten a finite `D_ij` keeps [`STABLE_MULTIPLES`] powers
/// above `tau`. Cells that have a two-edge path but lose every norm power to
/// underflow are relaxed exactly in O(n); cells without one are never touched,
/// so `+inf` survives exactly where the graph is disconnected.
pub fn apsp_approx_with(
    kernel: &dyn RingKernel,
    w: &WeightMatrix,
    schedule: &PStarSchedule,
    config: &EstimatorConfig,
) -> Result<ApspResult> {
    config.validate()?;
    let n = w.n();
    let mut d = w.0.clone();
    // Mirrored cells keep a symmetric input exactly symmetric under round-off.
    let symmetric = d.is_symmetric();
    let mut iterations = 0;
    let mut repaired_cells = 0;
    for _ in 0..squaring_count(n) {
        let (row_off, col_off) = offsets(&d);
        let witness = Witness::new(&d);
        let Some(lambda) = temperature(&d, &row_off, &col_off, &witness, config.tau) else {
            break;
        };
        iterations += 1;
        let (p, q) = shifted_factors(&d, &row_off, &col_off, lambda);
        let product = approx_maxtimes_matmul_with(kernel, &p, &q, schedule, config)?;

        let mut next = d.clone();
        let mut changed = false;
        for i in 0..n {
            for j in (if symmetric { i + 1 } else { 0 })..n {
                let floor = row_off[i] + col_off[j];
                if i == j || d[(i, j)] <= floor || !witness.has_path(i, j) {
                    continue;
                }
                let est = &product.estimates[i * n + j];
                let candidate = if est.is_underflow() || est.value <= 0.0 {
                    repaired_cells += 1;
                    exact_relax(&d, i, j)
                } else {
                    floor - est.value.ln() / lambda
                };
                if candidate < next[(i, j)] {
                    next[(i, j)] = candidate;
                    if symmetric {
                        next[(j, i)] = candidate;
                    }
                    changed = true;
                }
            }
        }
        d = next;
        if !changed {
            // The squaring is a function of `d` alone; further rounds repeat it.
            break;
        }
    }
    Ok(ApspResult {
        distances: d,
        exponents: schedule.exponents().to_vec(),
        iterations,
        repaired_cells,
    })
}

/// Consecutive multiples of the smallest exponent kept stable for the
/// worst improvable cell: enough for an order-2 projection at base 1.
pub const STABLE_MULTIPLES: f64 = 4.0;

/// `ln(1/tau) / (STABLE_MULTIPLES * span)`, where `span` is the largest gap
/// `D_ij - a_i - b_j` over finite cells. When no finite cell can improve but an
/// infinite one has a two-edge path, `span` falls back to the largest row excess
/// plus the largest column excess, which bounds any such path's gap. `None`
/// when no cell can change.
fn temperature(d: &Matrix, rows: &[f64], cols: &[f64], witness: &Witness, tau: f64) -> Option<f64> {
    let n = d.n;
    let mut span = 0.0f64;
    let mut open = false;
    let (mut row_excess, mut col_excess) = (0.0f64, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            let v = d[(i, j)];
            if i == j {
                continue;
            }
            if v.is_finite() {
                span = span.max(v - rows[i] - cols[j]);
                row_excess = row_excess.max(v - rows[i]);
                col_excess = col_excess.max(v - cols[j]);
            } else if !open && witness.has_path(i, j) {
                open = true;
            }
        }
    }
    if span <= 0.0 {
        if !open {
            return None;
        }
        span = row_excess + col_excess;
    }
    // Every shifted factor is exactly 1 when both excesses are 0; any lambda works.
    Some(if span > 0.0 { (1.0 / tau).ln() / (STABLE_MULTIPLES * span) } else { 1.0 })
}

fn offsets(d: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = d.n;
    let mut rows = vec![f64::INFINITY; n];
    let mut cols = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let v = d[(i, j)];
                rows[i] = rows[i].min(v);
                cols[j] = cols[j].min(v);
            }
        }
    }
    (rows, cols)
}

fn shifted_factors(d: &Matrix, rows: &[f64], cols: &[f64], lambda: f64) -> (Matrix, Matrix) {
    let n = d.n;
    let mut p = Matrix::zeros(n);
    let mut q = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let v = d[(i, j)];
            if i == j || v == f64::INFINITY {
                continue;
            }
            p[(i, j)] = (lambda * (rows[i] - v)).exp();
            q[(i, j)] = (lambda * (cols[j] - v)).exp();
        }
    }
    (p, q)
}

fn exact_relax(d: &Matrix, i: usize, j: usize) -> f64 {
    (0..d.n)
        .filter(|&k| k != i && k != j)
        .map(|k| d[(i, k)] + d[(k, j)])
        .fold(f64::INFINITY, f64::min)
}

/// Bitsets of finite off-diagonal entries per row and per column.
struct Witness {
    words: usize,
    rows: Vec<u64>,
    cols: Vec<u64>,
}

impl Witness {
    fn new(d: &Matrix) -> Self {
        let n = d.n;
        let words = n.div_ceil(64);
        let mut rows = vec![0u64; n * words];
        let mut cols = vec![0u64; n * words];
        for i in 0..n {
            for j in 0..n {
                if i != j && d[(i, j)] < f64::INFINITY {
                    rows[i * words + j / 64] |= 1 << (j % 64);
                    cols[j * words + i / 64] |= 1 << (i % 64);
                }
            }
        }
        Witness { words, rows, cols }
    }

    fn has_path(&self, i: usize, j: usize) -> bool {
        let r = &self.rows[i * self.words..(i + 1) * self.words];
        let c = &self.cols[j * self.words..(j + 1) * self.words];
        r.iter().zip(c).any(|(a, b)| a & b != 0)
    }
}

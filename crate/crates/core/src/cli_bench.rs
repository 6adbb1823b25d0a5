//! Text formats, problem generators, command runners and benchmark tables
//! behind the `fastrings` binary.
//!
//! Matrix files hold `n` on the first line and then `n` rows of `n`
//! whitespace-separated decimals, with `inf` for an absent edge. Vector files
//! are whitespace- or newline-separated decimals.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp1, StandardNormal};
use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;

use crate::apsp::{apsp_approx, floyd_warshall, Matrix, WeightMatrix};
use crate::error::{Error, Result};
use crate::maxconv::{fast_max_convolution, naive_max_convolution, NonNegVector};
use crate::norm_projection::{EstimatorConfig, PStarSchedule, Projection, DEFAULT_TAU};
use crate::topk::{
    fast_topk_with_indices, index_accuracy, naive_topk_sort, shifted_exp, Matching, TopKItem,
    DEFAULT_VERIFY_TOLERANCE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Table,
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(OutputFormat::Table),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::InvalidArgument(format!("unknown format {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub p_base_max: u32,
    /// Projection order: 0 raw, 1 or 2.
    pub r: u32,
    pub tau: f64,
    pub seed: u64,
    pub k: usize,
    pub bias_correct: bool,
    pub output_format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            p_base_max: 512,
            r: 2,
            tau: DEFAULT_TAU,
            seed: 0,
            k: 256,
            bias_correct: false,
            output_format: OutputFormat::Table,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        Ok(())
    }

    pub fn estimator(&self) -> Result<EstimatorConfig> {
        let config = EstimatorConfig {
            projection: Projection::from_order(self.r)?,
            tau: self.tau,
            bias_correct: self.bias_correct,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn schedule(&self) -> Result<PStarSchedule> {
        PStarSchedule::for_projection(self.p_base_max, self.estimator()?.projection)
    }
}

fn parse_token(token: &str, line: usize) -> Result<f64> {
    let v: f64 = token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("not a number: {token:?}"),
    })?;
    if v.is_nan() {
        return Err(Error::Parse {
            line,
            message: "NaN is not allowed".into(),
        });
    }
    Ok(v)
}

pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        for token in line.split_whitespace() {
            let v = parse_token(token, idx + 1)?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("vector entries must be finite, got {token}"),
                });
            }
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(Error::Empty);
    }
    Ok(out)
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (first, header) = lines.next().ok_or(Error::Empty)?;
    let n: usize = header.trim().parse().map_err(|_| Error::Parse {
        line: first,
        message: format!("expected the matrix size, got {:?}", header.trim()),
    })?;
    if n == 0 {
        return Err(Error::Parse {
            line: first,
            message: "matrix size must be positive".into(),
        });
    }
    let mut data = Vec::with_capacity(n * n);
    let mut last = first;
    for row in 0..n {
        let Some((no, line)) = lines.next() else {
            return Err(Error::Parse {
                line: last + 1,
                message: format!("expected {n} rows, found {row}"),
            });
        };
        last = no;
        let before = data.len();
        for token in line.split_whitespace() {
            data.push(parse_token(token, no)?);
        }
        if data.len() - before != n {
            return Err(Error::Parse {
                line: no,
                message: format!("expected {n} entries, found {}", data.len() - before),
            });
        }
    }
    if let Some((no, _)) = lines.next() {
        return Err(Error::Parse {
            line: no,
            message: format!("trailing content after {n} rows"),
        });
    }
    Matrix::new(n, data)
}

pub fn format_vector(v: &[f64]) -> String {
    let mut s = String::new();
    for x in v {
        let _ = writeln!(s, "{x}");
    }
    s
}

pub fn format_matrix(m: &Matrix) -> String {
    let mut s = format!("{}\n", m.n());
    for row in m.rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

/// Complete directed graph with every off-diagonal weight drawn independently
/// from Uniform[1, 100] by `ChaCha8Rng::seed_from_u64(seed)`, row by row.
pub fn generate_apsp_problem(n: usize, seed: u64) -> Result<WeightMatrix> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 vertices, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m[(i, j)] = rng.random_range(1.0..=100.0);
            }
        }
    }
    WeightMatrix::new(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    /// Uniform[0, 1).
    Uniform,
    /// Standard normal.
    Normal,
    /// Exponential with rate 1.
    Exponential,
}

impl Distribution {
    pub fn name(self) -> &'static str {
        match self {
            Distribution::Uniform => "uniform",
            Distribution::Normal => "normal",
            Distribution::Exponential => "exponential",
        }
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Distribution::Uniform => rng.random(),
            Distribution::Normal => StandardNormal.sample(rng),
            Distribution::Exponential => Exp1.sample(rng),
        }
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Distribution::Uniform),
            "normal" => Ok(Distribution::Normal),
            "exponential" => Ok(Distribution::Exponential),
            _ => Err(Error::InvalidArgument(format!("unknown distribution {s:?}"))),
        }
    }
}

/// `x` then `y`, each of length `n`, from one `ChaCha8Rng::seed_from_u64(seed)` stream.
pub fn generate_topk_inputs(dist: Distribution, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = (0..n).map(|_| dist.draw(&mut rng)).collect();
    let y = (0..n).map(|_| dist.draw(&mut rng)).collect();
    (x, y)
}

/// Cell-wise comparison of an approximation with its exact counterpart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueStats {
    pub cells: usize,
    /// Over all cells; infinite when any cell is finite in one and not the other.
    pub mse: f64,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub infinite_mismatches: usize,
}

pub fn value_stats(approx: &[f64], exact: &[f64]) -> Result<ValueStats> {
    if approx.len() != exact.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} approximate cells, {} exact",
            approx.len(),
            exact.len()
        )));
    }
    let mut sq = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    let mut mismatches = 0;
    for (&a, &e) in approx.iter().zip(exact) {
        if a.is_infinite() || e.is_infinite() {
            if a != e {
                mismatches += 1;
            }
            continue;
        }
        let d = (a - e).abs();
        sq += d * d;
        max_abs = max_abs.max(d);
        if e != 0.0 {
            max_rel = max_rel.max(d / e.abs());
        }
    }
    let mse = if mismatches > 0 {
        f64::INFINITY
    } else if approx.is_empty() {
        0.0
    } else {
        sq / approx.len() as f64
    };
    Ok(ValueStats {
        cells: approx.len(),
        mse,
        max_abs_error: max_abs,
        max_rel_error: max_rel,
        infinite_mismatches: mismatches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopKStats {
    pub index_accuracy: f64,
    /// Mean squared error of `log_value` against the oracle at the same rank.
    pub rank_mse: f64,
    /// Share of ranks whose value is within 5% of the oracle's, multiplicatively.
    pub within_5pct: f64,
    pub verified_fraction: f64,
}

pub fn topk_stats(items: &[TopKItem], oracle: &[(f64, usize, usize)]) -> TopKStats {
    let k = oracle.len().max(1) as f64;
    let (mut sq, mut close) = (0.0, 0);
    for (it, o) in items.iter().zip(oracle) {
        let d = it.log_value - o.0;
        sq += d * d;
        if d.exp_m1().abs() <= 0.05 {
            close += 1;
        }
    }
    let missing = oracle.len().saturating_sub(items.len());
    TopKStats {
        index_accuracy: index_accuracy(items, oracle),
        rank_mse: if missing > 0 { f64::INFINITY } else { sq / k },
        within_5pct: close as f64 / k,
        verified_fraction: items.iter().filter(|it| it.verified).count() as f64 / k,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ErrorStats {
    Values(ValueStats),
    TopK(TopKStats),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Vector(Vec<f64>),
    Matrix(Matrix),
    TopK(Vec<TopKItem>),
}

impl Serialize for Output {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Output::Vector(v) => v.serialize(s),
            Output::Matrix(m) => {
                let mut seq = s.serialize_seq(Some(m.n()))?;
                for row in m.rows() {
                    seq.serialize_element(row)?;
                }
                seq.end()
            }
            Output::TopK(items) => items.serialize(s),
        }
    }
}

/// What a command prints: `result` and, with `--check`, `error_stats`.
/// Infinite entries serialize as JSON `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub config: RunConfig,
    pub result: Output,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_stats: Option<ErrorStats>,
}

/// A command's report and, when checked, the oracle's answer in the same shape.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub report: Report,
    pub oracle: Option<Report>,
}

fn checked(config: &RunConfig, approx: Output, oracle: Option<(Output, ErrorStats)>) -> CommandOutput {
    let (oracle, stats) = match oracle {
        Some((o, s)) => (Some(o), Some(s)),
        None => (None, None),
    };
    CommandOutput {
        report: Report {
            config: config.clone(),
            result: approx,
            error_stats: stats,
        },
        oracle: oracle.map(|result| Report {
            config: config.clone(),
            result,
            error_stats: None,
        }),
    }
}

pub fn cmd_maxconv(x: &[f64], y: &[f64], config: &RunConfig, check: bool) -> Result<CommandOutput> {
    let x = NonNegVector::new(x.to_vec())?;
    let y = NonNegVector::new(y.to_vec())?;
    let approx = fast_max_convolution(&x, &y, &config.schedule()?, &config.estimator()?)?.into_inner();
    let oracle = if check {
        let exact = naive_max_convolution(&x, &y).into_inner();
        let stats = ErrorStats::Values(value_stats(&approx, &exact)?);
        Some((Output::Vector(exact), stats))
    } else {
        None
    };
    Ok(checked(config, Output::Vector(approx), oracle))
}

pub fn cmd_apsp(weights: Matrix, config: &RunConfig, check: bool) -> Result<CommandOutput> {
    let w = WeightMatrix::new(weights)?;
    let approx = apsp_approx(&w, &config.schedule()?, &config.estimator()?)?.distances;
    let oracle = if check {
        let exact = floyd_warshall(&w).distances;
        let stats = ErrorStats::Values(value_stats(approx.as_slice(), exact.as_slice())?);
        Some((Output::Matrix(exact), stats))
    } else {
        None
    };
    Ok(checked(config, Output::Matrix(approx), oracle))
}

/// Exact top-k as items: value `e^(x_i + y_j - max x - max y)`, verified.
pub fn oracle_items(x: &[f64], y: &[f64], k: usize) -> Result<Vec<TopKItem>> {
    let (_, xs) = shifted_exp(x)?;
    let (_, ys) = shifted_exp(y)?;
    Ok(naive_topk_sort(x, y, k)?
        .into_iter()
        .map(|(v, i, j)| TopKItem {
            value: (v - xs - ys).exp(),
            log_value: v,
            m_star: i + j,
            i: Some(i),
            j: Some(j),
            verified: true,
        })
        .collect())
}

pub fn cmd_topk(
    x: &[f64],
    y: &[f64],
    config: &RunConfig,
    tolerance: f64,
    matching: Matching,
    check: bool,
) -> Result<CommandOutput> {
    let k = config.k.min(x.len() * y.len());
    let got = fast_topk_with_indices(x, y, k, &config.schedule()?, &config.estimator()?, tolerance, matching)?;
    let oracle = if check {
        let exact = naive_topk_sort(x, y, k)?;
        let stats = ErrorStats::TopK(topk_stats(&got.items, &exact));
        Some((Output::TopK(oracle_items(x, y, k)?), stats))
    } else {
        None
    };
    Ok(checked(config, Output::TopK(got.items), oracle))
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        v.to_string()
    }
}

fn fmt_opt(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn render(report: &Report, format: OutputFormat) -> Result<String> {
    if format == OutputFormat::Json {
        return Ok(serde_json::to_string_pretty(report)? + "\n");
    }
    let sep = if format == OutputFormat::Csv { "," } else { " " };
    let mut s = String::new();
    match &report.result {
        Output::Vector(v) => {
            if format == OutputFormat::Csv {
                s.push_str("index,value\n");
            }
            for (i, x) in v.iter().enumerate() {
                let _ = writeln!(s, "{i}{sep}{}", fmt_num(*x));
            }
        }
        Output::Matrix(m) => {
            for row in m.rows() {
                let cells: Vec<String> = row.iter().map(|&v| fmt_num(v)).collect();
                s.push_str(&cells.join(sep));
                s.push('\n');
            }
        }
        Output::TopK(items) => {
            let header = ["rank", "value", "log_value", "m_star", "i", "j", "verified"];
            s.push_str(&header.join(sep));
            s.push('\n');
            for (r, it) in items.iter().enumerate() {
                let row = [
                    r.to_string(),
                    fmt_num(it.value),
                    fmt_num(it.log_value),
                    it.m_star.to_string(),
                    fmt_opt(it.i),
                    fmt_opt(it.j),
                    it.verified.to_string(),
                ];
                s.push_str(&row.join(sep));
                s.push('\n');
            }
        }
    }
    Ok(s)
}

/// `key: value` lines for the table and CSV formats.
pub fn render_stats(stats: &ErrorStats) -> String {
    let value = serde_json::to_value(stats).unwrap_or_default();
    let mut s = String::new();
    if let Some(map) = value.as_object() {
        for (k, v) in map {
            let v = if v.is_null() { "inf".to_string() } else { v.to_string() };
            let _ = writeln!(s, "{k}: {v}");
        }
    }
    s
}

/// One row of a benchmark table. Times are absent when timing is disabled,
/// metrics are absent when they do not apply or the oracle was skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub distribution: String,
    pub replicates: usize,
    pub oracle_time_s: Option<f64>,
    pub approx_time_s: Option<f64>,
    pub mse: Option<f64>,
    pub index_accuracy: Option<f64>,
    pub rank_mse: Option<f64>,
    pub verified_fraction: Option<f64>,
}

pub const BENCH_HEADER: [&str; 9] = [
    "n",
    "distribution",
    "replicates",
    "oracle_time_s",
    "approx_time_s",
    "mse",
    "index_accuracy",
    "rank_mse",
    "verified_fraction",
];

fn timed<T>(timing: bool, f: impl FnOnce() -> Result<T>) -> Result<(T, Option<f64>)> {
    let start = Instant::now();
    let out = f()?;
    // Clamp so a recorded time is always positive.
    Ok((out, timing.then(|| start.elapsed().as_secs_f64().max(1e-9))))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_opt(v: &[Option<f64>]) -> Option<f64> {
    let got: Vec<f64> = v.iter().flatten().copied().collect();
    (got.len() == v.len() && !got.is_empty()).then(|| mean(&got))
}

/// Replicate `r` at size `n` uses `generate_apsp_problem(n, seed + r)`.
pub fn bench_apsp(ns: &[usize], replicates: usize, config: &RunConfig, timing: bool) -> Result<Vec<BenchRow>> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    let schedule = config.schedule()?;
    let estimator = config.estimator()?;
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let (mut oracle_t, mut approx_t, mut mses) = (vec![], vec![], vec![]);
        for rep in 0..replicates {
            let w = generate_apsp_problem(n, config.seed.wrapping_add(rep as u64))?;
            let (exact, ot) = timed(timing, || Ok(floyd_warshall(&w)))?;
            let (approx, at) = timed(timing, || apsp_approx(&w, &schedule, &estimator))?;
            mses.push(value_stats(approx.distances.as_slice(), exact.distances.as_slice())?.mse);
            oracle_t.push(ot);
            approx_t.push(at);
        }
        rows.push(BenchRow {
            n,
            distribution: "uniform[1,100]".into(),
            replicates,
            oracle_time_s: mean_opt(&oracle_t),
            approx_time_s: mean_opt(&approx_t),
            mse: Some(mean(&mses)),
            index_accuracy: None,
            rank_mse: None,
            verified_fraction: None,
        });
    }
    Ok(rows)
}

/// Replicate `r` at size `n` uses `generate_topk_inputs(dist, n, seed + r)`.
/// The naive oracle runs only for `n <= oracle_cutoff`.
pub fn bench_topk(
    ns: &[usize],
    dists: &[Distribution],
    replicates: usize,
    oracle_cutoff: usize,
    config: &RunConfig,
    timing: bool,
) -> Result<Vec<BenchRow>> {
    if replicates == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    let schedule = config.schedule()?;
    let estimator = config.estimator()?;
    let mut rows = Vec::new();
    for &n in ns {
        let k = config.k.min(n * n);
        for &dist in dists {
            let (mut oracle_t, mut approx_t) = (vec![], vec![]);
            let (mut acc, mut rmse, mut ver) = (vec![], vec![], vec![]);
            for rep in 0..replicates {
                let (x, y) = generate_topk_inputs(dist, n, config.seed.wrapping_add(rep as u64));
                let (got, at) = timed(timing, || {
                    fast_topk_with_indices(
                        &x,
                        &y,
                        k,
                        &schedule,
                        &estimator,
                        DEFAULT_VERIFY_TOLERANCE,
                        Matching::default(),
                    )
                })?;
                approx_t.push(at);
                ver.push(got.items.iter().filter(|it| it.verified).count() as f64 / k as f64);
                if n <= oracle_cutoff {
                    let (exact, ot) = timed(timing, || naive_topk_sort(&x, &y, k))?;
                    let stats = topk_stats(&got.items, &exact);
                    oracle_t.push(ot);
                    acc.push(stats.index_accuracy);
                    rmse.push(stats.rank_mse);
                }
            }
            let with_oracle = !acc.is_empty();
            rows.push(BenchRow {
                n,
                distribution: dist.name().into(),
                replicates,
                oracle_time_s: if with_oracle { mean_opt(&oracle_t) } else { None },
                approx_time_s: mean_opt(&approx_t),
                mse: None,
                index_accuracy: with_oracle.then(|| mean(&acc)),
                rank_mse: with_oracle.then(|| mean(&rmse)),
                verified_fraction: Some(mean(&ver)),
            });
        }
    }
    Ok(rows)
}

/// CSV with the fixed [`BENCH_HEADER`]; absent values are empty fields.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_HEADER)?;
    let f = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.distribution.clone(),
            r.replicates.to_string(),
            f(r.oracle_time_s),
            f(r.approx_time_s),
            f(r.mse),
            f(r.index_accuracy),
            f(r.rank_mse),
            f(r.verified_fraction),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn render_bench(rows: &[BenchRow], format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Json => Ok(serde_json::to_string_pretty(rows)? + "\n"),
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            write_bench_csv(rows, &mut buf)?;
            Ok(String::from_utf8_lossy(&buf).into_owned())
        }
        OutputFormat::Table => {
            let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
            let g = |v: Option<f64>| v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into());
            let mut s = format!(
                "{:>6} {:>14} {:>4} {:>12} {:>12} {:>10} {:>8} {:>10} {:>8}\n",
                "n", "distribution", "reps", "oracle_s", "approx_s", "mse", "idx_acc", "rank_mse", "verified"
            );
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:>6} {:>14} {:>4} {:>12} {:>12} {:>10} {:>8} {:>10} {:>8}",
                    r.n,
                    r.distribution,
                    r.replicates,
                    f(r.oracle_time_s),
                    f(r.approx_time_s),
                    g(r.mse),
                    f(r.index_accuracy),
                    g(r.rank_mse),
                    f(r.verified_fraction)
                );
            }
            Ok(s)
        }
    }
}

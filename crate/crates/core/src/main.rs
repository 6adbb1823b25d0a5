use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fastrings::cli_bench::{
    bench_apsp, bench_topk, cmd_apsp, cmd_maxconv, cmd_topk, parse_matrix, parse_vector, render,
    render_bench, render_stats, CommandOutput, Distribution, OutputFormat, RunConfig,
};
use fastrings::norm_projection::DEFAULT_TAU;
use fastrings::topk::{Matching, DEFAULT_VERIFY_TOLERANCE};
use fastrings::Error;

#[derive(Parser)]
#[command(name = "fastrings", version, about = "Approximate semiring computations through p-norm rings")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Largest base exponent; defaults to 512, or 4096 for the top-k commands.
    #[arg(long = "p-max", global = true)]
    p_max: Option<u32>,
    /// Projection order (0 = raw estimate).
    #[arg(long, global = true, default_value_t = 2)]
    r: u32,
    #[arg(long, global = true, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long = "bias-correct", global = true)]
    bias_correct: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchArg {
    Rank,
    Verified,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Uniform,
    Normal,
    Exponential,
}

#[derive(Args)]
struct Check {
    /// Also run the exact oracle and report error statistics.
    #[arg(long)]
    check: bool,
    /// With --check, write the oracle's result here in the output format.
    #[arg(long = "oracle-output", requires = "check")]
    oracle_output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Max-convolution of two nonnegative vectors.
    Maxconv {
        x: PathBuf,
        y: PathBuf,
        #[command(flatten)]
        check: Check,
    },
    /// All-pairs shortest path distances of a weight matrix.
    Apsp {
        matrix: PathBuf,
        #[command(flatten)]
        check: Check,
    },
    /// Largest k values of x_i + y_j with recovered indices.
    Topk {
        x: PathBuf,
        y: PathBuf,
        #[arg(long, default_value_t = 256)]
        k: usize,
        #[arg(long = "verify-tol", default_value_t = DEFAULT_VERIFY_TOLERANCE)]
        verify_tol: f64,
        #[arg(long = "match", value_enum, default_value_t = MatchArg::Verified)]
        matching: MatchArg,
        #[command(flatten)]
        check: Check,
    },
    /// Floyd-Warshall against the approximation on random complete graphs.
    BenchApsp {
        #[arg(long = "n", value_delimiter = ',', default_values_t = [16usize, 32, 64, 128, 256])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        replicates: usize,
        /// Append n = 512 (the Floyd-Warshall oracle gets slow).
        #[arg(long)]
        extended: bool,
        /// Leave time columns empty so output is reproducible byte for byte.
        #[arg(long = "no-timing")]
        no_timing: bool,
    },
    /// Index recovery of the fast top-k against the naive sort.
    BenchTopk {
        #[arg(long = "n", value_delimiter = ',', default_values_t = [1024usize, 8192])]
        sizes: Vec<usize>,
        #[arg(long = "dist", value_enum, value_delimiter = ',', default_values_t = [DistArg::Uniform, DistArg::Normal, DistArg::Exponential])]
        dists: Vec<DistArg>,
        #[arg(long, default_value_t = 256)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        /// Skip the naive oracle above this n.
        #[arg(long = "oracle-cutoff", default_value_t = 2048)]
        oracle_cutoff: usize,
        #[arg(long = "no-timing")]
        no_timing: bool,
    },
}

fn read(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn with_path<T>(path: &Path, r: Result<T, Error>) -> Result<T, String> {
    r.map_err(|e| format!("{}: {e}", path.display()))
}

fn emit(text: &str, path: Option<&Path>) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn finish(out: CommandOutput, format: OutputFormat, output: Option<&Path>, check: &Check) -> Result<(), String> {
    let e = |e: Error| e.to_string();
    emit(&render(&out.report, format).map_err(e)?, output)?;
    if format != OutputFormat::Json {
        if let Some(stats) = &out.report.error_stats {
            eprint!("{}", render_stats(stats));
        }
    }
    if let (Some(path), Some(oracle)) = (&check.oracle_output, &out.oracle) {
        emit(&render(oracle, format).map_err(e)?, Some(path))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), String> {
    let c = &cli.common;
    let format = match c.format {
        Format::Table => OutputFormat::Table,
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    let topk_like = matches!(cli.command, Command::Topk { .. } | Command::BenchTopk { .. });
    let mut config = RunConfig {
        p_base_max: c.p_max.unwrap_or(if topk_like { 4096 } else { 512 }),
        r: c.r,
        tau: c.tau,
        seed: c.seed,
        bias_correct: c.bias_correct,
        output_format: format,
        ..RunConfig::default()
    };
    if let Command::Topk { k, .. } | Command::BenchTopk { k, .. } = &cli.command {
        config.k = *k;
    }
    config.validate().map_err(|e| e.to_string())?;
    let output = c.output.as_deref();

    match &cli.command {
        Command::Maxconv { x, y, check } => {
            let xs = with_path(x, parse_vector(&read(x)?))?;
            let ys = with_path(y, parse_vector(&read(y)?))?;
            let out = cmd_maxconv(&xs, &ys, &config, check.check).map_err(|e| e.to_string())?;
            finish(out, format, output, check)
        }
        Command::Apsp { matrix, check } => {
            let m = with_path(matrix, parse_matrix(&read(matrix)?))?;
            let out = with_path(matrix, cmd_apsp(m, &config, check.check))?;
            finish(out, format, output, check)
        }
        Command::Topk {
            x,
            y,
            verify_tol,
            matching,
            check,
            ..
        } => {
            let xs = with_path(x, parse_vector(&read(x)?))?;
            let ys = with_path(y, parse_vector(&read(y)?))?;
            let matching = match matching {
                MatchArg::Rank => Matching::Rank,
                MatchArg::Verified => Matching::Verified,
            };
            let out = cmd_topk(&xs, &ys, &config, *verify_tol, matching, check.check).map_err(|e| e.to_string())?;
            finish(out, format, output, check)
        }
        Command::BenchApsp {
            sizes,
            replicates,
            extended,
            no_timing,
        } => {
            let mut sizes = sizes.clone();
            if *extended && !sizes.contains(&512) {
                sizes.push(512);
            }
            let rows = bench_apsp(&sizes, *replicates, &config, !no_timing).map_err(|e| e.to_string())?;
            emit(&render_bench(&rows, format).map_err(|e| e.to_string())?, output)
        }
        Command::BenchTopk {
            sizes,
            dists,
            replicates,
            oracle_cutoff,
            no_timing,
            ..
        } => {
            let dists: Vec<Distribution> = dists
                .iter()
                .map(|d| match d {
                    DistArg::Uniform => Distribution::Uniform,
                    DistArg::Normal => Distribution::Normal,
                    DistArg::Exponential => Distribution::Exponential,
                })
                .collect();
            let rows = bench_topk(sizes, &dists, *replicates, *oracle_cutoff, &config, !no_timing)
                .map_err(|e| e.to_string())?;
            emit(&render_bench(&rows, format).map_err(|e| e.to_string())?, output)
        }
    }
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("SEMIRING_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

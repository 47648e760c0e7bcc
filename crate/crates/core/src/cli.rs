//! Command-line front end for `lazybo`.
//!
//! Exit statuses: 0 on success, 1 on a usage error, 2 when a run fails.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::benchmarks::{self, BenchmarkObjective, BenchmarkSpec, FunctionId, TimingConfig, TimingMode};
use crate::gp::Lag;
use crate::kernel::KernelParams;
use crate::optimizer::{self, BoConfig};
use crate::selftest;
use crate::trace::{self, TraceFormat, TraceOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Clone, PartialEq, Parser)]
#[command(name = "lazybo", version, about = "Bayesian optimization with a lazily updated Gaussian process")]
pub struct CliConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Optimize a benchmark function and write the trace.
    Optimize(OptimizeArgs),
    /// Time naive vs incremental factor updates and write CSV.
    Timing(TimingArgs),
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Function {
    Levy,
    Levy1d,
    Sphere,
    SyntheticExpensive,
}

impl From<Function> for FunctionId {
    fn from(f: Function) -> Self {
        match f {
            Function::Levy => FunctionId::Levy,
            Function::Levy1d => FunctionId::Levy1d,
            Function::Sphere => FunctionId::Sphere,
            Function::SyntheticExpensive => FunctionId::SyntheticExpensive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Jsonl,
    Csv,
}

impl From<Format> for TraceFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Jsonl => TraceFormat::Jsonl,
            Format::Csv => TraceFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Naive,
    Lazy,
    Both,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("must be a finite number >= 0, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct OptimizeArgs {
    /// Benchmark function.
    #[arg(long, value_enum, default_value = "levy")]
    pub function: Function,
    /// Input dimension.
    #[arg(long, default_value_t = 5, value_parser = positive)]
    pub dim: usize,
    /// Sequential iterations, or rounds when --batch > 1.
    #[arg(long, default_value_t = 1000, value_parser = positive)]
    pub iterations: usize,
    /// Uniform random seed points evaluated before the first suggestion.
    #[arg(long, default_value_t = 1, value_parser = positive)]
    pub seeds: usize,
    /// Refit kernel parameters every N appends, or "inf" to never refit.
    #[arg(long, default_value = "inf")]
    pub lag: Lag,
    /// Points suggested and evaluated per round.
    #[arg(long, default_value_t = 1, value_parser = positive)]
    pub batch: usize,
    /// Exploration margin of expected improvement.
    #[arg(long, default_value_t = 0.01, value_parser = non_negative)]
    pub xi: f64,
    /// Acquisition restarts [default: max(10 * dim, 4 * batch)].
    #[arg(long, value_parser = positive)]
    pub restarts: Option<usize>,
    /// Matern length scale in unit-cube coordinates.
    #[arg(long = "length-scale", default_value_t = 1.0)]
    pub length_scale: f64,
    /// Seed of the run's random stream.
    #[arg(long = "rng-seed", default_value_t = 42)]
    pub rng_seed: u64,
    /// Trace file [default: stdout].
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Trace format.
    #[arg(long, value_enum, default_value = "jsonl")]
    pub format: Format,
    /// Simulated seconds per evaluation (synthetic-expensive only).
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    pub delay: f64,
    /// Observation noise std (synthetic-expensive only).
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    pub noise: f64,
    /// Write all timing fields as 0 so reruns are byte-identical.
    #[arg(long)]
    pub redact_timings: bool,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct TimingArgs {
    /// Largest sample count.
    #[arg(long = "n-max", default_value_t = 2048, value_parser = positive)]
    pub n_max: usize,
    /// Spacing between sample counts.
    #[arg(long, default_value_t = 256, value_parser = positive)]
    pub step: usize,
    /// Timed repetitions per size (median is reported).
    #[arg(long, default_value_t = 5, value_parser = positive)]
    pub reps: usize,
    /// Which update to time.
    #[arg(long, value_enum, default_value = "both")]
    pub mode: ModeArg,
    /// Input dimension of the random points.
    #[arg(long, default_value_t = 5, value_parser = positive)]
    pub dim: usize,
    /// CSV file [default: stdout].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

impl OptimizeArgs {
    pub fn restarts_or_default(&self) -> usize {
        self.restarts
            .unwrap_or_else(|| (10 * self.dim).max(4 * self.batch))
    }

    pub fn benchmark(&self) -> Result<BenchmarkSpec, String> {
        BenchmarkSpec::new(self.function.into(), self.dim)
            .and_then(|s| s.with_delay(self.delay))
            .and_then(|s| s.with_noise(self.noise))
            .map_err(|e| e.to_string())
    }

    pub fn bo_config(&self) -> Result<BoConfig, String> {
        let spec = self.benchmark()?;
        let config = BoConfig {
            n_seeds: self.seeds,
            iterations: self.iterations,
            lag: self.lag,
            batch_size: self.batch,
            xi: self.xi,
            restarts: self.restarts_or_default(),
            rng_seed: self.rng_seed,
            kernel: KernelParams {
                length_scale: self.length_scale,
                ..KernelParams::default()
            },
            ..BoConfig::new(spec.bounds.clone())
        };
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }
}

/// Parses `argv` (including the program name). Help and version requests
/// come back as errors too; check `clap::Error::exit_code`.
pub fn parse_args<I, T>(argv: I) -> Result<CliConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    CliConfig::try_parse_from(argv)
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, String> {
    match path {
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| format!("opening {}: {e}", p.display())),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn optimize(args: &OptimizeArgs, err: &mut dyn Write) -> Result<(), String> {
    let config = args.bo_config()?;
    let spec = args.benchmark()?;
    let objective = BenchmarkObjective::new(spec, args.rng_seed);
    let result = if args.batch > 1 {
        optimizer::run_parallel(&config, &objective)
    } else {
        optimizer::run(&config, &objective)
    };
    let trace = result.map_err(|e| e.to_string())?;
    let opts = TraceOptions {
        redact_timings: args.redact_timings,
        echo: Some(json!({
            "function": FunctionId::from(args.function).as_str(),
            "dim": args.dim,
            "iterations": args.iterations,
            "seeds": args.seeds,
            "lag": args.lag,
            "batch": args.batch,
            "xi": args.xi,
            "restarts": config.restarts,
            "length_scale": args.length_scale,
            "rng_seed": args.rng_seed,
            "delay": args.delay,
            "noise": args.noise,
        })),
    };
    match &args.output {
        Some(path) => {
            trace::emit_trace(&trace, args.format.into(), path, &opts).map_err(|e| e.to_string())?;
            let _ = writeln!(
                err,
                "best_y {} after {} evaluations, trace written to {}",
                trace.summary.best_y,
                trace.records.len(),
                path.display()
            );
        }
        None => trace::write_trace(&trace, args.format.into(), &opts, io::stdout().lock())
            .map_err(|e| format!("writing trace to stdout: {e}"))?,
    }
    Ok(())
}

fn timing(args: &TimingArgs) -> Result<(), String> {
    let cfg = TimingConfig {
        repetitions: args.reps,
        dim: args.dim,
        ..TimingConfig::new(args.n_max, args.step)
    };
    let modes: &[TimingMode] = match args.mode {
        ModeArg::Naive => &[TimingMode::Naive],
        ModeArg::Lazy => &[TimingMode::Lazy],
        ModeArg::Both => &[TimingMode::Naive, TimingMode::Lazy],
    };
    let mut rows = Vec::new();
    for &m in modes {
        rows.extend(benchmarks::timing_harness(&cfg, m).map_err(|e| e.to_string())?);
    }
    let out = open_output(&args.output)?;
    benchmarks::write_timing_csv(&rows, out).map_err(|e| format!("writing timing CSV: {e}"))
}

/// Executes a parsed command and returns its exit status.
pub fn execute(config: &CliConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &config.command {
        Command::Optimize(a) => optimize(a, err),
        Command::Timing(a) => timing(a),
        Command::Selftest => {
            let results = selftest::run(out);
            if results.iter().all(|r| r.passed) {
                Ok(())
            } else {
                Err("selftest failed".into())
            }
        }
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_FAILURE
        }
    }
}

/// Full entry point: parse, run, map every outcome to an exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match parse_args(argv) {
        Ok(config) => execute(&config, &mut io::stdout(), &mut io::stderr()),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}

//! Benchmark objectives and the naive-vs-lazy factorization timing harness.
//!
//! All objectives are returned in maximization form: the Levy family is
//! negated so its global maximum is 0 at the all-ones vector.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{self, KernelParams};
use crate::linalg::{self, CholeskyFactor};
use crate::optimizer::{Bounds, Objective, ObjectiveError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchmarkError {
    #[error("unknown function {0:?} (expected levy, levy1d, sphere or synthetic-expensive)")]
    UnknownFunction(String),
    #[error("invalid benchmark: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionId {
    Levy,
    Levy1d,
    Sphere,
    SyntheticExpensive,
}

impl FunctionId {
    pub fn as_str(&self) -> &'static str {
        match self {
            FunctionId::Levy => "levy",
            FunctionId::Levy1d => "levy1d",
            FunctionId::Sphere => "sphere",
            FunctionId::SyntheticExpensive => "synthetic-expensive",
        }
    }
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FunctionId {
    type Err = BenchmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "levy" => Ok(FunctionId::Levy),
            "levy1d" => Ok(FunctionId::Levy1d),
            "sphere" => Ok(FunctionId::Sphere),
            "synthetic-expensive" => Ok(FunctionId::SyntheticExpensive),
            other => Err(BenchmarkError::UnknownFunction(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkSpec {
    pub function: FunctionId,
    pub dim: usize,
    pub bounds: Bounds,
    /// Simulated evaluation time of the expensive objective, in seconds.
    pub delay_s: f64,
    /// Standard deviation of additive Gaussian noise on the expensive objective.
    pub noise_std: f64,
}

impl BenchmarkSpec {
    /// Spec on the default box `[-10, 10]^D` with no delay and no noise.
    pub fn new(function: FunctionId, dim: usize) -> Result<Self, BenchmarkError> {
        if dim == 0 {
            return Err(BenchmarkError::Invalid("dimension must be at least 1".into()));
        }
        if function == FunctionId::Levy1d && dim != 1 {
            return Err(BenchmarkError::Invalid("levy1d is one-dimensional".into()));
        }
        let bounds =
            Bounds::cube(-10.0, 10.0, dim).map_err(|e| BenchmarkError::Invalid(e.to_string()))?;
        Ok(Self {
            function,
            dim,
            bounds,
            delay_s: 0.0,
            noise_std: 0.0,
        })
    }

    pub fn with_delay(mut self, delay_s: f64) -> Result<Self, BenchmarkError> {
        if !(delay_s >= 0.0 && delay_s.is_finite()) {
            return Err(BenchmarkError::Invalid(format!("delay must be >= 0, got {delay_s}")));
        }
        self.delay_s = delay_s;
        Ok(self)
    }

    pub fn with_noise(mut self, noise_std: f64) -> Result<Self, BenchmarkError> {
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return Err(BenchmarkError::Invalid(format!("noise must be >= 0, got {noise_std}")));
        }
        self.noise_std = noise_std;
        Ok(self)
    }

    /// Noise-free value of the underlying function (no delay).
    pub fn value(&self, x: &[f64]) -> f64 {
        match self.function {
            FunctionId::Levy => levy(x),
            FunctionId::Levy1d => levy1d(x[0]),
            FunctionId::Sphere => sphere(x),
            FunctionId::SyntheticExpensive => squash(levy(x)),
        }
    }
}

/// `sin²(πx)`, reduced to the nearest integer first so integer `x` gives exactly 0.
#[inline]
fn sin_pi_sq(x: f64) -> f64 {
    (PI * (x - x.round())).sin().powi(2)
}

/// Negated Levy function. `D = 1` dispatches to [`levy1d`].
pub fn levy(x: &[f64]) -> f64 {
    match x.len() {
        0 => 0.0,
        1 => levy1d(x[0]),
        d => {
            let w = |v: f64| 1.0 + (v - 1.0) / 4.0;
            let w1 = w(x[0]);
            let wd = w(x[d - 1]);
            let head = sin_pi_sq(w1);
            let middle: f64 = x[..d - 1]
                .iter()
                .map(|&v| {
                    let wi = w(v);
                    (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2))
                })
                .sum();
            let tail = (wd - 1.0).powi(2) * (1.0 + sin_pi_sq(2.0 * wd));
            -(head + middle + tail)
        }
    }
}

/// Negated one-dimensional Levy function.
pub fn levy1d(x: f64) -> f64 {
    let w = 1.0 + (x - 1.0) / 4.0;
    -(sin_pi_sq(w) + (w - 1.0).powi(2) * (1.0 + sin_pi_sq(2.0 * w)))
}

/// Negated sum of squares; maximum 0 at the origin.
pub fn sphere(x: &[f64]) -> f64 {
    -x.iter().map(|v| v * v).sum::<f64>()
}

/// Maps the real line into (−1, 1) monotonically.
#[inline]
pub fn squash(v: f64) -> f64 {
    v / (1.0 + v.abs())
}

/// Inverse of [`squash`] on (−1, 1).
#[inline]
pub fn unsquash(s: f64) -> f64 {
    s / (1.0 - s.abs())
}

/// Slow, noisy stand-in for an expensive training run: sleeps `delay_s`,
/// then returns the squashed negated Levy value plus Gaussian noise.
pub fn synthetic_expensive<R: Rng + ?Sized>(spec: &BenchmarkSpec, x: &[f64], rng: &mut R) -> f64 {
    if spec.delay_s > 0.0 {
        std::thread::sleep(Duration::from_secs_f64(spec.delay_s));
    }
    let clean = squash(levy(x));
    if spec.noise_std > 0.0 {
        let noise = Normal::new(0.0, spec.noise_std).expect("noise std validated");
        clean + noise.sample(rng)
    } else {
        clean
    }
}

/// [`Objective`] wrapper around a [`BenchmarkSpec`].
///
/// The expensive simulator draws its noise from an internal generator; with
/// concurrent evaluation the draw order, and hence the noise, is not
/// reproducible.
pub struct BenchmarkObjective {
    spec: BenchmarkSpec,
    rng: Mutex<ChaCha8Rng>,
}

impl BenchmarkObjective {
    pub fn new(spec: BenchmarkSpec, noise_seed: u64) -> Self {
        Self {
            spec,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(noise_seed)),
        }
    }

    pub fn spec(&self) -> &BenchmarkSpec {
        &self.spec
    }
}

impl Objective for BenchmarkObjective {
    fn evaluate(&self, x: &[f64]) -> Result<f64, ObjectiveError> {
        if x.len() != self.spec.dim {
            return Err(ObjectiveError(format!(
                "expected {} coordinates, got {}",
                self.spec.dim,
                x.len()
            )));
        }
        Ok(match self.spec.function {
            FunctionId::SyntheticExpensive => {
                if self.spec.delay_s > 0.0 {
                    std::thread::sleep(Duration::from_secs_f64(self.spec.delay_s));
                }
                let clean = squash(levy(x));
                if self.spec.noise_std > 0.0 {
                    let noise = Normal::new(0.0, self.spec.noise_std).expect("noise std validated");
                    let mut rng = self
                        .rng
                        .lock()
                        .map_err(|_| ObjectiveError("noise generator poisoned".into()))?;
                    clean + noise.sample(&mut *rng)
                } else {
                    clean
                }
            }
            _ => self.spec.value(x),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimingMode {
    /// Full factorization at every size.
    Naive,
    /// One bordering step at every size.
    Lazy,
}

impl fmt::Display for TimingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TimingMode::Naive => "naive",
            TimingMode::Lazy => "lazy",
        })
    }
}

impl FromStr for TimingMode {
    type Err = BenchmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(TimingMode::Naive),
            "lazy" => Ok(TimingMode::Lazy),
            other => Err(BenchmarkError::Invalid(format!("unknown timing mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimingRow {
    pub n: usize,
    pub mode: TimingMode,
    /// Median wall time of one surrogate update at this size.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingConfig {
    pub n_max: usize,
    pub step: usize,
    pub repetitions: usize,
    pub dim: usize,
    pub seed: u64,
}

impl TimingConfig {
    pub fn new(n_max: usize, step: usize) -> Self {
        Self {
            n_max,
            step,
            repetitions: 5,
            dim: 5,
            seed: 7,
        }
    }

    /// `step, 2·step, …` up to `n_max`.
    pub fn sizes(&self) -> Vec<usize> {
        (1..=self.n_max / self.step.max(1))
            .map(|k| k * self.step)
            .collect()
    }
}

/// Per-update surrogate cost at growing sample counts.
///
/// `Naive` times `cholesky_full` of the `n×n` covariance; `Lazy` times one
/// `extend` from `n−1` to `n` rows. Each size reports the median of
/// `repetitions` samples after one discarded warm-up sample. Lazy samples
/// average a short inner loop so each sample spans well above timer
/// resolution.
pub fn timing_harness(cfg: &TimingConfig, mode: TimingMode) -> Result<Vec<TimingRow>, BenchmarkError> {
    if cfg.step == 0 || cfg.n_max < 2 * cfg.step {
        return Err(BenchmarkError::Invalid("need n_max >= 2 * step and step >= 1".into()));
    }
    if cfg.repetitions < 5 {
        return Err(BenchmarkError::Invalid("need at least 5 repetitions".into()));
    }
    let params = KernelParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let points: Vec<Vec<f64>> = (0..cfg.n_max)
        .map(|_| (0..cfg.dim.max(1)).map(|_| rng.random::<f64>()).collect())
        .collect();

    let mut rows = Vec::new();
    let mut grown = CholeskyFactor::with_capacity(cfg.n_max);
    for n in cfg.sizes() {
        let seconds = match mode {
            TimingMode::Naive => {
                let k = kernel::build_covariance(&points[..n], &params)
                    .map_err(|e| BenchmarkError::Invalid(e.to_string()))?;
                median_of(cfg.repetitions, 1, || {
                    let l = linalg::cholesky_full(&k).expect("kernel matrix is SPD");
                    std::hint::black_box(l);
                })
            }
            TimingMode::Lazy => {
                while grown.dim() < n - 1 {
                    let i = grown.dim();
                    let (p, c) = kernel::covariance_column(&points[..i], &points[i], &params)
                        .map_err(|e| BenchmarkError::Invalid(e.to_string()))?;
                    grown.extend(&p, c).expect("kernel matrix is SPD");
                }
                let (p, c) = kernel::covariance_column(&points[..n - 1], &points[n - 1], &params)
                    .map_err(|e| BenchmarkError::Invalid(e.to_string()))?;
                let inner = (20_000_000 / (n * n)).clamp(1, 1000);
                median_of(cfg.repetitions, inner, || {
                    grown.extend(&p, c).expect("kernel matrix is SPD");
                    std::hint::black_box(grown.diag(n - 1));
                    grown.truncate(n - 1);
                })
            }
        };
        rows.push(TimingRow { n, mode, seconds });
    }
    Ok(rows)
}

fn median_of<F: FnMut()>(reps: usize, inner: usize, mut f: F) -> f64 {
    for _ in 0..inner {
        f();
    }
    let mut samples: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            for _ in 0..inner {
                f();
            }
            t.elapsed().as_secs_f64() / inner as f64
        })
        .collect();
    samples.sort_by(f64::total_cmp);
    samples[samples.len() / 2]
}

/// Writes timing rows as CSV with header `n,mode,seconds`.
pub fn write_timing_csv<W: Write>(rows: &[TimingRow], mut out: W) -> io::Result<()> {
    writeln!(out, "n,mode,seconds")?;
    for r in rows {
        writeln!(out, "{},{},{:e}", r.n, r.mode, r.seconds)?;
    }
    Ok(())
}

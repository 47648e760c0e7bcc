//! Bayesian-optimization driver: seeding, the sequential loop and the
//! batch-parallel round loop.
//!
//! The driver maximizes the objective. It keeps the GP in unit-cube
//! coordinates and maps suggestions back to the raw box before evaluating.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{self, Suggestion};
use crate::gp::{self, GpError, GpState, Lag, UpdateKind};
use crate::kernel::KernelParams;

/// Consecutive objective failures tolerated before a run aborts.
pub const MAX_CONSECUTIVE_FAILURES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct ObjectiveError(pub String);

/// Black-box function to maximize, evaluated at raw coordinates.
pub trait Objective: Sync {
    fn evaluate(&self, x: &[f64]) -> Result<f64, ObjectiveError>;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn evaluate(&self, x: &[f64]) -> Result<f64, ObjectiveError> {
        Ok(self(x))
    }
}

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("value {value} outside bounds [{low}, {high}] in dimension {dim}")]
    OutOfBounds {
        dim: usize,
        value: f64,
        low: f64,
        high: f64,
    },
    #[error("point has {found} coordinates, bounds have {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("aborted at iteration {iteration}: {reason}")]
    Aborted {
        iteration: usize,
        reason: String,
        /// Everything recorded before the abort.
        trace: Box<RunTrace>,
    },
    #[error(transparent)]
    Surrogate(#[from] GpError),
}

/// Axis-aligned box of raw coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds(Vec<(f64, f64)>);

impl Bounds {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self, OptimizerError> {
        if pairs.is_empty() {
            return Err(OptimizerError::InvalidConfig("bounds are empty".into()));
        }
        for (i, (lo, hi)) in pairs.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(OptimizerError::InvalidConfig(format!(
                    "dimension {i}: need low < high, got ({lo}, {hi})"
                )));
            }
        }
        Ok(Self(pairs))
    }

    /// The same interval in every dimension.
    pub fn cube(low: f64, high: f64, dim: usize) -> Result<Self, OptimizerError> {
        Self::new(vec![(low, high); dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.0
    }

    /// Raw point to unit-cube coordinates. Rejects points outside the box.
    pub fn normalize(&self, x_raw: &[f64]) -> Result<Vec<f64>, OptimizerError> {
        self.check_dim(x_raw.len())?;
        x_raw
            .iter()
            .zip(&self.0)
            .enumerate()
            .map(|(dim, (v, &(low, high)))| {
                if (low..=high).contains(v) {
                    Ok((v - low) / (high - low))
                } else {
                    Err(OptimizerError::OutOfBounds {
                        dim,
                        value: *v,
                        low,
                        high,
                    })
                }
            })
            .collect()
    }

    /// Like [`Bounds::normalize`] but clamps into the box; the flag reports
    /// whether any coordinate was clamped.
    pub fn normalize_clamped(&self, x_raw: &[f64]) -> Result<(Vec<f64>, bool), OptimizerError> {
        self.check_dim(x_raw.len())?;
        let mut clamped = false;
        let u = x_raw
            .iter()
            .zip(&self.0)
            .map(|(v, &(low, high))| {
                let c = v.clamp(low, high);
                clamped |= c != *v;
                (c - low) / (high - low)
            })
            .collect();
        Ok((u, clamped))
    }

    /// Unit-cube point to raw coordinates; unit coordinates are clamped to [0, 1].
    pub fn denormalize(&self, x_unit: &[f64]) -> Result<Vec<f64>, OptimizerError> {
        self.check_dim(x_unit.len())?;
        Ok(x_unit
            .iter()
            .zip(&self.0)
            .map(|(u, &(low, high))| low + u.clamp(0.0, 1.0) * (high - low))
            .collect())
    }

    fn check_dim(&self, found: usize) -> Result<(), OptimizerError> {
        if found == self.dim() {
            Ok(())
        } else {
            Err(OptimizerError::DimensionMismatch {
                expected: self.dim(),
                found,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    pub bounds: Bounds,
    pub n_seeds: usize,
    /// Sequential iterations, or rounds when `batch_size > 1`.
    pub iterations: usize,
    pub lag: Lag,
    pub batch_size: usize,
    pub xi: f64,
    pub restarts: usize,
    pub dedupe_radius: f64,
    pub rng_seed: u64,
    pub kernel: KernelParams,
    /// Stop early once the best observed value reaches this level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<f64>,
}

impl BoConfig {
    /// Defaults: 1 seed, 1000 iterations, infinite lag, sequential,
    /// ξ = 0.01, 10·D restarts, dedupe radius 0.05·√D, seed 42.
    pub fn new(bounds: Bounds) -> Self {
        let d = bounds.dim();
        Self {
            bounds,
            n_seeds: 1,
            iterations: 1000,
            lag: Lag::Infinite,
            batch_size: 1,
            xi: acquisition::DEFAULT_XI,
            restarts: acquisition::default_restarts(d),
            dedupe_radius: acquisition::default_dedupe_radius(d),
            rng_seed: 42,
            kernel: KernelParams::default(),
            target: None,
        }
    }

    pub fn validate(&self) -> Result<(), OptimizerError> {
        let bad = |m: &str| Err(OptimizerError::InvalidConfig(m.to_string()));
        Bounds::new(self.bounds.0.clone())?;
        if self.n_seeds == 0 {
            return bad("need at least one seed point");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return bad("xi must be a non-negative number");
        }
        if !(self.dedupe_radius >= 0.0) {
            return bad("dedupe radius must be non-negative");
        }
        if self.target.is_some_and(|t| !t.is_finite()) {
            return bad("target must be finite");
        }
        self.kernel
            .validate()
            .map_err(|e| OptimizerError::InvalidConfig(e.to_string()))
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    /// 0 for seed points, then the 1-based evaluation count.
    pub iteration: usize,
    /// 0 for seed points, then the 1-based round (equal to `iteration` when sequential).
    pub round: usize,
    pub x: Vec<f64>,
    pub y: f64,
    pub best: f64,
    pub t_factor_s: f64,
    pub t_acq_s: f64,
    pub refit: bool,
    #[serde(skip)]
    pub ei: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRecord {
    pub iteration: usize,
    pub round: usize,
    pub x: Vec<f64>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub best_x: Vec<f64>,
    pub best_y: f64,
    pub total_s: f64,
    pub jitter_refits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub config: BoConfig,
    pub records: Vec<TraceRecord>,
    pub failures: Vec<FailureRecord>,
    pub summary: RunSummary,
}

impl RunTrace {
    pub fn refit_count(&self) -> usize {
        self.records.iter().filter(|r| r.refit).count()
    }

    /// Total time spent updating the surrogate (fits, extensions, refits).
    pub fn surrogate_time(&self) -> f64 {
        self.records.iter().map(|r| r.t_factor_s).sum()
    }

    /// First round whose records reach `threshold`, or `None`. Seeds count as round 0.
    pub fn first_round_reaching(&self, threshold: f64) -> Option<usize> {
        self.records.iter().find(|r| r.y >= threshold).map(|r| r.round)
    }
}

struct Driver<'a, O: Objective + ?Sized> {
    config: &'a BoConfig,
    objective: &'a O,
    rng: ChaCha8Rng,
    records: Vec<TraceRecord>,
    failures: Vec<FailureRecord>,
    best: Option<(Vec<f64>, f64)>,
    jitter_refits: usize,
    started: Instant,
}

impl<'a, O: Objective + ?Sized> Driver<'a, O> {
    fn new(config: &'a BoConfig, objective: &'a O) -> Result<Self, OptimizerError> {
        config.validate()?;
        Ok(Self {
            config,
            objective,
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            records: Vec::new(),
            failures: Vec::new(),
            best: None,
            jitter_refits: 0,
            started: Instant::now(),
        })
    }

    fn random_unit(&mut self) -> Vec<f64> {
        (0..self.config.bounds.dim())
            .map(|_| self.rng.random::<f64>())
            .collect()
    }

    fn evaluate(&self, x_unit: &[f64]) -> (Vec<f64>, Result<f64, ObjectiveError>) {
        let raw = self
            .config
            .bounds
            .denormalize(x_unit)
            .expect("unit point has the configured dimension");
        let y = evaluate_checked(self.objective, &raw);
        (raw, y)
    }

    fn fail(&mut self, iteration: usize, round: usize, x: Vec<f64>, e: ObjectiveError) {
        self.failures.push(FailureRecord {
            iteration,
            round,
            x,
            message: e.0,
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        iteration: usize,
        round: usize,
        x: Vec<f64>,
        y: f64,
        t_factor_s: f64,
        t_acq_s: f64,
        refit: bool,
        ei: Option<f64>,
    ) {
        if self.best.as_ref().is_none_or(|(_, b)| y > *b) {
            self.best = Some((x.clone(), y));
        }
        let best = self.best.as_ref().map(|(_, b)| *b).unwrap_or(y);
        self.records.push(TraceRecord {
            iteration,
            round,
            x,
            y,
            best,
            t_factor_s,
            t_acq_s,
            refit,
            ei,
        });
    }

    fn reached_target(&self) -> bool {
        match (self.config.target, &self.best) {
            (Some(t), Some((_, b))) => *b >= t,
            _ => false,
        }
    }

    fn abort(self, iteration: usize, reason: String) -> OptimizerError {
        OptimizerError::Aborted {
            iteration,
            reason,
            trace: Box::new(self.finish()),
        }
    }

    /// Evaluates the seed design and fits the initial surrogate.
    fn seed(mut self) -> Result<(Self, GpState), OptimizerError> {
        let mut xs = Vec::with_capacity(self.config.n_seeds);
        let mut ys = Vec::with_capacity(self.config.n_seeds);
        let mut consecutive = 0;
        while xs.len() < self.config.n_seeds {
            let u = self.random_unit();
            let (raw, y) = self.evaluate(&u);
            match y {
                Ok(y) => {
                    consecutive = 0;
                    xs.push(u);
                    ys.push(y);
                    self.record(0, 0, raw, y, 0.0, 0.0, false, None);
                }
                Err(e) => {
                    self.fail(0, 0, raw, e);
                    consecutive += 1;
                    if consecutive >= MAX_CONSECUTIVE_FAILURES {
                        return Err(self.abort(0, "seed evaluations kept failing".into()));
                    }
                }
            }
        }

        let t = Instant::now();
        let params = match self.config.lag {
            Lag::Infinite => self.config.kernel,
            Lag::Every(_) => gp::learn_params(&xs, &ys, &self.config.kernel),
        };
        let state = match GpState::fit(xs, ys, params, self.config.lag) {
            Ok(s) => s,
            Err(e) => return Err(self.abort(0, e.to_string())),
        };
        if let Some(last) = self.records.last_mut() {
            last.t_factor_s = t.elapsed().as_secs_f64();
        }
        Ok((self, state))
    }

    fn append(&mut self, gp: &mut GpState, x_unit: Vec<f64>, y: f64) -> Result<(bool, f64), GpError> {
        let t = Instant::now();
        let kind = gp.append(x_unit, y)?;
        if kind == UpdateKind::JitterRefit {
            self.jitter_refits += 1;
        }
        Ok((kind == UpdateKind::LagRefit, t.elapsed().as_secs_f64()))
    }

    fn finish(self) -> RunTrace {
        let (best_x, best_y) = self.best.unwrap_or((Vec::new(), f64::NAN));
        RunTrace {
            config: self.config.clone(),
            records: self.records,
            failures: self.failures,
            summary: RunSummary {
                best_x,
                best_y,
                total_s: self.started.elapsed().as_secs_f64(),
                jitter_refits: self.jitter_refits,
            },
        }
    }
}

fn evaluate_checked<O: Objective + ?Sized>(objective: &O, raw: &[f64]) -> Result<f64, ObjectiveError> {
    match objective.evaluate(raw) {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(ObjectiveError(format!("objective returned {v}"))),
        Err(e) => Err(e),
    }
}

/// Sequential Bayesian optimization: one EI suggestion per iteration.
///
/// A failed evaluation is recorded and retried at a fresh uniform point;
/// after [`MAX_CONSECUTIVE_FAILURES`] in a row the run aborts.
pub fn run<O: Objective + ?Sized>(config: &BoConfig, objective: &O) -> Result<RunTrace, OptimizerError> {
    let (mut drv, mut gp) = Driver::new(config, objective)?.seed()?;
    if drv.reached_target() {
        return Ok(drv.finish());
    }
    for it in 1..=config.iterations {
        let t = Instant::now();
        let s = acquisition::suggest_one(&gp, config.restarts, config.xi, &mut drv.rng);
        let t_acq = t.elapsed().as_secs_f64();

        let mut x_unit = s.x;
        let mut ei = Some(s.ei_value);
        let mut consecutive = 0;
        let (raw, y) = loop {
            let (raw, y) = drv.evaluate(&x_unit);
            match y {
                Ok(y) => break (raw, y),
                Err(e) => {
                    drv.fail(it, it, raw, e);
                    consecutive += 1;
                    if consecutive >= MAX_CONSECUTIVE_FAILURES {
                        return Err(drv.abort(it, "objective failed 3 times in a row".into()));
                    }
                    x_unit = drv.random_unit();
                    ei = None;
                }
            }
        };

        match drv.append(&mut gp, x_unit, y) {
            Ok((refit, t_factor)) => drv.record(it, it, raw, y, t_factor, t_acq, refit, ei),
            Err(e) => return Err(drv.abort(it, e.to_string())),
        }
        if drv.reached_target() {
            break;
        }
    }
    Ok(drv.finish())
}

/// Batch-parallel Bayesian optimization.
///
/// Each round suggests up to `batch_size` distinct EI maxima, evaluates them
/// concurrently, then appends the successful results one by one in
/// descending-EI order. Failed points are skipped; a round in which every
/// evaluation fails aborts the run. `iterations` counts rounds.
pub fn run_parallel<O: Objective + ?Sized>(
    config: &BoConfig,
    objective: &O,
) -> Result<RunTrace, OptimizerError> {
    let (mut drv, mut gp) = Driver::new(config, objective)?.seed()?;
    let mut evaluations = 0;
    if drv.reached_target() {
        return Ok(drv.finish());
    }
    for round in 1..=config.iterations {
        let t = Instant::now();
        let batch = acquisition::suggest_batch(
            &gp,
            config.batch_size,
            config.restarts,
            config.xi,
            config.dedupe_radius,
            &mut drv.rng,
        );
        let t_acq = t.elapsed().as_secs_f64() / batch.len() as f64;

        let results = evaluate_batch(&drv, &batch);
        let mut successes = 0;
        for (s, (raw, y)) in batch.into_iter().zip(results) {
            evaluations += 1;
            match y {
                Ok(y) => {
                    successes += 1;
                    match drv.append(&mut gp, s.x, y) {
                        Ok((refit, t_factor)) => drv.record(
                            evaluations, round, raw, y, t_factor, t_acq, refit, Some(s.ei_value),
                        ),
                        Err(e) => return Err(drv.abort(evaluations, e.to_string())),
                    }
                }
                Err(e) => drv.fail(evaluations, round, raw, e),
            }
        }
        if successes == 0 {
            return Err(drv.abort(evaluations, format!("every evaluation in round {round} failed")));
        }
        if drv.reached_target() {
            break;
        }
    }
    Ok(drv.finish())
}

fn evaluate_batch<O: Objective + ?Sized>(
    drv: &Driver<'_, O>,
    batch: &[Suggestion],
) -> Vec<(Vec<f64>, Result<f64, ObjectiveError>)> {
    if batch.len() == 1 {
        return vec![drv.evaluate(&batch[0].x)];
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = batch
            .iter()
            .map(|s| scope.spawn(|| drv.evaluate(&s.x)))
            .collect();
        handles
            .into_iter()
            .map(|h| match h.join() {
                Ok(r) => r,
                Err(_) => (Vec::new(), Err(ObjectiveError("objective panicked".into()))),
            })
            .collect()
    })
}

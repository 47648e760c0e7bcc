//! Gaussian-process surrogate whose Cholesky factor grows by one row per
//! observation while the kernel parameters stay fixed.
//!
//! Between refits the factor, the kernel parameters and the output
//! standardization are frozen, so an append costs one bordering step plus
//! two triangular solves. A refit (every `l`-th append, or never for
//! [`Lag::Infinite`]) re-learns `(σ², ρ)` on a grid, re-standardizes the
//! outputs and refactorizes from scratch.

use std::f64::consts::PI;
use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::kernel::{self, KernelError, KernelParams};
use crate::linalg::{self, CholeskyFactor, LinalgError, SquareMatrix};

/// Noise floor used by the jitter escalation.
pub const JITTER_FLOOR: f64 = 1e-8;
/// Grid of signal variances searched by [`learn_params`].
pub const SIGNAL_VARIANCE_GRID: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
/// Grid of length scales searched by [`learn_params`].
pub const LENGTH_SCALE_GRID: [f64; 5] = [0.1, 0.2, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GpError {
    #[error("no observations")]
    EmptyData,
    #[error("{points} points but {values} values")]
    LengthMismatch { points: usize, values: usize },
    #[error("point dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite observation {0}")]
    NonFiniteValue(f64),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("covariance factorization failed after jitter escalation (noise {noise:e}): {source}")]
    Factorization {
        noise: f64,
        #[source]
        source: LinalgError,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Number of appends between full refits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lag {
    Every(NonZeroUsize),
    Infinite,
}

impl Lag {
    pub fn every(l: usize) -> Option<Self> {
        NonZeroUsize::new(l).map(Lag::Every)
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Lag::Infinite)
    }
}

impl fmt::Display for Lag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lag::Every(l) => write!(f, "{l}"),
            Lag::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("lag must be a positive integer or \"inf\", got {0:?}")]
pub struct ParseLagError(String);

impl FromStr for Lag {
    type Err = ParseLagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") {
            return Ok(Lag::Infinite);
        }
        t.parse::<usize>()
            .ok()
            .and_then(Lag::every)
            .ok_or_else(|| ParseLagError(s.to_string()))
    }
}

impl Serialize for Lag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Lag::Every(l) => s.serialize_u64(l.get() as u64),
            Lag::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Lag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Lag::every(n as usize)
                .ok_or_else(|| serde::de::Error::custom("lag must be at least 1")),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Posterior of the latent function at one point, in raw output units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// What an [`GpState::append`] did to the factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    /// One bordering step, Θ(n²).
    Extended,
    /// Scheduled refit at a lag boundary: parameters re-learned.
    LagRefit,
    /// Extension broke positive-definiteness; refactorized with more jitter.
    JitterRefit,
}

/// Mean and standard deviation used to standardize outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

impl Standardization {
    /// Population mean and standard deviation; the std falls back to 1 when
    /// all values coincide (including the single-value case).
    pub fn from_values(y: &[f64]) -> Self {
        if y.is_empty() {
            return Self { mean: 0.0, std: 1.0 };
        }
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let scale = y.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let std = var.sqrt();
        let std = if std > 1e-12 * scale { std } else { 1.0 };
        Self { mean, std }
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }
}

#[derive(Debug, Clone)]
pub struct GpState {
    x: Vec<Vec<f64>>,
    y_raw: Vec<f64>,
    y: Vec<f64>,
    standardization: Standardization,
    params: KernelParams,
    factor: CholeskyFactor,
    alpha: Vec<f64>,
    lag: Lag,
    appends_since_refit: usize,
}

impl GpState {
    /// Full fit: factorize `K_y` and cache `α = K_y⁻¹ y`.
    ///
    /// A failed factorization is retried once with the noise raised to
    /// `10 · max(σ_n², 1e-8)`.
    pub fn fit(
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
        params: KernelParams,
        lag: Lag,
    ) -> Result<Self, GpError> {
        let standardization = Standardization::from_values(&y);
        Self::fit_with_standardization(x, y, params, lag, standardization)
    }

    /// Full fit with caller-supplied standardization constants.
    pub fn fit_with_standardization(
        x: Vec<Vec<f64>>,
        y_raw: Vec<f64>,
        params: KernelParams,
        lag: Lag,
        standardization: Standardization,
    ) -> Result<Self, GpError> {
        validate_data(&x, &y_raw)?;
        params.validate()?;
        let y: Vec<f64> = y_raw.iter().map(|v| standardization.apply(*v)).collect();
        let (factor, params) = factorize_with_jitter(&x, params)?;
        let alpha = factor.solve(&y)?;
        Ok(Self {
            x,
            y_raw,
            y,
            standardization,
            params,
            factor,
            alpha,
            lag,
            appends_since_refit: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn raw_values(&self) -> &[f64] {
        &self.y_raw
    }

    pub fn standardized_values(&self) -> &[f64] {
        &self.y
    }

    pub fn standardization(&self) -> Standardization {
        self.standardization
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn lag(&self) -> Lag {
        self.lag
    }

    pub fn appends_since_refit(&self) -> usize {
        self.appends_since_refit
    }

    /// Largest raw observation (the incumbent for maximization).
    pub fn best_value(&self) -> f64 {
        self.y_raw.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Posterior mean and variance at `x_star`.
    pub fn posterior(&self, x_star: &[f64]) -> Result<Posterior, GpError> {
        self.check_point(x_star)?;
        let mut v = self.cross_covariance(x_star);
        let mean_std = linalg::dot(&v, &self.alpha);
        self.factor.forward_solve_in_place(&mut v)?;
        Ok(self.finish(mean_std, linalg::dot(&v, &v)))
    }

    /// Posterior at several points with one pass over the factor.
    pub fn posterior_many(&self, points: &[Vec<f64>]) -> Result<Vec<Posterior>, GpError> {
        let n = self.len();
        let m = points.len();
        let mut buf = Vec::with_capacity(n * m);
        let mut means = Vec::with_capacity(m);
        for p in points {
            self.check_point(p)?;
            let start = buf.len();
            buf.extend(self.x.iter().map(|xi| {
                kernel::matern52_at_distance(kernel::distance(xi, p), &self.params)
            }));
            means.push(linalg::dot(&buf[start..], &self.alpha));
        }
        self.factor.forward_solve_columns(&mut buf, m)?;
        Ok(means
            .into_iter()
            .enumerate()
            .map(|(r, mu)| {
                let v = &buf[r * n..(r + 1) * n];
                self.finish(mu, linalg::dot(v, v))
            })
            .collect())
    }

    fn finish(&self, mean_std: f64, explained: f64) -> Posterior {
        let s = self.standardization;
        let var_std = (self.params.signal_variance - explained).max(0.0);
        Posterior {
            mean: mean_std * s.std + s.mean,
            variance: var_std * s.std * s.std,
        }
    }

    fn cross_covariance(&self, x_star: &[f64]) -> Vec<f64> {
        self.x
            .iter()
            .map(|xi| kernel::matern52_at_distance(kernel::distance(xi, x_star), &self.params))
            .collect()
    }

    fn check_point(&self, p: &[f64]) -> Result<(), GpError> {
        let d = self.dim();
        if p.len() == d {
            Ok(())
        } else {
            Err(GpError::DimensionMismatch {
                expected: d,
                found: p.len(),
            })
        }
    }

    /// `−½ yᵀα − Σ log L_ii − (n/2) log 2π` on the standardized outputs.
    pub fn log_marginal_likelihood(&self) -> f64 {
        lml_from_parts(&self.factor, &self.y, &self.alpha)
    }

    /// Adds one observation.
    ///
    /// Off a lag boundary this extends the factor by one row. On the `l`-th
    /// append since the last refit, parameters are re-learned and the state
    /// refit from scratch. On error the state is unchanged.
    pub fn append(&mut self, x_new: Vec<f64>, y_new: f64) -> Result<UpdateKind, GpError> {
        self.check_point(&x_new)?;
        if !y_new.is_finite() {
            return Err(GpError::NonFiniteValue(y_new));
        }
        let refit_due = match self.lag {
            Lag::Infinite => false,
            Lag::Every(l) => self.appends_since_refit + 1 >= l.get(),
        };
        if refit_due {
            return self.append_with_refit(x_new, y_new);
        }

        let (p, c) = kernel::covariance_column(&self.x, &x_new, &self.params)?;
        match self.factor.extend(&p, c) {
            Ok(()) => {
                self.x.push(x_new);
                self.y_raw.push(y_new);
                self.y.push(self.standardization.apply(y_new));
                self.alpha = self.factor.solve(&self.y)?;
                self.appends_since_refit += 1;
                Ok(UpdateKind::Extended)
            }
            Err(LinalgError::NotPositiveDefinite { .. }) => {
                let mut x = self.x.clone();
                x.push(x_new);
                let mut y_raw = self.y_raw.clone();
                y_raw.push(y_new);
                let params = KernelParams {
                    noise_variance: self.params.noise_variance.max(JITTER_FLOOR) * 10.0,
                    ..self.params
                };
                let counter = self.appends_since_refit + 1;
                let next =
                    Self::fit_with_standardization(x, y_raw, params, self.lag, self.standardization)?;
                *self = Self {
                    appends_since_refit: counter,
                    ..next
                };
                Ok(UpdateKind::JitterRefit)
            }
            Err(e) => Err(e.into()),
        }
    }

    fn append_with_refit(&mut self, x_new: Vec<f64>, y_new: f64) -> Result<UpdateKind, GpError> {
        let mut x = self.x.clone();
        x.push(x_new);
        let mut y_raw = self.y_raw.clone();
        y_raw.push(y_new);
        let params = learn_params(&x, &y_raw, &self.params);
        *self = Self::fit(x, y_raw, params, self.lag)?;
        Ok(UpdateKind::LagRefit)
    }
}

fn validate_data(x: &[Vec<f64>], y: &[f64]) -> Result<(), GpError> {
    if x.is_empty() {
        return Err(GpError::EmptyData);
    }
    if x.len() != y.len() {
        return Err(GpError::LengthMismatch {
            points: x.len(),
            values: y.len(),
        });
    }
    let d = kernel::common_dim(x).map_err(|e| match e {
        KernelError::DimensionMismatch { expected, found } => {
            GpError::DimensionMismatch { expected, found }
        }
        other => GpError::Kernel(other),
    })?;
    if d == 0 {
        return Err(GpError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(GpError::NonFiniteValue(*v));
    }
    Ok(())
}

fn factorize_with_jitter(
    x: &[Vec<f64>],
    params: KernelParams,
) -> Result<(CholeskyFactor, KernelParams), GpError> {
    let k = kernel::build_covariance(x, &params)?;
    match linalg::cholesky_full(&k) {
        Ok(l) => Ok((l, params)),
        Err(LinalgError::NotPositiveDefinite { .. }) => {
            let bumped = KernelParams {
                noise_variance: params.noise_variance.max(JITTER_FLOOR) * 10.0,
                ..params
            };
            let k = kernel::build_covariance(x, &bumped)?;
            linalg::cholesky_full(&k)
                .map(|l| (l, bumped))
                .map_err(|source| GpError::Factorization {
                    noise: bumped.noise_variance,
                    source,
                })
        }
        Err(e) => Err(e.into()),
    }
}

fn lml_from_parts(factor: &CholeskyFactor, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len() as f64;
    -0.5 * linalg::dot(y, alpha) - factor.sum_log_diag() - 0.5 * n * (2.0 * PI).ln()
}

/// Grid search for `(σ², ρ)` maximizing the log marginal likelihood of the
/// standardized outputs; `σ_n²` is taken from `base`.
///
/// Fewer than two observations or constant outputs return the defaults
/// `(σ², ρ) = (1, 1)`. Ties prefer `(1, 1)`, then the smaller length scale.
pub fn learn_params(x: &[Vec<f64>], y: &[f64], base: &KernelParams) -> KernelParams {
    let fallback = KernelParams {
        noise_variance: base.noise_variance,
        ..KernelParams::default()
    };
    if x.len() < 2 || x.len() != y.len() {
        return fallback;
    }
    let s = Standardization::from_values(y);
    let ys: Vec<f64> = y.iter().map(|v| s.apply(*v)).collect();
    if ys.iter().all(|v| *v == 0.0) {
        return fallback;
    }

    let n = x.len();
    let mut dist = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in 0..i {
            dist.push(kernel::distance(&x[i], &x[j]));
        }
    }

    let mut candidates = vec![(1.0, 1.0)];
    for &rho in &LENGTH_SCALE_GRID {
        for &s2 in &SIGNAL_VARIANCE_GRID {
            if (s2, rho) != (1.0, 1.0) {
                candidates.push((s2, rho));
            }
        }
    }

    let mut best: Option<(f64, KernelParams)> = None;
    let mut k = SquareMatrix::zeros(n);
    for (s2, rho) in candidates {
        let params = KernelParams {
            signal_variance: s2,
            length_scale: rho,
            noise_variance: base.noise_variance,
        };
        let mut idx = 0;
        for i in 0..n {
            k.set(i, i, params.noisy_self_covariance());
            for j in 0..i {
                let v = kernel::matern52_at_distance(dist[idx], &params);
                idx += 1;
                k.set(i, j, v);
                k.set(j, i, v);
            }
        }
        let Ok(l) = linalg::cholesky_full(&k) else {
            continue;
        };
        let Ok(alpha) = l.solve(&ys) else { continue };
        let lml = lml_from_parts(&l, &ys, &alpha);
        if !lml.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some((b, _)) => lml > b + 1e-12 * b.abs().max(1.0),
        };
        if better {
            best = Some((lml, params));
        }
    }
    best.map(|(_, p)| p).unwrap_or(fallback)
}

//! Matern-5/2 covariance and the covariance matrices built from it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::SquareMatrix;

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("point dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid kernel parameters: {0}")]
    InvalidParams(String),
}

/// Hyperparameters of the Matern-5/2 kernel plus the observation noise
/// added to the diagonal of the training covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub length_scale: f64,
    pub noise_variance: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            signal_variance: 1.0,
            length_scale: 1.0,
            noise_variance: 1e-6,
        }
    }
}

impl KernelParams {
    pub fn new(
        signal_variance: f64,
        length_scale: f64,
        noise_variance: f64,
    ) -> Result<Self, KernelError> {
        let p = Self {
            signal_variance,
            length_scale,
            noise_variance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(KernelError::InvalidParams(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(KernelError::InvalidParams(format!(
                "length scale must be positive, got {}",
                self.length_scale
            )));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(KernelError::InvalidParams(format!(
                "noise variance must be non-negative, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    /// Prior variance of a noisy observation, `σ² + σ_n²`.
    #[inline]
    pub fn noisy_self_covariance(&self) -> f64 {
        self.signal_variance + self.noise_variance
    }
}

/// Euclidean distance. Callers check dimensions.
#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `σ²(1 + √5 d/ρ + 5d²/(3ρ²)) exp(−√5 d/ρ)` for a precomputed distance.
#[inline]
pub fn matern52_at_distance(d: f64, params: &KernelParams) -> f64 {
    let r = SQRT5 * d / params.length_scale;
    #[cfg(not(feature = "inject-kernel-sign-bug"))]
    let decay = (-r).exp();
    #[cfg(feature = "inject-kernel-sign-bug")]
    let decay = r.exp();
    params.signal_variance * (1.0 + r + r * r / 3.0) * decay
}

pub fn matern52(a: &[f64], b: &[f64], params: &KernelParams) -> Result<f64, KernelError> {
    check_dim(a.len(), b.len())?;
    if a.is_empty() {
        return Err(KernelError::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    params.validate()?;
    Ok(matern52_at_distance(distance(a, b), params))
}

/// `K_y = κ(X, X) + σ_n² I`.
pub fn build_covariance(
    points: &[Vec<f64>],
    params: &KernelParams,
) -> Result<SquareMatrix, KernelError> {
    params.validate()?;
    common_dim(points)?;
    let n = points.len();
    let mut k = SquareMatrix::zeros(n);
    let diag = params.noisy_self_covariance();
    for i in 0..n {
        k.set(i, i, diag);
        for j in 0..i {
            let v = matern52_at_distance(distance(&points[i], &points[j]), params);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    Ok(k)
}

/// New column `p` and diagonal entry `c` for appending `x_new` to `points`,
/// so that the bordered matrix equals `build_covariance` of the enlarged set.
pub fn covariance_column(
    points: &[Vec<f64>],
    x_new: &[f64],
    params: &KernelParams,
) -> Result<(Vec<f64>, f64), KernelError> {
    params.validate()?;
    let p = points
        .iter()
        .map(|x| {
            check_dim(x_new.len(), x.len())?;
            Ok(matern52_at_distance(distance(x, x_new), params))
        })
        .collect::<Result<Vec<_>, KernelError>>()?;
    Ok((p, params.noisy_self_covariance()))
}

/// Checks that all points share one dimension and returns it (0 if empty).
pub(crate) fn common_dim(points: &[Vec<f64>]) -> Result<usize, KernelError> {
    let Some(first) = points.first() else {
        return Ok(0);
    };
    let d = first.len();
    for p in points {
        check_dim(d, p.len())?;
    }
    Ok(d)
}

#[inline]
fn check_dim(expected: usize, found: usize) -> Result<(), KernelError> {
    if expected == found {
        Ok(())
    } else {
        Err(KernelError::DimensionMismatch { expected, found })
    }
}

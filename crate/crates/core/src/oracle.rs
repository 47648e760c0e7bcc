//! Reference computations that avoid the Cholesky path entirely: dense
//! Gauss-Jordan inversion, LU determinants and Monte-Carlo EI. Used by the
//! self-test and the test suites to cross-check the fast implementations.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::gp::GpState;
use crate::kernel::{self, KernelParams};
use crate::linalg::SquareMatrix;

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn dense_inverse(a: &SquareMatrix) -> Option<SquareMatrix> {
    let n = a.dim();
    let mut m = a.to_rows();
    let mut inv = SquareMatrix::identity(n).to_rows();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col] == 0.0 {
            return None;
        }
        m.swap(col, piv);
        inv.swap(col, piv);
        let d = m[col][col];
        for k in 0..n {
            m[col][k] /= d;
            inv[col][k] /= d;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for k in 0..n {
                        m[r][k] -= f * m[col][k];
                        inv[r][k] -= f * inv[col][k];
                    }
                }
            }
        }
    }
    Some(SquareMatrix::from_rows(&inv))
}

/// `log |det A|` by LU decomposition with partial pivoting.
pub fn log_abs_det(a: &SquareMatrix) -> f64 {
    let n = a.dim();
    let mut m = a.to_rows();
    let mut acc = 0.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let d = m[col][col];
        if d == 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += d.abs().ln();
        for r in col + 1..n {
            let f = m[r][col] / d;
            for k in col..n {
                m[r][k] -= f * m[col][k];
            }
        }
    }
    acc
}

/// Posterior mean and variance (raw units) computed from `K_y⁻¹` directly:
/// `μ* = K*ᵀ K_y⁻¹ y`, `Σ* = K** − K*ᵀ K_y⁻¹ K*`.
pub fn dense_posterior(
    x: &[Vec<f64>],
    y_std: &[f64],
    params: &KernelParams,
    mean: f64,
    scale: f64,
    x_star: &[f64],
) -> (f64, f64) {
    let k = kernel::build_covariance(x, params).expect("valid inputs");
    let kinv = dense_inverse(&k).expect("invertible covariance");
    let ks: Vec<f64> = x
        .iter()
        .map(|xi| kernel::matern52(xi, x_star, params).unwrap())
        .collect();
    let kinv_y = kinv.mul_vec(y_std);
    let kinv_ks = kinv.mul_vec(&ks);
    let mu: f64 = ks.iter().zip(&kinv_y).map(|(a, b)| a * b).sum();
    let quad: f64 = ks.iter().zip(&kinv_ks).map(|(a, b)| a * b).sum();
    (
        mu * scale + mean,
        (params.signal_variance - quad) * scale * scale,
    )
}

/// `−½ yᵀK⁻¹y − ½ log det K − (n/2) log 2π` from dense inverse and determinant.
pub fn dense_log_marginal_likelihood(x: &[Vec<f64>], y_std: &[f64], params: &KernelParams) -> f64 {
    let k = kernel::build_covariance(x, params).expect("valid inputs");
    let kinv = dense_inverse(&k).expect("invertible covariance");
    let quad: f64 = y_std
        .iter()
        .zip(kinv.mul_vec(y_std))
        .map(|(a, b)| a * b)
        .sum();
    let n = x.len() as f64;
    -0.5 * quad - 0.5 * log_abs_det(&k) - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Dense-oracle posterior of an existing state at `x_star`.
pub fn dense_posterior_of(state: &GpState, x_star: &[f64]) -> (f64, f64) {
    let s = state.standardization();
    dense_posterior(
        state.points(),
        state.standardized_values(),
        state.params(),
        s.mean,
        s.std,
        x_star,
    )
}

/// Monte-Carlo estimate of `E[max(f − f_best − ξ, 0)]`, `f ~ N(mean, std²)`,
/// with its standard error.
pub fn mc_expected_improvement<R: Rng + ?Sized>(
    mean: f64,
    std: f64,
    f_best: f64,
    xi: f64,
    draws: usize,
    rng: &mut R,
) -> (f64, f64) {
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let z: f64 = StandardNormal.sample(rng);
        let imp = (mean + std * z - f_best - xi).max(0.0);
        sum += imp;
        sum_sq += imp * imp;
    }
    let n = draws as f64;
    let est = sum / n;
    let var = (sum_sq / n - est * est).max(0.0) * n / (n - 1.0);
    (est, (var / n).sqrt())
}

//! Expected improvement and its multi-start maximization over the unit cube.
//!
//! Each restart runs a projected gradient ascent on EI with central
//! finite-difference gradients and a backtracking (Armijo) line search.
//! [`suggest_one`] keeps the best converged point; [`suggest_batch`] keeps
//! up to `t` distinct local maxima for parallel evaluation.

use std::cmp::Ordering;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;

use crate::gp::{GpState, Posterior};
use crate::kernel::distance;

pub const DEFAULT_XI: f64 = 0.01;
/// Central-difference step for EI gradients.
pub const FD_STEP: f64 = 1e-5;
pub const MAX_ASCENT_ITERATIONS: usize = 200;
/// Ascent stops once an accepted or attempted step is shorter than this.
pub const STEP_TOLERANCE: f64 = 1e-7;
const INITIAL_STEP: f64 = 0.05;
const MAX_STEP: f64 = 0.5;
const ARMIJO: f64 = 1e-4;

/// Standard normal density.
#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// `E[max(f − f_best − ξ, 0)]` for `f ~ N(mean, std²)`.
///
/// Closed form `γΦ(Z) + σφ(Z)` with `γ = mean − f_best − ξ`, `Z = γ/σ`;
/// zero when `std` is zero.
pub fn expected_improvement(mean: f64, std: f64, f_best: f64, xi: f64) -> f64 {
    if !(std > 0.0) {
        return 0.0;
    }
    let gamma = mean - f_best - xi;
    let z = gamma / std;
    let ei = gamma * normal_cdf(z) + std * normal_pdf(z);
    if ei.is_finite() {
        ei.max(0.0)
    } else {
        0.0
    }
}

/// Acquisition candidate in unit-cube coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion {
    pub x: Vec<f64>,
    pub ei_value: f64,
    /// Restart that converged here; `None` marks the uniform random point
    /// returned when EI vanished everywhere it was probed.
    pub start_index: Option<usize>,
}

/// `0.05 · √D`.
pub fn default_dedupe_radius(dim: usize) -> f64 {
    0.05 * (dim as f64).sqrt()
}

/// `10 · D`.
pub fn default_restarts(dim: usize) -> usize {
    10 * dim
}

/// EI surface of one GP snapshot.
struct Surface<'a> {
    gp: &'a GpState,
    f_best: f64,
    xi: f64,
}

impl Surface<'_> {
    fn ei(&self, p: &Posterior) -> f64 {
        expected_improvement(p.mean, p.std(), self.f_best, self.xi)
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.gp
            .posterior(x)
            .map(|p| self.ei(&p))
            .unwrap_or(0.0)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut stencil = Vec::with_capacity(2 * d);
        for k in 0..d {
            for sign in [1.0, -1.0] {
                let mut p = x.to_vec();
                p[k] += sign * FD_STEP;
                stencil.push(p);
            }
        }
        let posts = match self.gp.posterior_many(&stencil) {
            Ok(p) => p,
            Err(_) => return vec![0.0; d],
        };
        (0..d)
            .map(|k| (self.ei(&posts[2 * k]) - self.ei(&posts[2 * k + 1])) / (2.0 * FD_STEP))
            .collect()
    }

    /// Projected ascent from `start`; returns the final point and its EI.
    fn ascend(&self, start: Vec<f64>) -> (Vec<f64>, f64) {
        let mut x = start;
        let mut f = self.value(&x);
        let mut step = INITIAL_STEP;
        'outer: for _ in 0..MAX_ASCENT_ITERATIONS {
            let g = self.gradient(&x);
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(gnorm > 0.0) || !gnorm.is_finite() {
                break;
            }
            loop {
                let cand: Vec<f64> = x
                    .iter()
                    .zip(&g)
                    .map(|(xi, gi)| (xi + step * gi / gnorm).clamp(0.0, 1.0))
                    .collect();
                let moved = distance(&cand, &x);
                if moved < STEP_TOLERANCE {
                    break 'outer;
                }
                let fc = self.value(&cand);
                let slope: f64 = g.iter().zip(cand.iter().zip(&x)).map(|(gi, (c, o))| gi * (c - o)).sum();
                if fc > f + ARMIJO * slope {
                    x = cand;
                    f = fc;
                    step = (step * 2.0).min(MAX_STEP);
                    break;
                }
                step *= 0.5;
            }
        }
        (x, f)
    }
}

fn random_point<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random::<f64>()).collect()
}

/// Runs every restart and returns converged points sorted by EI descending,
/// then by restart index.
fn converge_restarts<R: Rng + ?Sized>(
    surface: &Surface<'_>,
    restarts: usize,
    rng: &mut R,
) -> Vec<Suggestion> {
    let d = surface.gp.dim();
    let starts: Vec<Vec<f64>> = (0..restarts.max(1)).map(|_| random_point(rng, d)).collect();
    let mut out: Vec<Suggestion> = starts
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let (x, ei) = surface.ascend(s);
            Suggestion {
                x,
                ei_value: ei,
                start_index: Some(i),
            }
        })
        .collect();
    out.sort_by(rank);
    out
}

fn rank(a: &Suggestion, b: &Suggestion) -> Ordering {
    b.ei_value
        .partial_cmp(&a.ei_value)
        .unwrap_or(Ordering::Equal)
        .then(a.start_index.cmp(&b.start_index))
}

fn fallback<R: Rng + ?Sized>(surface: &Surface<'_>, rng: &mut R) -> Suggestion {
    let x = random_point(rng, surface.gp.dim());
    let ei_value = surface.value(&x);
    Suggestion {
        x,
        ei_value,
        start_index: None,
    }
}

/// Maximizes EI with `restarts` local ascents from uniform random starts.
///
/// The incumbent is the largest raw observation in `state`.
pub fn suggest_one<R: Rng + ?Sized>(
    state: &GpState,
    restarts: usize,
    xi: f64,
    rng: &mut R,
) -> Suggestion {
    let surface = Surface {
        gp: state,
        f_best: state.best_value(),
        xi,
    };
    let ranked = converge_restarts(&surface, restarts, rng);
    match ranked.into_iter().next() {
        Some(best) if best.ei_value > 0.0 => best,
        _ => fallback(&surface, rng),
    }
}

/// Up to `t` distinct local maxima of EI, sorted by EI descending.
///
/// Converged points closer than `dedupe_radius` to a better one are merged
/// into it. Points with zero EI are not local maxima and are dropped; if
/// none remain, `t` uniform random points are returned instead.
pub fn suggest_batch<R: Rng + ?Sized>(
    state: &GpState,
    t: usize,
    restarts: usize,
    xi: f64,
    dedupe_radius: f64,
    rng: &mut R,
) -> Vec<Suggestion> {
    let t = t.max(1);
    let surface = Surface {
        gp: state,
        f_best: state.best_value(),
        xi,
    };
    let ranked = converge_restarts(&surface, restarts, rng);
    let mut picked: Vec<Suggestion> = Vec::with_capacity(t);
    for s in ranked.into_iter().filter(|s| s.ei_value > 0.0) {
        if picked.len() == t {
            break;
        }
        if picked.iter().all(|p| distance(&p.x, &s.x) >= dedupe_radius) {
            picked.push(s);
        }
    }
    if picked.is_empty() {
        picked = (0..t).map(|_| fallback(&surface, rng)).collect();
    }
    picked
}

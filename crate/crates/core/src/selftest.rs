//! Fast built-in oracle suite behind `lazybo selftest`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acquisition::{self, expected_improvement};
use crate::benchmarks::{levy, levy1d};
use crate::gp::{GpState, Lag};
use crate::kernel::{self, KernelParams};
use crate::linalg::{cholesky_full, CholeskyFactor};
use crate::oracle;

#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect()
}

fn factor_group() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let params = KernelParams::default();
    let pts = random_points(&mut rng, 200, 5);
    let k = kernel::build_covariance(&pts, &params).map_err(|e| e.to_string())?;
    let full = cholesky_full(&k).map_err(|e| e.to_string())?;
    let mut grown = CholeskyFactor::empty();
    for i in 0..pts.len() {
        let (p, c) = kernel::covariance_column(&pts[..i], &pts[i], &params).map_err(|e| e.to_string())?;
        grown.extend(&p, c).map_err(|e| e.to_string())?;
    }
    let diff = grown.max_abs_diff(&full).ok_or("size mismatch")?;
    if diff > 1e-8 {
        return Err(format!("incremental vs full max diff {diff:e}"));
    }
    let back = full.reconstruct();
    let mut rec = 0.0_f64;
    for i in 0..200 {
        for j in 0..200 {
            rec = rec.max((back.get(i, j) - k.get(i, j)).abs());
        }
    }
    if rec > 1e-10 * k.max_abs() {
        return Err(format!("L·Lᵀ reconstruction error {rec:e}"));
    }
    Ok(format!("n=200 max diff {diff:.1e}, reconstruction {rec:.1e}"))
}

fn ei_group() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let cases = [(0.0, 1.0, 0.0, 0.01), (1.5, 0.3, 1.0, 0.0), (-1.0, 2.0, 0.5, 0.1)];
    let mut worst = 0.0_f64;
    for (m, s, fb, xi) in cases {
        let ei = expected_improvement(m, s, fb, xi);
        let (mc, se) = oracle::mc_expected_improvement(m, s, fb, xi, 200_000, &mut rng);
        let z = (ei - mc).abs() / se.max(1e-300);
        if z > 3.0 {
            return Err(format!("EI({m}, {s}, {fb}, {xi}) = {ei} vs MC {mc} ± {se}"));
        }
        worst = worst.max(z);
    }
    // EI vanishes at an interpolated point and grows away from it.
    let gp = GpState::fit(vec![vec![0.5]], vec![1.0], KernelParams::default(), Lag::Infinite)
        .map_err(|e| e.to_string())?;
    let s = acquisition::suggest_one(&gp, 10, acquisition::DEFAULT_XI, &mut rng);
    if s.start_index.is_none() || !(s.ei_value > 0.0) || (s.x[0] - 0.5).abs() < 0.1 {
        return Err(format!("suggestion next to a lone observation is degenerate: {s:?}"));
    }
    Ok(format!("worst MC z-score {worst:.2}"))
}

fn posterior_group() -> Result<String, String> {
    let unit = KernelParams::default();
    let k1 = kernel::matern52(&[0.0], &[1.0], &unit).map_err(|e| e.to_string())?;
    let expect = (1.0 + 5f64.sqrt() + 5.0 / 3.0) * (-(5f64.sqrt())).exp();
    if (k1 - expect).abs() > 1e-12 {
        return Err(format!("matern52 at unit distance {k1} != {expect}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let pts = random_points(&mut rng, 30, 3);
    let y: Vec<f64> = pts.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[2]).collect();
    let params = KernelParams::new(1.0, 0.5, 1e-4).map_err(|e| e.to_string())?;
    let gp = GpState::fit(pts, y, params, Lag::Infinite).map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    for _ in 0..10 {
        let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
        let post = gp.posterior(&x).map_err(|e| e.to_string())?;
        let (m, v) = oracle::dense_posterior_of(&gp, &x);
        worst = worst.max((post.mean - m).abs()).max((post.variance - v.max(0.0)).abs());
    }
    let lml = gp.log_marginal_likelihood();
    let dense = oracle::dense_log_marginal_likelihood(gp.points(), gp.standardized_values(), gp.params());
    worst = worst.max((lml - dense).abs());
    if worst > 1e-8 {
        return Err(format!("posterior/LML deviates from dense oracle by {worst:e}"));
    }
    Ok(format!("n=30 max deviation {worst:.1e}"))
}

fn levy_group() -> Result<String, String> {
    for d in 1..=10 {
        let v = levy(&vec![1.0; d]);
        if v != 0.0 {
            return Err(format!("levy at ones (D={d}) = {v}"));
        }
    }
    if (levy1d(5.0) + 1.0).abs() > 1e-12 {
        return Err("levy1d(5) != -1".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..5).map(|_| rng.random_range(-10.0..10.0)).collect();
        if levy(&x) > 1e-12 {
            return Err(format!("levy({x:?}) exceeds the optimum"));
        }
    }
    Ok("optimum 0 at ones for D=1..10".into())
}

/// Runs every group, writing one line per group. Returns the results.
pub fn run<W: Write + ?Sized>(out: &mut W) -> Vec<GroupResult> {
    let groups: [(&'static str, fn() -> Result<String, String>); 4] = [
        ("factor", factor_group),
        ("ei", ei_group),
        ("posterior", posterior_group),
        ("levy", levy_group),
    ];
    groups
        .iter()
        .map(|(name, f)| {
            let (passed, detail) = match f() {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            let _ = writeln!(
                out,
                "{} {name}: {detail}",
                if passed { "PASS" } else { "FAIL" }
            );
            GroupResult {
                name,
                passed,
                detail,
            }
        })
        .collect()
}

//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Pass criterion numbers as arguments to run a subset,
//! e.g. `cargo test --release --test acceptance -- 2 8`.

use std::process::ExitCode;
use std::time::Instant;

use lazybo::acquisition::expected_improvement;
use lazybo::benchmarks::{
    self, BenchmarkObjective, BenchmarkSpec, FunctionId, TimingConfig, TimingMode, TimingRow,
};
use lazybo::gp::{GpState, Lag};
use lazybo::kernel::{self, KernelParams};
use lazybo::linalg::{cholesky_full, extend_factor, CholeskyFactor};
use lazybo::optimizer::{run, run_parallel, BoConfig, RunTrace};
use lazybo::oracle;
use lazybo::trace::{self, TraceOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Length scale (unit-cube coordinates) used for the 5-D Levy runs.
const LEVY_LENGTH_SCALE: f64 = 0.2;
/// Acquisition restarts for the sequential 5-D Levy runs.
const LEVY_RESTARTS: usize = 20;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect()
}

fn levy_config(dim: usize) -> BoConfig {
    let spec = BenchmarkSpec::new(FunctionId::Levy, dim).unwrap();
    BoConfig {
        restarts: LEVY_RESTARTS,
        kernel: KernelParams {
            length_scale: LEVY_LENGTH_SCALE,
            ..KernelParams::default()
        },
        ..BoConfig::new(spec.bounds)
    }
}

fn factor_equivalence() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = KernelParams::default();
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let pts = random_points(&mut rng, 200, 5);
        let full = cholesky_full(&kernel::build_covariance(&pts, &params).unwrap()).unwrap();
        let (_, c0) = kernel::covariance_column(&[], &pts[0], &params).unwrap();
        let mut grown = extend_factor(CholeskyFactor::empty(), &[], c0).unwrap();
        for i in 1..200 {
            let (p, c) = kernel::covariance_column(&pts[..i], &pts[i], &params).unwrap();
            grown = extend_factor(grown, &p, c).unwrap();
        }
        worst = worst.max(grown.max_abs_diff(&full).unwrap());
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 10.0,
        format!("max |L_ext - L_full| = {worst:.1e} over 50 matrices of size 200, {secs:.1} s"),
    )
}

fn seconds_at(rows: &[TimingRow], n: usize) -> f64 {
    rows.iter().find(|r| r.n == n).map(|r| r.seconds).unwrap()
}

fn scaling_exponents() -> Outcome {
    let t = Instant::now();
    let cfg = TimingConfig::new(2048, 512);
    let naive = benchmarks::timing_harness(&cfg, TimingMode::Naive).unwrap();
    let lazy = benchmarks::timing_harness(&cfg, TimingMode::Lazy).unwrap();
    let ratio = |rows: &[TimingRow], a: usize, b: usize| seconds_at(rows, b) / seconds_at(rows, a);
    let naive_r = [ratio(&naive, 512, 1024), ratio(&naive, 1024, 2048)];
    let lazy_r = [ratio(&lazy, 512, 1024), ratio(&lazy, 1024, 2048)];
    let gap = seconds_at(&naive, 2048) / seconds_at(&lazy, 2048);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        naive_r.iter().all(|r| *r >= 5.0) && lazy_r.iter().all(|r| *r <= 6.0) && gap >= 20.0 && secs < 300.0,
        format!(
            "naive ratios {:.2}, {:.2}; lazy ratios {:.2}, {:.2}; naive/lazy at 2048 = {gap:.0}; {secs:.1} s",
            naive_r[0], naive_r[1], lazy_r[0], lazy_r[1]
        ),
    )
}

fn posterior_oracles() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let n = rng.random_range(1..=30);
        let d = rng.random_range(1..=5);
        let x = random_points(&mut rng, n, d);
        let y: Vec<f64> = x
            .iter()
            .map(|p| (5.0 * p[0]).sin() + p.iter().sum::<f64>())
            .collect();
        let params = KernelParams::new(
            rng.random_range(0.25..4.0),
            rng.random_range(0.1..2.0),
            1e-6,
        )
        .unwrap();
        let state = GpState::fit(x, y, params, Lag::Infinite).unwrap();
        for _ in 0..10 {
            let q: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let p = state.posterior(&q).unwrap();
            let (m, v) = oracle::dense_posterior_of(&state, &q);
            worst = worst.max((p.mean - m).abs()).max((p.variance - v.max(0.0)).abs());
        }
        let dense = oracle::dense_log_marginal_likelihood(
            state.points(),
            state.standardized_values(),
            state.params(),
        );
        worst = worst.max((state.log_marginal_likelihood() - dense).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 5.0,
        format!("max deviation from dense oracles {worst:.1e} over 20 states, {secs:.2} s"),
    )
}

fn ei_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xi = 0.01;
    let mut worst = 0.0_f64;
    let mut failures = Vec::new();
    for z in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        for f_best in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            for sigma in [0.1, 1.0, 10.0] {
                let mean = f_best + xi + z * sigma;
                let ei = expected_improvement(mean, sigma, f_best, xi);
                let (mc, se) = oracle::mc_expected_improvement(mean, sigma, f_best, xi, 1_000_000, &mut rng);
                let score = (ei - mc).abs() / se;
                worst = worst.max(score);
                if score > 3.0 {
                    failures.push(format!("(z={z}, f*={f_best}, s={sigma})"));
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        failures.is_empty() && secs < 30.0,
        format!(
            "75 grid points, worst |EI - MC| = {worst:.2} standard errors{}, {secs:.1} s",
            if failures.is_empty() {
                String::new()
            } else {
                format!(", outside 3 SE at {}", failures.join(" "))
            }
        ),
    )
}

fn levy_convergence() -> Outcome {
    let t = Instant::now();
    let spec = BenchmarkSpec::new(FunctionId::Levy, 5).unwrap();
    let finals: Vec<f64> = (1..=5)
        .map(|seed| {
            let config = BoConfig {
                rng_seed: seed,
                ..levy_config(5)
            };
            run(&config, &BenchmarkObjective::new(spec.clone(), 0))
                .unwrap()
                .summary
                .best_y
        })
        .collect();
    let secs = t.elapsed().as_secs_f64();
    let med = median(finals.clone());
    let best = finals.iter().cloned().fold(f64::MIN, f64::max);
    outcome(
        med >= -0.5 && best >= -0.1 && secs < 900.0,
        format!(
            "final best per seed {:?}, median {med:.4}, best {best:.4}, {secs:.0} s",
            finals.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn lag_tradeoff() -> Outcome {
    let t = Instant::now();
    let spec = BenchmarkSpec::new(FunctionId::Levy, 5).unwrap();
    let lags = [Lag::every(1).unwrap(), Lag::every(3).unwrap(), Lag::every(10).unwrap(), Lag::Infinite];
    let mut times = Vec::new();
    let mut lag3_best = 0.0;
    for lag in lags {
        let traces: Vec<RunTrace> = (1..=3)
            .map(|seed| {
                let config = BoConfig {
                    n_seeds: 200,
                    iterations: 400,
                    lag,
                    rng_seed: seed,
                    xi: 0.0,
                    ..levy_config(5)
                };
                run(&config, &BenchmarkObjective::new(spec.clone(), 0)).unwrap()
            })
            .collect();
        times.push(median(traces.iter().map(|t| t.surrogate_time()).collect()));
        if lag == Lag::every(3).unwrap() {
            lag3_best = median(traces.iter().map(|t| t.summary.best_y).collect());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let decreasing = times.windows(2).all(|w| w[1] < w[0]);
    outcome(
        decreasing && lag3_best >= -0.5 && secs < 1800.0,
        format!(
            "median surrogate seconds for lag 1, 3, 10, inf: {:.3}, {:.3}, {:.3}, {:.4}; lag 3 median best {lag3_best:.4}; {secs:.0} s",
            times[0], times[1], times[2], times[3]
        ),
    )
}

/// Rounds (or iterations) until the best value first reaches `threshold`;
/// `cap + 1` if it never does.
fn rounds_to(trace: &RunTrace, threshold: f64, cap: usize) -> usize {
    trace.first_round_reaching(threshold).unwrap_or(cap + 1)
}

fn batch_speedup() -> Outcome {
    let t = Instant::now();
    // Threshold -1.0 on the raw Levy value, i.e. -0.5 after squashing.
    let threshold = benchmarks::squash(-1.0);
    let spec = BenchmarkSpec::new(FunctionId::SyntheticExpensive, 5).unwrap();
    let (seq_cap, batch_cap) = (1000, 200);
    let mut seq = Vec::new();
    let mut par = Vec::new();
    for seed in 1..=3 {
        let base = BoConfig {
            n_seeds: 10,
            lag: Lag::every(10).unwrap(),
            rng_seed: seed,
            target: Some(threshold),
            ..levy_config(5)
        };
        let s = run(
            &BoConfig {
                iterations: seq_cap,
                ..base.clone()
            },
            &BenchmarkObjective::new(spec.clone(), seed),
        )
        .unwrap();
        seq.push(rounds_to(&s, threshold, seq_cap) as f64);
        let p = run_parallel(
            &BoConfig {
                iterations: batch_cap,
                batch_size: 20,
                restarts: 80,
                ..base
            },
            &BenchmarkObjective::new(spec.clone(), seed),
        )
        .unwrap();
        par.push(rounds_to(&p, threshold, batch_cap) as f64);
    }
    let secs = t.elapsed().as_secs_f64();
    let (ms, mp) = (median(seq.clone()), median(par.clone()));
    outcome(
        mp <= 0.5 * ms && secs < 900.0,
        format!("sequential iterations {seq:?} (median {ms}), batch-20 rounds {par:?} (median {mp}), {secs:.0} s"),
    )
}

fn determinism() -> Outcome {
    let spec = BenchmarkSpec::new(FunctionId::Levy, 5).unwrap();
    let config = BoConfig {
        n_seeds: 5,
        iterations: 60,
        lag: Lag::every(7).unwrap(),
        rng_seed: 2024,
        ..levy_config(5)
    };
    let opts = TraceOptions {
        redact_timings: true,
        echo: None,
    };
    let render = || {
        let trace = run(&config, &BenchmarkObjective::new(spec.clone(), 0)).unwrap();
        let mut buf = Vec::new();
        trace::write_jsonl(&trace, &opts, &mut buf).unwrap();
        buf
    };
    let (a, b) = (render(), render());
    outcome(
        a == b && !a.is_empty(),
        format!("two runs wrote {} and {} bytes, identical: {}", a.len(), b.len(), a == b),
    )
}

fn main() -> ExitCode {
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (1, "incremental-factor equivalence", factor_equivalence),
        (2, "scaling exponents", scaling_exponents),
        (3, "posterior and LML oracles", posterior_oracles),
        (4, "EI oracle", ei_oracle),
        (5, "5-D Levy convergence, lazy mode", levy_convergence),
        (6, "lag trade-off", lag_tradeoff),
        (7, "batch speedup", batch_speedup),
        (8, "determinism", determinism),
    ];
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut all = true;
    for (id, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let o = f();
        all &= o.passed;
        println!("{} {id} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

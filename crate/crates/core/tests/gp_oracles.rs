use lazybo::gp::{self, GpState, Lag, UpdateKind};
use lazybo::kernel::{self, KernelParams};
use lazybo::linalg::cholesky_full;
use lazybo::oracle;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect()
}

fn smooth(p: &[f64]) -> f64 {
    (4.0 * p[0]).sin() + p.iter().skip(1).map(|v| v * v).sum::<f64>()
}

#[test]
fn alpha_matches_dense_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let x = random_points(&mut rng, 20, 3);
    let y: Vec<f64> = x.iter().map(|p| smooth(p)).collect();
    let params = KernelParams::new(1.5, 0.4, 1e-4).unwrap();
    let state = GpState::fit(x.clone(), y, params, Lag::Infinite).unwrap();
    let k = kernel::build_covariance(&x, &params).unwrap();
    let kinv = oracle::dense_inverse(&k).unwrap();
    let expect = kinv.mul_vec(state.standardized_values());
    for (a, b) in state.alpha().iter().zip(&expect) {
        assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
    }
}

#[test]
fn posterior_and_lml_match_dense_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..20 {
        let n = rng.random_range(1..=30);
        let d = rng.random_range(1..=4);
        let x = random_points(&mut rng, n, d);
        let y: Vec<f64> = x.iter().map(|p| smooth(p) + 0.1 * case as f64).collect();
        let params = KernelParams::new(
            rng.random_range(0.5..2.0),
            rng.random_range(0.2..1.0),
            rng.random_range(1e-4..1e-2),
        )
        .unwrap();
        let state = GpState::fit(x, y, params, Lag::Infinite).unwrap();
        for _ in 0..5 {
            let q: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let post = state.posterior(&q).unwrap();
            let (m, v) = oracle::dense_posterior_of(&state, &q);
            assert!((post.mean - m).abs() < 1e-8, "case {case}: mean {} vs {m}", post.mean);
            assert!((post.variance - v.max(0.0)).abs() < 1e-8, "case {case}: var {} vs {v}", post.variance);
        }
        let dense = oracle::dense_log_marginal_likelihood(state.points(), state.standardized_values(), state.params());
        assert!((state.log_marginal_likelihood() - dense).abs() < 1e-8, "case {case}");
    }
}

#[test]
fn lazy_appends_match_fresh_fit_with_frozen_constants() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let params = KernelParams::new(1.0, 0.3, 1e-5).unwrap();
    let seed_x = random_points(&mut rng, 5, 2);
    let seed_y: Vec<f64> = seed_x.iter().map(|p| smooth(p)).collect();
    let mut lazy = GpState::fit(seed_x, seed_y, params, Lag::Infinite).unwrap();
    for _ in 0..50 {
        let p: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
        let v = smooth(&p);
        assert_eq!(lazy.append(p, v).unwrap(), UpdateKind::Extended);
    }
    let eager = GpState::fit_with_standardization(
        lazy.points().to_vec(),
        lazy.raw_values().to_vec(),
        *lazy.params(),
        Lag::Infinite,
        lazy.standardization(),
    )
    .unwrap();
    let full = cholesky_full(&kernel::build_covariance(lazy.points(), lazy.params()).unwrap()).unwrap();
    assert!(lazy.factor().max_abs_diff(&full).unwrap() < 1e-8);
    for _ in 0..10 {
        let q: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
        let a = lazy.posterior(&q).unwrap();
        let b = eager.posterior(&q).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-8);
        assert!((a.variance - b.variance).abs() < 1e-8);
    }
}

#[test]
fn lag_one_append_equals_refit_with_learned_params() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = random_points(&mut rng, 12, 2);
    let y: Vec<f64> = x.iter().map(|p| smooth(p)).collect();
    let base = KernelParams::default();
    let lag = Lag::every(1).unwrap();
    let mut state = GpState::fit(x.clone(), y.clone(), gp::learn_params(&x, &y, &base), lag).unwrap();
    let p = vec![0.42, 0.17];
    let v = smooth(&p);
    assert_eq!(state.append(p.clone(), v).unwrap(), UpdateKind::LagRefit);

    let (mut x2, mut y2) = (x, y);
    x2.push(p);
    y2.push(v);
    let learned = gp::learn_params(&x2, &y2, &base);
    assert_eq!(*state.params(), learned);
    let fresh = GpState::fit(x2, y2, learned, lag).unwrap();
    let q = [0.6, 0.6];
    let (a, b) = (state.posterior(&q).unwrap(), fresh.posterior(&q).unwrap());
    assert!((a.mean - b.mean).abs() < 1e-10);
    assert!((a.variance - b.variance).abs() < 1e-10);
}

#[test]
fn learn_params_recovers_length_scale_of_sampled_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 60;
    let x = random_points(&mut rng, n, 1);
    let truth = KernelParams::new(1.0, 0.2, 1e-6).unwrap();
    let k = kernel::build_covariance(&x, &truth).unwrap();
    let l = cholesky_full(&k).unwrap();
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| l.row(i).iter().zip(&z).map(|(a, b)| a * b).sum())
        .collect();
    let learned = gp::learn_params(&x, &y, &KernelParams::default());
    assert!(
        [0.1, 0.2, 0.5].contains(&learned.length_scale),
        "learned {learned:?}"
    );
}

#[test]
fn near_duplicates_stay_finite() {
    let mut state = GpState::fit(
        vec![vec![0.5, 0.5]],
        vec![1.0],
        KernelParams::new(1.0, 1.0, 1e-12).unwrap(),
        Lag::Infinite,
    )
    .unwrap();
    for k in 0..10 {
        state.append(vec![0.5 + 1e-13 * k as f64, 0.5], 1.0 + 1e-3 * k as f64).unwrap();
    }
    let p = state.posterior(&[0.5, 0.5]).unwrap();
    assert!(p.mean.is_finite() && p.variance.is_finite());
    assert!(state.log_marginal_likelihood().is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lml_is_permutation_invariant(seed in 0u64..1000, n in 2usize..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_points(&mut rng, n, 2);
        let y: Vec<f64> = x.iter().map(|p| smooth(p)).collect();
        let params = KernelParams::new(1.0, 0.5, 1e-4).unwrap();
        let a = GpState::fit(x.clone(), y.clone(), params, Lag::Infinite).unwrap();
        let (mut xr, mut yr) = (x, y);
        xr.reverse();
        yr.reverse();
        xr.rotate_left(seed as usize % n);
        yr.rotate_left(seed as usize % n);
        let b = GpState::fit(xr, yr, params, Lag::Infinite).unwrap();
        prop_assert!((a.log_marginal_likelihood() - b.log_marginal_likelihood()).abs() < 1e-9);
    }

    #[test]
    fn variance_never_exceeds_prior(seed in 0u64..1000, q in prop::collection::vec(0.0..1.0f64, 2)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_points(&mut rng, 8, 2);
        let y: Vec<f64> = x.iter().map(|p| smooth(p)).collect();
        let params = KernelParams::new(2.0, 0.3, 1e-6).unwrap();
        let state = GpState::fit(x, y, params, Lag::Infinite).unwrap();
        let p = state.posterior(&q).unwrap();
        let s = state.standardization().std;
        prop_assert!(p.variance >= 0.0);
        prop_assert!(p.variance <= params.signal_variance * s * s * (1.0 + 1e-12));
    }
}

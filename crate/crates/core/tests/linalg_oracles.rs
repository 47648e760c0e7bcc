use lazybo::kernel::{self, KernelParams};
use lazybo::linalg::{cholesky_full, CholeskyFactor, LinalgError, SquareMatrix};
use proptest::prelude::*;

/// Right-looking (outer-product) Cholesky on a dense copy. Written
/// independently of the row-by-row factorization under test.
fn right_looking(k: &SquareMatrix) -> Vec<Vec<f64>> {
    let n = k.dim();
    let mut a = k.to_rows();
    for j in 0..n {
        let d = a[j][j].sqrt();
        a[j][j] = d;
        for i in j + 1..n {
            a[i][j] /= d;
        }
        for c in j + 1..n {
            for r in c..n {
                a[r][c] -= a[r][j] * a[c][j];
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        for v in row.iter_mut().skip(i + 1) {
            *v = 0.0;
        }
    }
    a
}

fn grow(points: &[Vec<f64>], params: &KernelParams) -> CholeskyFactor {
    let mut f = CholeskyFactor::empty();
    for i in 0..points.len() {
        let (p, c) = kernel::covariance_column(&points[..i], &points[i], params).unwrap();
        f.extend(&p, c).unwrap();
    }
    f
}

fn points_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..4).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(0.0..1.0f64, d), 1..40))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn extension_matches_full_and_reference(
        points in points_strategy(),
        rho in 0.1..2.0f64,
        noise in 1e-6..1e-2f64,
    ) {
        let params = KernelParams::new(1.0, rho, noise).unwrap();
        let k = kernel::build_covariance(&points, &params).unwrap();
        let full = cholesky_full(&k).unwrap();
        let grown = grow(&points, &params);
        prop_assert!(grown.max_abs_diff(&full).unwrap() <= 1e-8);
        let reference = right_looking(&k);
        for (i, row) in reference.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                prop_assert!((full.get(i, j) - v).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn solve_inverts_covariance(points in points_strategy()) {
        let params = KernelParams::new(1.0, 0.5, 1e-3).unwrap();
        let k = kernel::build_covariance(&points, &params).unwrap();
        let f = cholesky_full(&k).unwrap();
        let b: Vec<f64> = (0..points.len()).map(|i| (i as f64).cos()).collect();
        let x = f.solve(&b).unwrap();
        let back = k.mul_vec(&x);
        for (u, v) in back.iter().zip(&b) {
            prop_assert!((u - v).abs() <= 1e-7 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn multi_column_solve_matches_single(points in points_strategy(), m in 1usize..11) {
        let params = KernelParams::default();
        let f = grow(&points, &params);
        let n = points.len();
        let rhs: Vec<f64> = (0..n * m).map(|i| ((i * 7 + 3) as f64).sin()).collect();
        let mut many = rhs.clone();
        f.forward_solve_columns(&mut many, m).unwrap();
        for c in 0..m {
            let single = f.forward_solve(&rhs[c * n..(c + 1) * n]).unwrap();
            for (a, b) in single.iter().zip(&many[c * n..(c + 1) * n]) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
            }
        }
    }
}

#[test]
fn failed_extension_leaves_factor_untouched() {
    let mut f = cholesky_full(&SquareMatrix::from_rows(&[vec![1.0]])).unwrap();
    let before = f.clone();
    let err = f.extend(&[2.0], 1.0).unwrap_err();
    assert!(matches!(err, LinalgError::NotPositiveDefinite { row: 1, .. }));
    assert_eq!(f, before);
}

#[test]
fn asymmetric_input_rejected() {
    let k = SquareMatrix::from_rows(&[vec![2.0, 1.0], vec![0.5, 2.0]]);
    assert!(matches!(
        cholesky_full(&k),
        Err(LinalgError::AsymmetricInput { .. })
    ));
}

#[test]
fn dimension_mismatch_on_extend() {
    let mut f = CholeskyFactor::empty();
    f.extend(&[], 1.0).unwrap();
    assert!(matches!(
        f.extend(&[0.1, 0.2], 1.0),
        Err(LinalgError::DimensionMismatch { .. })
    ));
}

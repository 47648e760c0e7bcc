//! Dense lower-triangular Cholesky factors that grow one row at a time.
//!
//! The factor is stored packed and row-major: row `i` occupies
//! `data[i(i+1)/2 .. (i+1)(i+2)/2]`. Appending a sample appends exactly one
//! contiguous row, so the rows of an existing factor are never moved or
//! rewritten (beyond amortized `Vec` growth).
//!
//! [`cholesky_full`] is the Θ(n³) row-by-row factorization and
//! [`CholeskyFactor::extend`] the Θ(n²) bordering step: solve `L q = p` by
//! forward substitution, then `d = sqrt(c - qᵀq)`.

use thiserror::Error;

/// Relative pivot floor used to decide that a matrix is numerically not SPD.
pub const SPD_RELATIVE_FLOOR: f64 = 1e-12;

/// Relative tolerance for the symmetry check in [`cholesky_full`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite: pivot {pivot:e} at row {row}")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("matrix is not symmetric at ({row}, {col})")]
    AsymmetricInput { row: usize, col: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Pivot floor `ε_spd = 1e-12 · max(1, c)` for a diagonal entry `c`.
#[inline]
pub fn spd_floor(c: f64) -> f64 {
    SPD_RELATIVE_FLOOR * c.abs().max(1.0)
}

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds a matrix from rows. Panics if the rows are not all of length `rows.len()`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "SquareMatrix::from_rows needs a square input");
            data.extend_from_slice(row);
        }
        Self { n, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Lower-triangular factor `L` with strictly positive diagonal.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CholeskyFactor {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

impl CholeskyFactor {
    /// The 0×0 factor, the starting point for growing a factor by extension.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Empty factor with room for `n` rows without reallocating.
    pub fn with_capacity(n: usize) -> Self {
        Self {
            n: 0,
            data: Vec::with_capacity(row_start(n)),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Row `i` up to and including the diagonal.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let s = row_start(i);
        &self.data[s..s + i + 1]
    }

    #[inline]
    pub fn diag(&self, i: usize) -> f64 {
        self.data[row_start(i) + i]
    }

    /// Entry `(i, j)`; zero above the diagonal.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[row_start(i) + j]
        }
    }

    /// Appends the row `(qᵀ, d)` that extends this factor of `K` to the
    /// factor of `[[K, p], [pᵀ, c]]`.
    ///
    /// On failure the factor is left untouched.
    pub fn extend(&mut self, p: &[f64], c: f64) -> Result<(), LinalgError> {
        check_len(self.n, p.len())?;
        let n = self.n;
        self.data.extend_from_slice(p);
        let start = row_start(n);
        let (prev, new_row) = self.data.split_at_mut(start);
        forward_substitute(prev, new_row);
        let pivot = c - dot(new_row, new_row);
        if !(pivot > spd_floor(c)) {
            self.data.truncate(start);
            return Err(LinalgError::NotPositiveDefinite { row: n, pivot });
        }
        self.data.push(pivot.sqrt());
        self.n += 1;
        Ok(())
    }

    /// Drops trailing rows so that the factor has dimension `n`.
    ///
    /// The leading block of a Cholesky factor is the factor of the leading
    /// block of the matrix, so the result is still a valid factor.
    pub fn truncate(&mut self, n: usize) {
        if n < self.n {
            self.data.truncate(row_start(n));
            self.n = n;
        }
    }

    /// Solves `L x = b`.
    pub fn forward_solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut x = b.to_vec();
        self.forward_solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn forward_solve_in_place(&self, x: &mut [f64]) -> Result<(), LinalgError> {
        check_len(self.n, x.len())?;
        for i in 0..self.n {
            let row = self.row(i);
            let s = x[i] - dot(&row[..i], &x[..i]);
            x[i] = s / row[i];
        }
        Ok(())
    }

    /// Solves `L X = B` for `m` right-hand sides stored back to back in
    /// `rhs` (column `r` is `rhs[r*n .. (r+1)*n]`).
    ///
    /// Each row of `L` is read once for all columns.
    pub fn forward_solve_columns(&self, rhs: &mut [f64], m: usize) -> Result<(), LinalgError> {
        let n = self.n;
        check_len(n * m, rhs.len())?;
        // Columns are interleaved four at a time so each factor entry is
        // loaded once per block and the sums form independent chains.
        let mut z = vec![0.0; 4 * n];
        for first in (0..m).step_by(4) {
            let w = (m - first).min(4);
            z.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..w {
                let col = &rhs[(first + r) * n..(first + r + 1) * n];
                for (j, v) in col.iter().enumerate() {
                    z[4 * j + r] = *v;
                }
            }
            for i in 0..n {
                let row = self.row(i);
                let (off, diag) = (&row[..i], row[i]);
                let (sums, tail) = block_dot4(off, &z[..4 * i]);
                for r in 0..4 {
                    z[4 * i + r] = (z[4 * i + r] - (sums[r] + tail[r])) / diag;
                }
            }
            for r in 0..w {
                let col = &mut rhs[(first + r) * n..(first + r + 1) * n];
                for (j, v) in col.iter_mut().enumerate() {
                    *v = z[4 * j + r];
                }
            }
        }
        Ok(())
    }

    /// Solves `Lᵀ x = b`.
    pub fn backward_solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut x = b.to_vec();
        self.backward_solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn backward_solve_in_place(&self, x: &mut [f64]) -> Result<(), LinalgError> {
        check_len(self.n, x.len())?;
        // Column-oriented: once x_i is final, subtract x_i · L[i, ..i] from
        // the leading entries. Row i of L is column i of Lᵀ.
        for i in (0..self.n).rev() {
            let row = self.row(i);
            let xi = x[i] / row[i];
            x[i] = xi;
            for (xj, lij) in x[..i].iter_mut().zip(&row[..i]) {
                *xj -= lij * xi;
            }
        }
        Ok(())
    }

    /// Solves `L Lᵀ x = b`, i.e. `x = K⁻¹ b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut x = b.to_vec();
        self.forward_solve_in_place(&mut x)?;
        self.backward_solve_in_place(&mut x)?;
        Ok(x)
    }

    /// `Σ log L_ii`, half the log-determinant of `K`.
    pub fn sum_log_diag(&self) -> f64 {
        (0..self.n).map(|i| self.diag(i).ln()).sum()
    }

    /// `L · Lᵀ` as a dense matrix.
    pub fn reconstruct(&self) -> SquareMatrix {
        let n = self.n;
        let mut k = SquareMatrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let v = dot(&self.row(i)[..=j], &self.row(j)[..=j]);
                k.set(i, j, v);
                k.set(j, i, v);
            }
        }
        k
    }

    /// Dense `n×n` copy of `L` with explicit zeros above the diagonal.
    pub fn to_dense(&self) -> SquareMatrix {
        let n = self.n;
        let mut l = SquareMatrix::zeros(n);
        for i in 0..n {
            for (j, v) in self.row(i).iter().enumerate() {
                l.set(i, j, *v);
            }
        }
        l
    }

    /// Largest absolute elementwise difference to another factor of the same size.
    pub fn max_abs_diff(&self, other: &CholeskyFactor) -> Option<f64> {
        (self.n == other.n).then(|| {
            self.data
                .iter()
                .zip(&other.data)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        })
    }
}

/// Full Θ(n³) factorization of a symmetric positive-definite matrix.
pub fn cholesky_full(k: &SquareMatrix) -> Result<CholeskyFactor, LinalgError> {
    let n = k.dim();
    let tol = SYMMETRY_TOLERANCE * k.max_abs().max(1.0);
    for i in 0..n {
        for j in 0..i {
            if !((k.get(i, j) - k.get(j, i)).abs() <= tol) {
                return Err(LinalgError::AsymmetricInput { row: i, col: j });
            }
        }
    }

    let mut data = Vec::with_capacity(row_start(n));
    for i in 0..n {
        let start = data.len();
        data.extend_from_slice(&k.row(i)[..i]);
        let (prev, row) = data.split_at_mut(start);
        for j in 0..i {
            let lj = &prev[row_start(j)..row_start(j) + j + 1];
            let s = row[j] - dot(&row[..j], &lj[..j]);
            row[j] = s / lj[j];
        }
        let c = k.get(i, i);
        let pivot = c - dot(row, row);
        if !(pivot > spd_floor(c)) {
            return Err(LinalgError::NotPositiveDefinite { row: i, pivot });
        }
        data.push(pivot.sqrt());
    }
    Ok(CholeskyFactor { n, data })
}

/// Bordering step on an owned factor; see [`CholeskyFactor::extend`].
pub fn extend_factor(
    mut factor: CholeskyFactor,
    p: &[f64],
    c: f64,
) -> Result<CholeskyFactor, LinalgError> {
    factor.extend(p, c)?;
    Ok(factor)
}

/// In-place forward substitution of `x` against the packed rows in `packed`.
/// `packed` holds exactly `x.len()` rows.
#[inline]
fn forward_substitute(packed: &[f64], x: &mut [f64]) {
    for i in 0..x.len() {
        let s = row_start(i);
        let row = &packed[s..s + i + 1];
        let v = x[i] - dot(&row[..i], &x[..i]);
        x[i] = v / row[i];
    }
}

#[inline]
fn check_len(expected: usize, found: usize) -> Result<(), LinalgError> {
    if expected == found {
        Ok(())
    } else {
        Err(LinalgError::DimensionMismatch { expected, found })
    }
}

/// `l · z[.., r]` for the four interleaved columns of `z`, split into the
/// unrolled body and the remainder.
#[inline]
fn block_dot4(l: &[f64], z: &[f64]) -> ([f64; 4], [f64; 4]) {
    let (mut a0, mut a1, mut a2, mut a3) = ([0.0_f64; 4], [0.0_f64; 4], [0.0_f64; 4], [0.0_f64; 4]);
    let (lc, lr) = l.as_chunks::<4>();
    let (z4, _) = z.as_chunks::<4>();
    let (zc, zr) = z4.as_chunks::<4>();
    for (lk, zk) in lc.iter().zip(zc) {
        for r in 0..4 {
            a0[r] += lk[0] * zk[0][r];
            a1[r] += lk[1] * zk[1][r];
            a2[r] += lk[2] * zk[2][r];
            a3[r] += lk[3] * zk[3][r];
        }
    }
    let mut tail = [0.0_f64; 4];
    for (lj, zj) in lr.iter().zip(zr) {
        for r in 0..4 {
            tail[r] += lj * zj[r];
        }
    }
    let mut sums = [0.0_f64; 4];
    for r in 0..4 {
        sums[r] = (a0[r] + a2[r]) + (a1[r] + a3[r]);
    }
    (sums, tail)
}

/// Dot product with sixteen independent accumulators. The summation order
/// is fixed, so results are bit-reproducible.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (ac, ar) = a[..n].as_chunks::<16>();
    let (bc, br) = b[..n].as_chunks::<16>();
    let mut acc = [0.0_f64; 16];
    for (x, y) in ac.iter().zip(bc) {
        for k in 0..16 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ar.iter().zip(br) {
        tail += x * y;
    }
    for w in [8, 4, 2, 1] {
        for k in 0..w {
            acc[k] += acc[k + w];
        }
    }
    acc[0] + tail
}

//! Row-major dense matrices and the small set of dense kernels used by the
//! transform stage and as reference oracles.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pivots with magnitude below this are treated as singular by [`dense_solve`].
pub const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting wrong lengths and non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite value at flat index {pos}"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::from_vec(r, c, rows.concat())
    }

    /// A single column vector.
    pub fn column(values: &[f64]) -> Result<Self> {
        Self::from_vec(values.len(), 1, values.to_vec())
    }

    pub fn random_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(lo..hi)).collect();
        Self { rows, cols, data }
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col_vec(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// L2 norm of every row.
    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.rows).map(|r| l2(self.row(r))).collect()
    }

    /// L2 norm of every column.
    pub fn col_norms(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (acc, v) in sq.iter_mut().zip(self.row(r)) {
                *acc += v * v;
            }
        }
        sq.into_iter().map(f64::sqrt).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        l2(&self.data)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn count_zeros(&self) -> usize {
        self.data.iter().filter(|v| **v == 0.0).count()
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(DenseMatrix::from_raw(self.rows, self.cols, data))
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(DenseMatrix::from_raw(self.rows, self.cols, data))
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        DenseMatrix::from_raw(self.rows, self.cols, self.data.iter().map(|v| v * s).collect())
    }

    /// `self += s * other`
    pub fn axpy(&mut self, s: f64, other: &DenseMatrix) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
        Ok(())
    }

    /// Relative Frobenius distance `‖self − other‖ / ‖other‖` (absolute when `other` is zero).
    pub fn rel_error(&self, reference: &DenseMatrix) -> Result<f64> {
        let diff = self.sub(reference)?.frobenius_norm();
        let denom = reference.frobenius_norm();
        Ok(if denom > 0.0 { diff / denom } else { diff })
    }

    fn check_same_shape(&self, other: &DenseMatrix) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }
}

pub(crate) fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Plain dense product `A·B`, row-parallel with a fixed inner order.
/// Exact zeros of `A` are skipped; they would only add signed zeros.
pub fn dense_matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "matmul {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (n, k, m) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; n * m];
    if m > 0 {
        out.par_chunks_mut(m).enumerate().for_each(|(r, out_row)| {
            let a_row = &a.data[r * k..(r + 1) * k];
            for (j, &av) in a_row.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let b_row = &b.data[j * m..(j + 1) * m];
                for (o, bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        });
    }
    Ok(DenseMatrix::from_raw(n, m, out))
}

/// Solves `A·X = B` by LU factorization with partial pivoting.
///
/// A pivot whose magnitude falls below [`PIVOT_EPS`] is reported as
/// [`Error::Singular`].
pub fn dense_solve(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::DimensionMismatch(format!("solve needs square A, got {:?}", a.shape())));
    }
    if b.rows != n {
        return Err(Error::DimensionMismatch(format!(
            "solve rhs has {} rows, A is {n}x{n}",
            b.rows
        )));
    }
    let m = b.cols;
    let mut lu = a.data.clone();
    let mut x = b.data.clone();

    for col in 0..n {
        let (piv_row, piv_abs) = (col..n)
            .map(|r| (r, lu[r * n + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_abs < PIVOT_EPS {
            return Err(Error::Singular {
                column: col,
                pivot: piv_abs,
            });
        }
        if piv_row != col {
            for c in 0..n {
                lu.swap(col * n + c, piv_row * n + c);
            }
            for c in 0..m {
                x.swap(col * m + c, piv_row * m + c);
            }
        }
        let pivot = lu[col * n + col];
        for r in col + 1..n {
            let factor = lu[r * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            lu[r * n + col] = factor;
            for c in col + 1..n {
                lu[r * n + c] -= factor * lu[col * n + c];
            }
            for c in 0..m {
                x[r * m + c] -= factor * x[col * m + c];
            }
        }
    }

    // back substitution
    for col in (0..n).rev() {
        let pivot = lu[col * n + col];
        for c in 0..m {
            let mut s = x[col * m + c];
            for k in col + 1..n {
                s -= lu[col * n + k] * x[k * m + c];
            }
            x[col * m + c] = s / pivot;
        }
    }
    Ok(DenseMatrix::from_raw(n, m, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_matmul_returns_input() {
        let b = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let out = dense_matmul(&DenseMatrix::identity(2), &b).unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn matmul_dimension_mismatch() {
        let a = DenseMatrix::zeros(2, 3);
        let b = DenseMatrix::zeros(2, 3);
        assert!(matches!(dense_matmul(&a, &b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn solve_two_node_clique_smoothing_system() {
        // I + L for the 2-clique with L = [[.5,-.5],[-.5,.5]]
        let a = DenseMatrix::from_rows(&[vec![1.5, -0.5], vec![-0.5, 1.5]]).unwrap();
        let x = dense_solve(&a, &DenseMatrix::column(&[1.0, 0.0]).unwrap()).unwrap();
        approx::assert_abs_diff_eq!(x.get(0, 0), 0.75, epsilon = 1e-15);
        approx::assert_abs_diff_eq!(x.get(1, 0), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn solve_random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = DenseMatrix::random_uniform(6, 6, -1.0, 1.0, &mut rng);
        let mut a = dense_matmul(&g.transpose(), &g).unwrap();
        for i in 0..6 {
            a.set(i, i, a.get(i, i) + 1.0);
        }
        let b = DenseMatrix::random_uniform(6, 2, -1.0, 1.0, &mut rng);
        let x = dense_solve(&a, &b).unwrap();
        let resid = dense_matmul(&a, &x).unwrap().sub(&b).unwrap().max_abs();
        assert!(resid <= 1e-9 * b.max_abs(), "residual {resid}");
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let err = dense_solve(&a, &DenseMatrix::column(&[1.0, 1.0]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Singular { column: 1, .. }));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn from_vec_rejects_nan() {
        assert!(DenseMatrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(DenseMatrix::from_vec(1, 2, vec![1.0]).is_err());
    }
}

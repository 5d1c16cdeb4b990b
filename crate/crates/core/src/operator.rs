//! Dense square matrices standing in for bounded operators on a
//! finite-dimensional state space.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// A bounded linear operator realized as a dense `n x n` real matrix.
///
/// Construction rejects non-square, empty and non-finite input, so every
/// value of this type has a finite operator norm.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundedOperator {
    matrix: DMatrix<f64>,
}

impl BoundedOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.nrows() != matrix.ncols() {
            return Err(invalid(
                "operator",
                format!(
                    "expected a non-empty square matrix, got {}x{}",
                    matrix.nrows(),
                    matrix.ncols()
                ),
            ));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(invalid("operator", "entries must be finite"));
        }
        Ok(Self { matrix })
    }

    /// Builds an operator from row-major rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("operator", "rows must all have length equal to the row count"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
        }
    }

    pub fn diagonal(entries: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(entries)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Spectral norm (largest singular value).
    pub fn norm(&self) -> f64 {
        spectral_norm(&self.matrix)
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            matrix: &self.matrix * s,
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x.len(), "operator applied to vector")?;
        Ok(&self.matrix * x)
    }

    pub fn powi(&self, k: usize) -> Self {
        let mut out = DMatrix::identity(self.dim(), self.dim());
        for _ in 0..k {
            out = &out * &self.matrix;
        }
        Self { matrix: out }
    }

    pub(crate) fn check_dim(&self, found: usize, context: &'static str) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found,
                context,
            });
        }
        Ok(())
    }

    pub(crate) fn check_same_dim(&self, other: &Self, context: &'static str) -> Result<()> {
        self.check_dim(other.dim(), context)
    }
}

impl From<BoundedOperator> for DMatrix<f64> {
    fn from(op: BoundedOperator) -> Self {
        op.matrix
    }
}

impl Add for &BoundedOperator {
    type Output = BoundedOperator;
    fn add(self, rhs: Self) -> BoundedOperator {
        BoundedOperator {
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl Sub for &BoundedOperator {
    type Output = BoundedOperator;
    fn sub(self, rhs: Self) -> BoundedOperator {
        BoundedOperator {
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

impl Mul for &BoundedOperator {
    type Output = BoundedOperator;
    fn mul(self, rhs: Self) -> BoundedOperator {
        BoundedOperator {
            matrix: &self.matrix * &rhs.matrix,
        }
    }
}

impl Neg for BoundedOperator {
    type Output = BoundedOperator;
    fn neg(self) -> BoundedOperator {
        BoundedOperator { matrix: -self.matrix }
    }
}

/// Largest singular value of a (not necessarily square) matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.ncols() == 1 {
        return m.norm();
    }
    m.singular_values().max()
}

/// `out += w * a * b` for column-major slices, `a` is `n x n`, `b` is `n x m`.
#[inline]
pub(crate) fn mul_acc(out: &mut [f64], w: f64, a: &[f64], b: &[f64], n: usize) {
    let m = b.len() / n;
    for c in 0..m {
        let bc = &b[c * n..(c + 1) * n];
        let oc = &mut out[c * n..(c + 1) * n];
        for (k, &bk) in bc.iter().enumerate() {
            let s = w * bk;
            if s == 0.0 {
                continue;
            }
            let ak = &a[k * n..(k + 1) * n];
            for (o, &av) in oc.iter_mut().zip(ak) {
                *o += av * s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_square_and_non_finite() {
        assert!(BoundedOperator::new(DMatrix::zeros(2, 3)).is_err());
        assert!(BoundedOperator::new(DMatrix::zeros(0, 0)).is_err());
        assert!(BoundedOperator::from_rows(&[vec![1.0, f64::NAN], vec![0.0, 1.0]]).is_err());
        assert!(BoundedOperator::from_rows(&[vec![1.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn spectral_norm_of_known_matrices() {
        let a = BoundedOperator::from_rows(&[vec![0.0, 1.0], vec![-2.0, 0.0]]).unwrap();
        assert!((a.norm() - 2.0).abs() < 1e-14);
        let d = BoundedOperator::diagonal(&[-3.0, 0.5]).unwrap();
        assert!((d.norm() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn mul_acc_matches_nalgebra() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.5, -1.0, 0.0, 3.0, 2.0, 1.0, -2.0]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 2.0, 0.5, 1.5]);
        let mut out = DMatrix::<f64>::zeros(3, 2);
        mul_acc(out.as_mut_slice(), 0.5, a.as_slice(), b.as_slice(), 3);
        let expected = (&a * &b) * 0.5;
        assert!((out - expected).abs().max() < 1e-15);
    }
}

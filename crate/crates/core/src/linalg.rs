//! Small dense linear algebra for task construction and the conjugate
//! posterior oracle.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, invalid, Error, Result};
use crate::rng::RandomSource;

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    /// Row-major entries.
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
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return invalid(format!("matrix {rows}x{cols} needs {} entries, got {}", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return invalid("ragged rows");
        }
        Self::from_row_major(rows.len(), cols, rows.concat())
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Entries drawn i.i.d. from N(0, scale²).
    pub fn random_normal(rows: usize, cols: usize, scale: f64, rng: &mut RandomSource) -> Self {
        let data = (0..rows * cols).map(|_| scale * rng.normal()).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    fn to_na(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_na(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out.set(r, c, m[(r, c)]);
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_na(&self.to_na().transpose())
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        ensure_dim("matmul inner dimension", self.cols, other.rows)?;
        Ok(Self::from_na(&(self.to_na() * other.to_na())))
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        ensure_dim("matvec", self.cols, v.len())?;
        Ok(self
            .data
            .chunks_exact(self.cols.max(1))
            .take(self.rows)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        ensure_dim("add rows", self.rows, other.rows)?;
        ensure_dim("add cols", self.cols, other.cols)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { data, ..*self })
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        Self {
            data: self.data.iter().map(|v| v * s).collect(),
            ..*self
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.rows != self.cols {
            return false;
        }
        let scale = self.data.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        (0..self.rows).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol * scale))
    }

    /// Lower-triangular Cholesky factor. Refuses non-symmetric input and
    /// reports non-positive-definite input as an error.
    pub fn cholesky(&self) -> Result<DenseMatrix> {
        if !self.is_symmetric(SYMMETRY_TOL) {
            return Err(Error::Linalg("cholesky of a non-symmetric matrix".into()));
        }
        let chol = self
            .to_na()
            .cholesky()
            .ok_or_else(|| Error::Linalg("matrix is not positive definite".into()))?;
        Ok(Self::from_na(&chol.l()))
    }

    /// Inverse of a symmetric positive definite matrix, symmetrized.
    pub fn spd_inverse(&self) -> Result<DenseMatrix> {
        if !self.is_symmetric(SYMMETRY_TOL) {
            return Err(Error::Linalg("spd_inverse of a non-symmetric matrix".into()));
        }
        let chol = self
            .to_na()
            .cholesky()
            .ok_or_else(|| Error::Linalg("matrix is not positive definite".into()))?;
        let inv = chol.inverse();
        Ok(Self::from_na(&((&inv + inv.transpose()) * 0.5)))
    }

    /// General inverse (LU); errors on singular input.
    pub fn inverse(&self) -> Result<DenseMatrix> {
        if self.rows != self.cols {
            return invalid("inverse of a non-square matrix");
        }
        self.to_na()
            .try_inverse()
            .map(|m| Self::from_na(&m))
            .ok_or_else(|| Error::Linalg("matrix is singular".into()))
    }
}

/// `mean + chol_cov · z` with `z` standard normal.
pub fn gaussian_sample(rng: &mut RandomSource, mean: &[f64], chol_cov: &DenseMatrix) -> Result<Vec<f64>> {
    ensure_dim("gaussian_sample cholesky rows", mean.len(), chol_cov.rows())?;
    ensure_dim("gaussian_sample cholesky cols", mean.len(), chol_cov.cols())?;
    let z = rng.normal_vec(mean.len());
    let lz = chol_cov.matvec(&z)?;
    Ok(mean.iter().zip(lz).map(|(m, v)| m + v).collect())
}

/// `L Lᵀ + δ I` with `L` entrywise N(0, scale²): a well-conditioned random
/// SPD matrix.
pub fn random_spd(n: usize, scale: f64, jitter: f64, rng: &mut RandomSource) -> DenseMatrix {
    let l = DenseMatrix::random_normal(n, n, scale, rng);
    let llt = l.matmul(&l.transpose()).expect("square shapes");
    let mut out = llt.add(&DenseMatrix::identity(n).scale(jitter)).expect("same shape");
    // exact symmetry
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (out.get(i, j) + out.get(j, i));
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_cov_returns_raw_normals() {
        let mut a = RandomSource::new(5);
        let mut b = RandomSource::new(5);
        let s = gaussian_sample(&mut a, &[0.0; 3], &DenseMatrix::identity(3)).unwrap();
        let z = b.normal_vec(3);
        assert_eq!(s, z);
    }

    #[test]
    fn zero_cov_returns_mean() {
        let mut rng = RandomSource::new(5);
        let mean = [1.5, -2.0, 0.25];
        let s = gaussian_sample(&mut rng, &mean, &DenseMatrix::zeros(3, 3)).unwrap();
        assert_eq!(s, mean.to_vec());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut rng = RandomSource::new(5);
        let err = gaussian_sample(&mut rng, &[0.0; 2], &DenseMatrix::identity(3));
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn monte_carlo_covariance_matches() {
        let mut rng = RandomSource::new(17);
        let sigma = random_spd(4, 0.7, 1e-3, &mut rng);
        let chol = sigma.cholesky().unwrap();
        let mean = [1.0, -1.0, 0.5, 2.0];
        let n = 100_000;
        let mut acc = DenseMatrix::zeros(4, 4);
        let mut mu = [0.0; 4];
        let draws: Vec<Vec<f64>> = (0..n).map(|_| gaussian_sample(&mut rng, &mean, &chol).unwrap()).collect();
        for d in &draws {
            for i in 0..4 {
                mu[i] += d[i] / n as f64;
            }
        }
        for d in &draws {
            for i in 0..4 {
                for j in 0..4 {
                    let v = acc.get(i, j) + (d[i] - mu[i]) * (d[j] - mu[j]) / n as f64;
                    acc.set(i, j, v);
                }
            }
        }
        let rel = acc.add(&sigma.scale(-1.0)).unwrap().frobenius_norm() / sigma.frobenius_norm();
        assert!(rel < 0.05, "relative frobenius error {rel}");
    }

    #[test]
    fn cholesky_reconstructs() {
        let mut rng = RandomSource::new(2);
        for n in [1, 3, 10] {
            let s = random_spd(n, 0.3, 1e-3, &mut rng);
            let l = s.cholesky().unwrap();
            let back = l.matmul(&l.transpose()).unwrap();
            assert!(back.add(&s.scale(-1.0)).unwrap().frobenius_norm() < 1e-10);
        }
    }

    #[test]
    fn cholesky_rejects_asymmetric_and_indefinite() {
        let asym = DenseMatrix::from_row_major(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(matches!(asym.cholesky(), Err(Error::Linalg(_))));
        let indef = DenseMatrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(indef.cholesky(), Err(Error::Linalg(_))));
    }
}

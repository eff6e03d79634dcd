use serde::{Deserialize, Serialize};

use super::RngState;
use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows)
                .all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = Σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CholeskyFactor {
    lower: Matrix,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    /// `L·Lᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        self.lower.matmul(&self.lower.transpose())
    }

    /// Wraps an explicit lower-triangular matrix. Rejects non-square input,
    /// non-zero upper entries and non-positive diagonals.
    pub fn from_lower(lower: Matrix) -> Result<Self> {
        if lower.rows() != lower.cols() {
            return Err(Error::ShapeMismatch("cholesky factor must be square".into()));
        }
        for i in 0..lower.rows() {
            if lower[(i, i)] <= 0.0 {
                return Err(Error::NotPositiveDefinite {
                    row: i,
                    pivot: lower[(i, i)],
                });
            }
            for j in i + 1..lower.cols() {
                if lower[(i, j)] != 0.0 {
                    return Err(Error::ShapeMismatch("factor is not lower triangular".into()));
                }
            }
        }
        Ok(CholeskyFactor { lower })
    }
}

/// Cholesky-Banachiewicz factorisation.
pub fn cholesky(sigma: &Matrix) -> Result<CholeskyFactor> {
    let n = sigma.rows();
    if n != sigma.cols() {
        return Err(Error::ShapeMismatch(format!(
            "cholesky of a {}x{} matrix",
            n,
            sigma.cols()
        )));
    }
    if !sigma.is_symmetric(1e-12) {
        return Err(Error::ShapeMismatch("cholesky input is not symmetric".into()));
    }
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = sigma[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(s > 0.0) {
                    return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(CholeskyFactor { lower: l })
}

/// Cholesky with the diagonal jitter retry policy: on failure add
/// `1e-8·I` and retry, at most three times.
pub fn cholesky_with_jitter(sigma: &Matrix) -> Result<CholeskyFactor> {
    let mut err = match cholesky(sigma) {
        Ok(f) => return Ok(f),
        Err(e @ Error::NotPositiveDefinite { .. }) => e,
        Err(e) => return Err(e),
    };
    let mut m = sigma.clone();
    for attempt in 1..=3 {
        for i in 0..m.rows() {
            m[(i, i)] += 1e-8;
        }
        match cholesky(&m) {
            Ok(f) => {
                log::debug!("cholesky succeeded after {attempt} jitter step(s)");
                return Ok(f);
            }
            Err(e) => err = e,
        }
    }
    Err(err)
}

/// `n` draws from `N(0, L·Lᵀ)`, one per row.
pub fn sample_mvn(factor: &CholeskyFactor, n: usize, rng: &mut RngState) -> Matrix {
    let d = factor.dim();
    let l = factor.lower();
    let mut out = Matrix::zeros(n, d);
    let mut z = vec![0.0; d];
    for r in 0..n {
        for zi in z.iter_mut() {
            *zi = rng.normal();
        }
        for i in 0..d {
            let mut s = 0.0;
            for k in 0..=i {
                s += l[(i, k)] * z[k];
            }
            out[(r, i)] = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Matrix, b: &Matrix, tol: f64) -> bool {
        a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_factor_is_identity() {
        let f = cholesky(&Matrix::identity(3)).unwrap();
        assert_eq!(f.lower(), &Matrix::identity(3));
    }

    #[test]
    fn two_by_two_factor() {
        let sigma = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 3.0]]);
        let f = cholesky(&sigma).unwrap();
        let expected = Matrix::from_rows(&[vec![2.0, 0.0], vec![1.0, 2f64.sqrt()]]);
        assert!(close(f.lower(), &expected, 1e-15));
        // multiply back
        assert!(close(&f.reconstruct(), &sigma, 1e-12));
    }

    #[test]
    fn one_by_one_factor() {
        let f = cholesky(&Matrix::from_rows(&[vec![9.0]])).unwrap();
        assert_eq!(f.lower()[(0, 0)], 3.0);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let sigma = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(
            cholesky(&sigma),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
        assert!(cholesky_with_jitter(&sigma).is_err());
    }

    #[test]
    fn jitter_rescues_singular_correlation() {
        let sigma = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(cholesky(&sigma).is_err());
        let f = cholesky_with_jitter(&sigma).unwrap();
        assert!(f.lower()[(1, 1)] > 0.0);
    }

    #[test]
    fn mvn_identity_is_uncorrelated() {
        let f = cholesky(&Matrix::identity(2)).unwrap();
        let x = sample_mvn(&f, 10_000, &mut RngState::new(11));
        let n = x.rows() as f64;
        let (m0, m1) = (0..x.rows()).fold((0.0, 0.0), |a, i| (a.0 + x[(i, 0)], a.1 + x[(i, 1)]));
        let (m0, m1) = (m0 / n, m1 / n);
        let cov = (0..x.rows())
            .map(|i| (x[(i, 0)] - m0) * (x[(i, 1)] - m1))
            .sum::<f64>()
            / (n - 1.0);
        assert!(cov.abs() < 0.05, "cov {cov}");
    }

    #[test]
    fn mvn_is_deterministic() {
        let f = cholesky(&Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]])).unwrap();
        let a = sample_mvn(&f, 50, &mut RngState::new(3));
        let b = sample_mvn(&f, 50, &mut RngState::new(3));
        assert_eq!(a, b);
    }

    #[test]
    fn near_zero_variance_direction_is_nearly_constant() {
        let l = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1e-8]]);
        let f = CholeskyFactor::from_lower(l).unwrap();
        let x = sample_mvn(&f, 1000, &mut RngState::new(9));
        for i in 0..x.rows() {
            assert!(x[(i, 1)].abs() < 1e-6);
        }
    }
}

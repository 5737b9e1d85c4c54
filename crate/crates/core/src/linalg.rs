//! Dense row-major matrices and Cholesky factorizations.
//!
//! Only what the GP and LCM code needs: symmetric positive definite solves,
//! log-determinants, explicit inverses for gradient contractions, and the
//! bordered-matrix append used when a task is added to a fitted model.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Matrix {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = out.row_mut(i);
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d = *d + a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    pub fn add_diagonal(&mut self, v: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] = self[(i, i)] + v;
        }
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        s = s + x * y;
    }
    s
}

/// In-place lower Cholesky of the leading block; returns false if not PD.
fn cholesky_in_place<T: Scalar>(a: &mut Matrix<T>) -> bool {
    let n = a.rows;
    for i in 0..n {
        for j in 0..=i {
            let (ri, rj) = (i * n, j * n);
            let mut s = a.data[ri + j];
            for k in 0..j {
                s = s - a.data[ri + k] * a.data[rj + k];
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return false;
                }
                a.data[ri + i] = s.sqrt();
            } else {
                a.data[ri + j] = s / a.data[rj + j];
            }
        }
        for j in i + 1..n {
            a.data[i * n + j] = T::zero();
        }
    }
    true
}

/// Diagonal jitter schedule: starts at the scalar's floor times the mean
/// diagonal and grows tenfold up to `1e-4` times the mean diagonal.
#[derive(Clone, Copy, Debug)]
pub struct JitterPolicy<T> {
    pub start: T,
    pub max: T,
}

impl<T: Scalar> Default for JitterPolicy<T> {
    fn default() -> Self {
        JitterPolicy {
            start: T::jitter_floor(),
            max: c(1e-4),
        }
    }
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cholesky<T> {
    l: Matrix<T>,
    /// Absolute jitter added on the diagonal per row.
    jitter: Vec<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factor exactly, failing when `a` is not numerically positive definite.
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        Self::factor_with(a, T::zero())
    }

    /// Factor `a + jitter·I` without escalation.
    pub fn factor_with(a: &Matrix<T>, jitter: T) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::DimensionMismatch {
                expected: a.rows,
                got: a.cols,
            });
        }
        let mut l = a.clone();
        l.add_diagonal(jitter);
        if cholesky_in_place(&mut l) {
            Ok(Cholesky {
                l,
                jitter: vec![jitter; a.rows],
            })
        } else {
            Err(Error::numerical(format!(
                "matrix of order {} not positive definite (jitter {})",
                a.rows, jitter
            )))
        }
    }

    /// Factor with escalating jitter.
    pub fn factor_jittered(a: &Matrix<T>, policy: JitterPolicy<T>) -> Result<Self> {
        let n = a.rows;
        let scale = if n == 0 {
            T::one()
        } else {
            let s = a.trace() / c(n as f64);
            if s > T::zero() && s.is_finite() {
                s
            } else {
                T::one()
            }
        };
        let mut rel = policy.start;
        loop {
            match Self::factor_with(a, rel * scale) {
                Ok(f) => return Ok(f),
                Err(_) if rel * c(10.0) <= policy.max * c(1.000001) => rel = rel * c(10.0),
                Err(e) => return Err(e),
            }
        }
    }

    /// Rebuild from a stored factor.
    pub fn from_parts(l: Matrix<T>, jitter: Vec<T>) -> Self {
        Cholesky { l, jitter }
    }

    pub fn dim(&self) -> usize {
        self.l.rows
    }

    pub fn l(&self) -> &Matrix<T> {
        &self.l
    }

    pub fn jitter(&self) -> &[T] {
        &self.jitter
    }

    /// Solve `L x = b`.
    pub fn solve_lower(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let s = dot(&row[..i], &x[..i]);
            x[i] = (x[i] - s) / row[i];
        }
        x
    }

    /// Solve `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            x[i] = x[i] / self.l[(i, i)];
            let xi = x[i];
            let row = self.l.row(i);
            for k in 0..i {
                x[k] = x[k] - row[k] * xi;
            }
        }
        x
    }

    /// Solve `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// `L⁻¹ B` for a matrix right-hand side.
    pub fn solve_lower_matrix(&self, b: &Matrix<T>) -> Matrix<T> {
        let n = self.dim();
        assert_eq!(b.rows, n);
        let mut x = b.clone();
        let m = b.cols;
        for i in 0..n {
            let lii = self.l[(i, i)];
            for k in 0..i {
                let lik = self.l[(i, k)];
                if lik == T::zero() {
                    continue;
                }
                for j in 0..m {
                    let v = x.data[k * m + j];
                    x.data[i * m + j] = x.data[i * m + j] - lik * v;
                }
            }
            for j in 0..m {
                x.data[i * m + j] = x.data[i * m + j] / lii;
            }
        }
        x
    }

    pub fn log_det(&self) -> T {
        let two = c::<T>(2.0);
        (0..self.dim()).map(|i| two * self.l[(i, i)].ln()).sum()
    }

    /// Explicit inverse of `L Lᵀ`.
    pub fn inverse(&self) -> Matrix<T> {
        let n = self.dim();
        // L⁻¹ column by column, then (L⁻¹)ᵀ L⁻¹.
        let linv = self.solve_lower_matrix(&Matrix::identity(n));
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = T::zero();
                for k in i..n {
                    s = s + linv[(k, i)] * linv[(k, j)];
                }
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    /// Reconstruct `L Lᵀ` (including any jitter).
    pub fn reconstruct(&self) -> Matrix<T> {
        self.l.matmul(&self.l.transpose())
    }

    /// Factor of the bordered matrix `[[A, B], [Bᵀ, C]]` from the factor of
    /// `A`, with escalating jitter applied to the new block only.
    pub fn append(&self, border: &Matrix<T>, corner: &Matrix<T>, policy: JitterPolicy<T>) -> Result<Self> {
        let n = self.dim();
        let m = corner.rows;
        if border.rows != n || border.cols != m || corner.cols != m {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: border.rows,
            });
        }
        // L21ᵀ = L⁻¹ B
        let l21t = self.solve_lower_matrix(border);
        let mut schur = corner.clone();
        for i in 0..m {
            for j in 0..=i {
                let mut s = T::zero();
                for k in 0..n {
                    s = s + l21t.data[k * m + i] * l21t.data[k * m + j];
                }
                schur[(i, j)] = schur[(i, j)] - s;
                schur[(j, i)] = schur[(i, j)];
            }
        }
        let l22 = Cholesky::factor_jittered(&schur, policy)?;
        let mut l = Matrix::zeros(n + m, n + m);
        for i in 0..n {
            l.row_mut(i)[..n].copy_from_slice(self.l.row(i));
        }
        for i in 0..m {
            for k in 0..n {
                l[(n + i, k)] = l21t[(k, i)];
            }
            for j in 0..=i {
                l[(n + i, n + j)] = l22.l[(i, j)];
            }
        }
        let mut jitter = self.jitter.clone();
        jitter.extend_from_slice(&l22.jitter);
        Ok(Cholesky { l, jitter })
    }
}

/// Factor of a bordered SPD matrix given the factor `l` of its leading block.
pub fn chol_append<T: Scalar>(l: &Cholesky<T>, border: &Matrix<T>, corner: &Matrix<T>) -> Result<Cholesky<T>> {
    l.append(border, corner, JitterPolicy::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize, seed: u64) -> Matrix<f64> {
        let mut rng = crate::rng::RngState::new(seed).rng();
        let a = Matrix::from_fn(n, n, |_, _| crate::rng::standard_normal(&mut rng));
        let mut s = a.matmul(&a.transpose());
        s.add_diagonal(0.5);
        s
    }

    #[test]
    fn factor_reconstructs() {
        let a = spd(7, 3);
        let ch = Cholesky::factor(&a).unwrap();
        assert!(ch.reconstruct().max_abs_diff(&a) < 1e-10);
    }

    #[test]
    fn solve_and_inverse() {
        let a = spd(6, 4);
        let ch = Cholesky::factor(&a).unwrap();
        let b: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let x = ch.solve(&b);
        let back = a.matvec(&x);
        for (u, v) in back.iter().zip(&b) {
            assert!((u - v).abs() < 1e-10);
        }
        let inv = ch.inverse();
        assert!(a.matmul(&inv).max_abs_diff(&Matrix::identity(6)) < 1e-9);
    }

    #[test]
    fn append_hand_example() {
        // [4] bordered by b = 2, d = 5 -> [[2, 0], [1, 2]]
        let l = Cholesky::factor(&Matrix::from_rows(&[vec![4.0]])).unwrap();
        let ext = l
            .append(&Matrix::from_rows(&[vec![2.0]]), &Matrix::from_rows(&[vec![5.0]]), JitterPolicy { start: 0.0, max: 0.0 })
            .unwrap();
        assert_eq!(ext.l().row(0), &[2.0, 0.0]);
        assert_eq!(ext.l().row(1), &[1.0, 2.0]);
    }

    #[test]
    fn append_zero_coupling_is_block_diagonal() {
        let a = spd(3, 5);
        let c = spd(2, 6);
        let la = Cholesky::factor(&a).unwrap();
        let ext = chol_append(&la, &Matrix::zeros(3, 2), &c).unwrap();
        for i in 3..5 {
            for k in 0..3 {
                assert_eq!(ext.l()[(i, k)], 0.0);
            }
        }
    }

    #[test]
    fn not_pd_fails_without_jitter() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(Cholesky::factor(&a), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn jitter_rescues_singular() {
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        let ch = Cholesky::factor_jittered(&a, JitterPolicy::default()).unwrap();
        assert!(ch.jitter()[0] > 0.0 && ch.jitter()[0] <= 1e-4);
    }

    #[test]
    fn f32_factor() {
        let a = Matrix::<f32>::from_rows(&[vec![4.0, 2.0], vec![2.0, 5.0]]);
        let ch = Cholesky::factor(&a).unwrap();
        assert_eq!(ch.l().row(1), &[1.0, 2.0]);
    }
}

//! Small dense square matrices for the slow linear part `J`.
//!
//! The slow space is low dimensional (one component in the reference
//! model), so everything here is plain row-major storage with direct
//! algorithms: scaling-and-squaring exponentials, Van Loan block
//! exponentials for the exact Gaussian increment covariance, Cholesky and
//! Gaussian elimination.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn scalar(value: T) -> Self {
        Self {
            dim: 1,
            data: vec![value],
        }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Build from rows; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::invalid("J", "slow operator must be at least 1x1"));
        }
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::invalid(
                    "J",
                    format!("row of length {} in a {dim}x{dim} matrix", row.len()),
                ));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { dim, data })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] = out.data[i * n + j] + a * other[(k, j)];
                }
            }
        }
        out
    }

    /// `out = self * x`.
    pub fn mul_vec_into(&self, x: &[T], out: &mut [T]) {
        let n = self.dim;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            out[i] = row.iter().zip(x).map(|(&a, &b)| a * b).sum();
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `out += self * x`.
    pub fn mul_vec_add(&self, x: &[T], out: &mut [T]) {
        let n = self.dim;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            out[i] = out[i] + row.iter().zip(x).map(|(&a, &b)| a * b).sum::<T>();
        }
    }

    pub fn norm_inf(&self) -> T {
        self.data
            .chunks(self.dim)
            .map(|r| r.iter().map(|x| x.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    /// Spectral norm by power iteration on `AᵀA`.
    pub fn norm_spectral(&self) -> T {
        let n = self.dim;
        if n == 1 {
            return self.data[0].abs();
        }
        let ata = self.transpose().matmul(self);
        let mut x = vec![T::one(); n];
        let mut est = T::zero();
        for _ in 0..500 {
            let y = ata.mul_vec(&x);
            let ny = crate::scalar::norm2(&y);
            if ny == T::zero() {
                return T::zero();
            }
            x = y.iter().map(|&v| v / ny).collect();
            let prev = est;
            est = ny;
            if (est - prev).abs() <= T::epsilon() * est {
                break;
            }
        }
        est.sqrt()
    }

    /// Matrix exponential by scaling and squaring with a truncated Taylor series.
    pub fn exp(&self) -> Self {
        let n = self.dim;
        let half = T::lit(0.5);
        let norm = self.norm_inf();
        let mut squarings = 0u32;
        let mut s = T::one();
        while norm * s > half {
            s = s * half;
            squarings += 1;
        }
        let a = self.scale(s);
        let mut result = Self::identity(n);
        let mut term = Self::identity(n);
        for k in 1..=30 {
            term = term.matmul(&a).scale(T::one() / T::from_usize_lossy(k));
            result = result.add(&term);
            if term.norm_inf() <= T::epsilon() * result.norm_inf() {
                break;
            }
        }
        for _ in 0..squarings {
            result = result.matmul(&result);
        }
        result
    }

    /// `∫₀ʰ e^{self·s} ds`, read off the upper-right block of the exponential
    /// of `[[self, I], [0, 0]]·h`.
    pub fn exp_integral(&self, h: T) -> Self {
        let n = self.dim;
        let mut block = SquareMatrix::zeros(2 * n);
        for i in 0..n {
            for j in 0..n {
                block[(i, j)] = self[(i, j)] * h;
            }
            block[(i, n + i)] = h;
        }
        let e = block.exp();
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = e[(i, n + j)];
            }
        }
        out
    }

    /// `∫₀ʰ e^{self·s} e^{selfᵀ·s} ds` via Van Loan's block exponential.
    pub fn gramian(&self, h: T) -> Self {
        let n = self.dim;
        let mut block = SquareMatrix::zeros(2 * n);
        for i in 0..n {
            for j in 0..n {
                block[(i, j)] = -self[(i, j)] * h;
                block[(n + i, n + j)] = self[(j, i)] * h;
            }
            block[(i, n + i)] = h;
        }
        let e = block.exp();
        let mut f12 = Self::zeros(n);
        let mut f22 = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                f12[(i, j)] = e[(i, n + j)];
                f22[(i, j)] = e[(n + i, n + j)];
            }
        }
        let q = f22.transpose().matmul(&f12);
        q.symmetrized()
    }

    fn symmetrized(&self) -> Self {
        let half = T::lit(0.5);
        let mut s = self.clone();
        for i in 0..self.dim {
            for j in 0..self.dim {
                s[(i, j)] = (self[(i, j)] + self[(j, i)]) * half;
            }
        }
        s
    }

    /// Solve `self · x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        let scale = self.norm_inf().max(T::min_positive_value());
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| {
                    a[i * n + col]
                        .abs()
                        .partial_cmp(&a[j * n + col].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(col);
            if a[pivot * n + col].abs() <= T::epsilon() * scale {
                return Err(Error::Singular);
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                x.swap(col, pivot);
            }
            let p = a[col * n + col];
            for i in col + 1..n {
                let factor = a[i * n + col] / p;
                if factor == T::zero() {
                    continue;
                }
                for j in col..n {
                    a[i * n + j] = a[i * n + j] - factor * a[col * n + j];
                }
                x[i] = x[i] - factor * x[col];
            }
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc = acc - a[i * n + j] * x[j];
            }
            x[i] = acc / a[i * n + i];
        }
        Ok(x)
    }

    /// Lower Cholesky factor of a symmetric positive semidefinite matrix.
    /// Pivots below the rounding floor are clamped to zero.
    pub fn cholesky_psd(&self) -> Result<Self> {
        let n = self.dim;
        let mut l = Self::zeros(n);
        let floor = T::epsilon() * T::lit(64.0) * self.norm_inf();
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if d < -floor {
                return Err(Error::NotPositiveDefinite);
            }
            let ljj = if d <= floor { T::zero() } else { d.sqrt() };
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = if ljj == T::zero() { T::zero() } else { s / ljj };
            }
        }
        Ok(l)
    }

    /// Solve the Lyapunov equation `self·P + P·selfᵀ + Q = 0` through the
    /// Kronecker form. Returns [`Error::Singular`] when `self` has a pair of
    /// eigenvalues summing to zero.
    pub fn lyapunov(&self, q: &Self) -> Result<Self> {
        let n = self.dim;
        let nn = n * n;
        let mut k = SquareMatrix::zeros(nn);
        // vec(AP + PAᵀ) = (I⊗A + A⊗I) vec(P), column-major vec.
        for i in 0..n {
            for j in 0..n {
                let row = j * n + i;
                for l in 0..n {
                    k[(row, j * n + l)] = k[(row, j * n + l)] + self[(i, l)];
                    k[(row, l * n + i)] = k[(row, l * n + i)] + self[(j, l)];
                }
            }
        }
        let mut rhs = vec![T::zero(); nn];
        for i in 0..n {
            for j in 0..n {
                rhs[j * n + i] = -q[(i, j)];
            }
        }
        let p = k.solve(&rhs)?;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = p[j * n + i];
            }
        }
        Ok(out.symmetrized())
    }
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.dim + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.dim + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_of_scalar_matches_std() {
        for &x in &[-3.0f64, -0.01, 0.0, 0.7, 2.5] {
            let e = SquareMatrix::scalar(x).exp();
            assert_relative_eq!(e[(0, 0)], x.exp(), max_relative = 1e-14);
        }
    }

    #[test]
    fn exp_of_rotation_generator() {
        let th = 0.9f64;
        let m = SquareMatrix::from_rows(&[vec![0.0, -th], vec![th, 0.0]]).unwrap();
        let e = m.exp();
        assert_relative_eq!(e[(0, 0)], th.cos(), epsilon = 1e-14);
        assert_relative_eq!(e[(0, 1)], -th.sin(), epsilon = 1e-14);
        assert_relative_eq!(e[(1, 0)], th.sin(), epsilon = 1e-14);
    }

    #[test]
    fn exp_integral_and_gramian_scalar() {
        let j = -1.3f64;
        let h = 0.2;
        let phi = SquareMatrix::scalar(j).exp_integral(h)[(0, 0)];
        assert_relative_eq!(phi, ((j * h).exp() - 1.0) / j, max_relative = 1e-13);
        let q = SquareMatrix::scalar(j).gramian(h)[(0, 0)];
        assert_relative_eq!(q, ((2.0 * j * h).exp() - 1.0) / (2.0 * j), max_relative = 1e-12);
    }

    #[test]
    fn gramian_matches_quadrature_for_nonnormal_matrix() {
        let a = SquareMatrix::from_rows(&[vec![-1.0f64, 0.5], vec![0.0, -2.0]]).unwrap();
        let h = 0.3;
        let q = a.gramian(h);
        // midpoint quadrature of e^{As} e^{Aᵀs}
        let n = 4000;
        let mut acc = SquareMatrix::zeros(2);
        for k in 0..n {
            let s = (k as f64 + 0.5) * h / n as f64;
            let e = a.scale(s).exp();
            acc = acc.add(&e.matmul(&e.transpose()).scale(h / n as f64));
        }
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(q[(i, j)], acc[(i, j)], epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn lyapunov_scalar_and_check_residual() {
        let p = SquareMatrix::scalar(-1.0f64)
            .lyapunov(&SquareMatrix::identity(1))
            .unwrap();
        assert_relative_eq!(p[(0, 0)], 0.5, epsilon = 1e-15);

        let a = SquareMatrix::from_rows(&[vec![-1.0f64, 0.4], vec![-0.2, -0.5]]).unwrap();
        let q = SquareMatrix::identity(2);
        let p = a.lyapunov(&q).unwrap();
        let r = a.matmul(&p).add(&p.matmul(&a.transpose())).add(&q);
        assert!(r.norm_inf() < 1e-13);
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = SquareMatrix::from_rows(&[vec![4.0f64, 2.0], vec![2.0, 3.0]]).unwrap();
        let l = m.cholesky_psd().unwrap();
        let back = l.matmul(&l.transpose());
        assert_relative_eq!(back[(0, 1)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(back[(1, 1)], 3.0, epsilon = 1e-14);
        let neg = SquareMatrix::from_rows(&[vec![-1.0f64]]).unwrap();
        assert!(neg.cholesky_psd().is_err());
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = SquareMatrix::from_diagonal(&[0.3f64, -2.0, 1.0]);
        assert_relative_eq!(m.norm_spectral(), 2.0, max_relative = 1e-10);
    }
}

//! Truncated spectral representation of `A_α = −(−Δ)^{α/2}` on `(−1, 1)` with
//! zero exterior condition.
//!
//! Eigenvalues use the leading asymptotic term
//! `λ_k = (kπ/2 − (2−α)π/8)^α`. The working basis is the orthonormal sine
//! family `φ_k(x) = sin(kπ(x+1)/2)`, in which the operator is diagonal with
//! entries `−λ_k`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_MODES: usize = 16;

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if !(alpha > T::one() && alpha < T::lit(2.0)) {
        return Err(Error::invalid(
            "alpha",
            format!("{alpha} not in the open interval (1, 2)"),
        ));
    }
    Ok(())
}

/// Leading-order eigenvalue of `(−Δ)^{α/2}` for the `k`-th mode (1-based).
pub fn eigenvalue<T: Scalar>(k: usize, alpha: T) -> Result<T> {
    if k < 1 {
        return Err(Error::invalid("k", "mode index starts at 1"));
    }
    check_alpha(alpha)?;
    Ok(eigenvalue_formula(k, alpha))
}

/// The asymptotic closed form without range checks.
pub(crate) fn eigenvalue_formula<T: Scalar>(k: usize, alpha: T) -> T {
    let pi = T::PI();
    let two = T::lit(2.0);
    let base = T::from_usize_lossy(k) * pi / two - (two - alpha) * pi / T::lit(8.0);
    base.powf(alpha)
}

/// `φ_k(x) = sin(kπ(x+1)/2)` for 1-based `k`.
pub fn basis_function<T: Scalar>(k: usize, x: T) -> T {
    (T::from_usize_lossy(k) * T::PI() * (x + T::one()) / T::lit(2.0)).sin()
}

/// `∫_{−1}^{1} φ_k(x) dx`: `4/(kπ)` for odd `k`, zero for even `k`.
pub fn constant_projection<T: Scalar>(k: usize) -> T {
    if k.is_multiple_of(2) {
        T::zero()
    } else {
        T::lit(4.0) / (T::from_usize_lossy(k) * T::PI())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralOperator<T> {
    alpha: T,
    eigenvalues: Vec<T>,
    basis_const_coeffs: Vec<T>,
}

impl<T: Scalar> SpectralOperator<T> {
    /// Assemble the first `n_modes` eigenpairs.
    pub fn new(alpha: T, n_modes: usize) -> Result<Self> {
        if n_modes < 1 {
            return Err(Error::invalid("n_modes", "need at least one mode"));
        }
        let eigenvalues = (1..=n_modes)
            .map(|k| eigenvalue(k, alpha))
            .collect::<Result<Vec<_>>>()?;
        let basis_const_coeffs = (1..=n_modes).map(constant_projection).collect();
        Ok(Self {
            alpha,
            eigenvalues,
            basis_const_coeffs,
        })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `λ_1, …, λ_N`, positive and ascending.
    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn lambda1(&self) -> T {
        self.eigenvalues[0]
    }

    pub fn lambda_max(&self) -> T {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// `c_k = ⟨1, φ_k⟩`.
    pub fn basis_const_coeffs(&self) -> &[T] {
        &self.basis_const_coeffs
    }

    /// `∫_{−1}^{1} u dx` for `u = Σ u_k φ_k`.
    pub fn integrate(&self, coeffs: &[T]) -> T {
        crate::scalar::dot(coeffs, &self.basis_const_coeffs)
    }

    /// Evaluate `Σ u_k φ_k(x)`.
    pub fn reconstruct(&self, coeffs: &[T], x: T) -> T {
        coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| c * basis_function(i + 1, x))
            .sum()
    }

    /// Operator norm of `e^{A_α t}` on the truncated basis.
    pub fn semigroup_norm(&self, t: T) -> T {
        self.eigenvalues
            .iter()
            .map(|&l| (-l * t).exp())
            .fold(T::zero(), T::max)
    }

    /// Check `‖e^{A_α t}‖ ≤ C e^{−λ₁ t}` on a time grid and report the
    /// smallest constant `C` that works.
    pub fn semigroup_decay_check(&self, t_grid: &[T]) -> Result<SemigroupCheck<T>> {
        if t_grid.is_empty() {
            return Err(Error::invalid("t_grid", "empty time grid"));
        }
        if let Some(t) = t_grid.iter().find(|t| !(**t >= T::zero())) {
            return Err(Error::invalid("t_grid", format!("negative time {t}")));
        }
        let l1 = self.lambda1();
        let norms: Vec<T> = t_grid.iter().map(|&t| self.semigroup_norm(t)).collect();
        let constant = t_grid
            .iter()
            .zip(&norms)
            .map(|(&t, &n)| n / (-l1 * t).exp())
            .fold(T::zero(), T::max);
        let slack = T::one() + T::epsilon() * T::lit(16.0);
        Ok(SemigroupCheck {
            pass: constant <= slack,
            constant,
            norms,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SemigroupCheck<T> {
    pub pass: bool,
    /// `max_t ‖e^{A_α t}‖ e^{λ₁ t}`.
    pub constant: T,
    pub norms: Vec<T>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Independent arithmetic: base = kπ/2 − (2−α)π/8, then base^α by exp/ln.
    fn oracle(k: f64, alpha: f64) -> f64 {
        let base = k * std::f64::consts::FRAC_PI_2 - (2.0 - alpha) * std::f64::consts::PI / 8.0;
        (alpha * base.ln()).exp()
    }

    #[test]
    fn first_eigenvalue_alpha_1_2() {
        let l = eigenvalue(1, 1.2f64).unwrap();
        assert_relative_eq!(l, oracle(1.0, 1.2), max_relative = 1e-14);
        assert!((l - 1.3153).abs() < 1e-4);
        let l32 = eigenvalue(1, 1.2f32).unwrap();
        assert!((l32 - 1.3153).abs() < 1e-4);
    }

    #[test]
    fn classical_limit() {
        // the closed form at α = 2 is the Dirichlet Laplacian eigenvalue (π/2)²
        let l = eigenvalue_formula(1, 2.0f64);
        assert_relative_eq!(l, std::f64::consts::FRAC_PI_2.powi(2), max_relative = 1e-15);
        for k in 1..=10 {
            let near = eigenvalue(k, 2.0 - 1e-13).unwrap();
            let exact = (k as f64 * std::f64::consts::FRAC_PI_2).powi(2);
            assert!(((near - exact) / exact).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(eigenvalue(0, 1.5f64).is_err());
        for a in [1.0f64, 2.0, 0.5, 2.5, f64::NAN] {
            assert!(eigenvalue(1, a).is_err(), "alpha={a}");
        }
        assert!(SpectralOperator::new(1.5f64, 0).is_err());
        assert!(SpectralOperator::new(0.9f64, 4).is_err());
    }

    #[test]
    fn monotone_in_k_and_alpha() {
        assert!(eigenvalue(2, 1.2f64).unwrap() > eigenvalue(1, 1.2f64).unwrap());
        for k in 1..50 {
            for &a in &[1.01f64, 1.2, 1.5, 1.9] {
                assert!(eigenvalue(k + 1, a).unwrap() > eigenvalue(k, a).unwrap());
                assert!(eigenvalue(k, a + 0.05).unwrap() > eigenvalue(k, a).unwrap());
            }
        }
    }

    #[test]
    fn build_operator_examples() {
        let op = SpectralOperator::new(1.2f64, 1).unwrap();
        assert!((op.eigenvalues()[0] - 1.3153).abs() < 1e-4);
        assert_relative_eq!(op.basis_const_coeffs()[0], 4.0 / std::f64::consts::PI);
        assert!((op.basis_const_coeffs()[0] - 1.27324).abs() < 1e-5);

        let op = SpectralOperator::new(1.5f64, 2).unwrap();
        assert_eq!(op.basis_const_coeffs()[1], 0.0);

        let op = SpectralOperator::new(1.2f64, 8).unwrap();
        assert!(op.eigenvalues().windows(2).all(|w| w[0] < w[1]));
        assert!(op.eigenvalues().iter().all(|&l| l > 0.0));
    }

    #[test]
    fn constant_projection_by_quadrature() {
        // composite Simpson on [−1, 1]
        let n = 20_000;
        let h = 2.0 / n as f64;
        for k in 1..=9 {
            let f = |x: f64| basis_function(k, x);
            let mut s = f(-1.0) + f(1.0);
            for i in 1..n {
                let x = -1.0 + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
            }
            let q = s * h / 3.0;
            assert!((q - constant_projection::<f64>(k)).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn semigroup_decay() {
        let op = SpectralOperator::new(1.2f64, 4).unwrap();
        let check = op.semigroup_decay_check(&[0.0, 0.5, 1.0, 3.0]).unwrap();
        assert!(check.pass);
        assert_eq!(check.norms[0], 1.0);
        assert_relative_eq!(check.norms[2], (-op.lambda1()).exp(), max_relative = 1e-15);
        assert!((check.norms[2] - 0.2684).abs() < 1e-4);
        assert_relative_eq!(check.constant, 1.0, max_relative = 1e-12);
        assert!(op.semigroup_decay_check(&[]).is_err());
        assert!(op.semigroup_decay_check(&[-1.0]).is_err());
    }

    #[test]
    fn integrate_matches_reconstruction() {
        let op = SpectralOperator::new(1.4f64, 7).unwrap();
        let coeffs = [0.3, -0.2, 0.15, 0.4, -0.05, 0.02, 0.1];
        let n = 20_000;
        let h = 2.0 / n as f64;
        let mut s = op.reconstruct(&coeffs, -1.0) + op.reconstruct(&coeffs, 1.0);
        for i in 1..n {
            let x = -1.0 + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * op.reconstruct(&coeffs, x);
        }
        assert!((s * h / 3.0 - op.integrate(&coeffs)).abs() < 1e-10);
    }
}

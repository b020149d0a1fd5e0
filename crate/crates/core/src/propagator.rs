//! One-step exponential propagators for the linear parts of the fast and slow
//! equations, shared by the noise generator, the integrators and the
//! Lyapunov–Perron quadrature.

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::scalar::Scalar;
use crate::spectral::SpectralOperator;

/// Per-mode coefficients of `dU = (1/ε)(A_α U + f) dt + (σ₁/√ε) dW`
/// over one step of length `dt`.
#[derive(Clone, Debug)]
pub struct FastPropagator<T> {
    /// `e^{−λ_k dt/ε}`
    pub decay: Vec<T>,
    /// `(1 − e^{−λ_k dt/ε}) / λ_k`, the exact weight of a frozen forcing.
    pub gain: Vec<T>,
    /// Multiplier of a Wiener increment so that the result has the exact
    /// stochastic-convolution variance `σ₁²(1 − e^{−2λ_k dt/ε})/(2λ_k)`.
    pub noise: Vec<T>,
    /// Stationary standard deviation `σ₁/√(2λ_k)`.
    pub stationary_std: Vec<T>,
}

impl<T: Scalar> FastPropagator<T> {
    pub fn new(op: &SpectralOperator<T>, eps: T, sigma1: T, dt: T) -> Result<Self> {
        if !(eps > T::zero()) {
            return Err(Error::invalid("eps", format!("{eps} must be positive")));
        }
        if !(dt > T::zero()) {
            return Err(Error::invalid("dt", format!("{dt} must be positive")));
        }
        if !(sigma1 >= T::zero()) {
            return Err(Error::invalid("sigma1", format!("{sigma1} must be nonnegative")));
        }
        let two = T::lit(2.0);
        let n = op.n_modes();
        let mut decay = Vec::with_capacity(n);
        let mut gain = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        let mut stationary_std = Vec::with_capacity(n);
        for &lambda in op.eigenvalues() {
            let x = lambda * dt / eps;
            decay.push((-x).exp());
            gain.push(-(-x).exp_m1() / lambda);
            noise.push(sigma1 * (-(-two * x).exp_m1() / (two * lambda * dt)).sqrt());
            stationary_std.push(sigma1 / (two * lambda).sqrt());
        }
        Ok(Self {
            decay,
            gain,
            noise,
            stationary_std,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.decay.len()
    }
}

/// Coefficients of `dV = (J V + g) dt + σ₂ dW` over one step.
#[derive(Clone, Debug)]
pub struct SlowPropagator<T> {
    /// `e^{J dt}`
    pub forward: SquareMatrix<T>,
    /// `∫₀^{dt} e^{J s} ds`
    pub forward_gain: SquareMatrix<T>,
    /// `e^{−J dt}`
    pub backward: SquareMatrix<T>,
    /// `∫₀^{dt} e^{−J s} ds`; maps a frozen forcing through one inverse step.
    pub backward_gain: SquareMatrix<T>,
    /// Cholesky factor of the exact one-step covariance, divided by `√dt`.
    pub noise: SquareMatrix<T>,
    /// Cholesky factor of the stationary covariance.
    pub stationary_factor: SquareMatrix<T>,
}

impl<T: Scalar> SlowPropagator<T> {
    pub fn new(j: &SquareMatrix<T>, sigma2: T, dt: T) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::invalid("dt", format!("{dt} must be positive")));
        }
        if !(sigma2 >= T::zero()) {
            return Err(Error::invalid("sigma2", format!("{sigma2} must be nonnegative")));
        }
        let unit_stationary = stationary_covariance(j)?;
        let forward = j.scale(dt).exp();
        let forward_gain = j.exp_integral(dt);
        let neg = j.scale(-T::one());
        let backward = neg.scale(dt).exp();
        let backward_gain = neg.exp_integral(dt);
        let step_cov = j.gramian(dt);
        let noise = step_cov
            .cholesky_psd()?
            .scale(sigma2 / dt.sqrt());
        let stationary_factor = unit_stationary.cholesky_psd()?.scale(sigma2);
        Ok(Self {
            forward,
            forward_gain,
            backward,
            backward_gain,
            noise,
            stationary_factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.forward.dim()
    }
}

/// Solution `P` of `J P + P Jᵀ + I = 0`; fails unless `J` is Hurwitz.
pub fn stationary_covariance<T: Scalar>(j: &SquareMatrix<T>) -> Result<SquareMatrix<T>> {
    let id = SquareMatrix::identity(j.dim());
    let not_stable = || {
        Error::HypothesisViolation(format!(
            "slow operator J = {:?} does not generate a decaying semigroup",
            j.rows()
        ))
    };
    let p = j.lyapunov(&id).map_err(|_| not_stable())?;
    let l = p.cholesky_psd().map_err(|_| not_stable())?;
    if (0..j.dim()).any(|i| !(l[(i, i)] > T::zero())) {
        return Err(not_stable());
    }
    Ok(p)
}

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::scalar::Scalar;
use crate::spectral::SpectralOperator;

/// Nonlinear coupling of the fast–slow system, written in the spectral
/// coordinates of the fast space.
///
/// `fast` is `f(u, v)` projected on the basis, `slow` is `g(u, v, d)`.
/// Both must vanish at the origin.
pub trait Coupling<T: Scalar>: Send + Sync + fmt::Debug {
    fn fast(&self, u: &[T], v: &[T], out: &mut [T]);

    fn slow(&self, u: &[T], v: &[T], d: T, out: &mut [T]);

    /// Analytic `∇_d g`, when the model knows it. Returns `false` when the
    /// caller has to fall back to finite differences.
    fn slow_param_gradient(&self, _u: &[T], _v: &[T], _d: T, _out: &mut [T]) -> bool {
        false
    }

    /// Declared Lipschitz constant of `f`.
    fn lip_fast(&self) -> T;

    /// Declared Lipschitz constant of `g` at parameter `d`.
    fn lip_slow(&self, d: T) -> T;

    /// `false` when `f` ignores its fast argument (the leading-order graph is
    /// then explicit).
    fn fast_depends_on_u(&self) -> bool {
        true
    }
}

/// Family containing the reference model:
///
/// `f(u, v) = a_f (√(‖v‖² + b) − √b) · 1(x)`,
/// `g(u, v, d)_i = a_g · d · sin(∫_{−1}^{1} u dx)` for every slow component.
#[derive(Clone, Debug)]
pub struct SqrtSineCoupling<T> {
    pub f_scale: T,
    pub f_shift: T,
    pub g_scale: T,
    const_coeffs: Vec<T>,
}

impl<T: Scalar> SqrtSineCoupling<T> {
    pub fn new(op: &SpectralOperator<T>, f_scale: T, f_shift: T, g_scale: T) -> Result<Self> {
        if !(f_shift > T::zero()) {
            return Err(Error::invalid("f_shift", format!("{f_shift} must be positive")));
        }
        Ok(Self {
            f_scale,
            f_shift,
            g_scale,
            const_coeffs: op.basis_const_coeffs().to_vec(),
        })
    }

    /// The reference system: `a_f = 0.01`, `b = 5`, `a_g = 0.01`.
    pub fn example2(op: &SpectralOperator<T>) -> Self {
        Self::new(op, T::lit(0.01), T::lit(5.0), T::lit(0.01)).expect("valid constants")
    }

    fn fast_amplitude(&self, v: &[T]) -> T {
        let r2: T = v.iter().map(|&x| x * x).sum();
        self.f_scale * ((r2 + self.f_shift).sqrt() - self.f_shift.sqrt())
    }

    fn integral(&self, u: &[T]) -> T {
        crate::scalar::dot(u, &self.const_coeffs)
    }
}

impl<T: Scalar> Coupling<T> for SqrtSineCoupling<T> {
    fn fast(&self, _u: &[T], v: &[T], out: &mut [T]) {
        let a = self.fast_amplitude(v);
        for (o, &c) in out.iter_mut().zip(&self.const_coeffs) {
            *o = a * c;
        }
    }

    fn slow(&self, u: &[T], _v: &[T], d: T, out: &mut [T]) {
        let s = self.g_scale * d * self.integral(u).sin();
        out.iter_mut().for_each(|o| *o = s);
    }

    fn slow_param_gradient(&self, u: &[T], _v: &[T], _d: T, out: &mut [T]) -> bool {
        let s = self.g_scale * self.integral(u).sin();
        out.iter_mut().for_each(|o| *o = s);
        true
    }

    fn lip_fast(&self) -> T {
        self.f_scale.abs()
    }

    fn lip_slow(&self, d: T) -> T {
        (self.g_scale * d).abs()
    }

    fn fast_depends_on_u(&self) -> bool {
        false
    }
}

type FastFn<T> = dyn Fn(&[T], &[T], &mut [T]) + Send + Sync;
type SlowFn<T> = dyn Fn(&[T], &[T], T, &mut [T]) + Send + Sync;

/// Coupling assembled from closures.
pub struct FnCoupling<T> {
    fast: Box<FastFn<T>>,
    slow: Box<SlowFn<T>>,
    lip_fast: T,
    lip_slow: T,
    fast_depends_on_u: bool,
}

impl<T: Scalar> FnCoupling<T> {
    pub fn new(
        fast: impl Fn(&[T], &[T], &mut [T]) + Send + Sync + 'static,
        slow: impl Fn(&[T], &[T], T, &mut [T]) + Send + Sync + 'static,
        lip_fast: T,
        lip_slow: T,
    ) -> Self {
        Self {
            fast: Box::new(fast),
            slow: Box::new(slow),
            lip_fast,
            lip_slow,
            fast_depends_on_u: true,
        }
    }

    /// Linear-in-nothing coupling: `f = 0`, `g = 0`.
    pub fn zero() -> Self {
        Self::new(
            |_, _, out: &mut [T]| out.iter_mut().for_each(|o| *o = T::zero()),
            |_, _, _, out: &mut [T]| out.iter_mut().for_each(|o| *o = T::zero()),
            T::zero(),
            T::zero(),
        )
        .independent_of_u()
    }

    pub fn independent_of_u(mut self) -> Self {
        self.fast_depends_on_u = false;
        self
    }
}

impl<T> fmt::Debug for FnCoupling<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnCoupling").finish_non_exhaustive()
    }
}

impl<T: Scalar> Coupling<T> for FnCoupling<T> {
    fn fast(&self, u: &[T], v: &[T], out: &mut [T]) {
        (self.fast)(u, v, out)
    }

    fn slow(&self, u: &[T], v: &[T], d: T, out: &mut [T]) {
        (self.slow)(u, v, d, out)
    }

    fn lip_fast(&self) -> T {
        self.lip_fast
    }

    fn lip_slow(&self, _d: T) -> T {
        self.lip_slow
    }

    fn fast_depends_on_u(&self) -> bool {
        self.fast_depends_on_u
    }
}

/// Fast–slow system
///
/// `du = (1/ε)(A_α u + f(u, v)) dt + (σ₁/√ε) dW¹`,
/// `dv = (J v + g(u, v, d)) dt + σ₂ dW²`.
#[derive(Clone)]
pub struct ModelSpec<T> {
    op: SpectralOperator<T>,
    eps: T,
    sigma1: T,
    sigma2: T,
    slow_operator: SquareMatrix<T>,
    gamma2: T,
    param: T,
    coupling: Arc<dyn Coupling<T>>,
}

impl<T: Scalar> fmt::Debug for ModelSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("alpha", &self.op.alpha())
            .field("n_modes", &self.op.n_modes())
            .field("eps", &self.eps)
            .field("sigma1", &self.sigma1)
            .field("sigma2", &self.sigma2)
            .field("J", &self.slow_operator.rows())
            .field("gamma2", &self.gamma2)
            .field("param", &self.param)
            .field("coupling", &self.coupling)
            .finish()
    }
}

impl<T: Scalar> ModelSpec<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        op: SpectralOperator<T>,
        eps: T,
        sigma1: T,
        sigma2: T,
        slow_operator: SquareMatrix<T>,
        gamma2: T,
        param: T,
        coupling: Arc<dyn Coupling<T>>,
    ) -> Result<Self> {
        if !(eps > T::zero()) || !eps.is_finite() {
            return Err(Error::invalid("eps", format!("{eps} must be positive")));
        }
        if !(sigma1 >= T::zero()) || !sigma1.is_finite() {
            return Err(Error::invalid("sigma1", format!("{sigma1} must be nonnegative")));
        }
        if !(sigma2 >= T::zero()) || !sigma2.is_finite() {
            return Err(Error::invalid("sigma2", format!("{sigma2} must be nonnegative")));
        }
        if !(gamma2 > T::zero()) || !gamma2.is_finite() {
            return Err(Error::invalid("gamma2", format!("{gamma2} must be positive")));
        }
        if !param.is_finite() {
            return Err(Error::invalid("a", format!("{param} is not finite")));
        }
        Ok(Self {
            op,
            eps,
            sigma1,
            sigma2,
            slow_operator,
            gamma2,
            param,
            coupling,
        })
    }

    /// Reference system with `J = −1`, `γ₂ = 1` and slow space `ℝ`.
    pub fn example2(alpha: T, eps: T, sigma1: T, sigma2: T, n_modes: usize, a: T) -> Result<Self> {
        let op = SpectralOperator::new(alpha, n_modes)?;
        let coupling = SqrtSineCoupling::example2(&op);
        Self::new(
            op,
            eps,
            sigma1,
            sigma2,
            SquareMatrix::scalar(-T::one()),
            T::one(),
            a,
            Arc::new(coupling),
        )
    }

    pub fn op(&self) -> &SpectralOperator<T> {
        &self.op
    }

    pub fn eps(&self) -> T {
        self.eps
    }

    pub fn sigma1(&self) -> T {
        self.sigma1
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn slow_operator(&self) -> &SquareMatrix<T> {
        &self.slow_operator
    }

    pub fn gamma2(&self) -> T {
        self.gamma2
    }

    /// Slow drift parameter `d`.
    pub fn param(&self) -> T {
        self.param
    }

    pub fn coupling(&self) -> &dyn Coupling<T> {
        self.coupling.as_ref()
    }

    pub fn n_fast(&self) -> usize {
        self.op.n_modes()
    }

    pub fn n_slow(&self) -> usize {
        self.slow_operator.dim()
    }

    /// `K = max(L_f, L_g)`.
    pub fn lipschitz(&self) -> T {
        self.coupling
            .lip_fast()
            .max(self.coupling.lip_slow(self.param))
    }

    pub fn with_param(&self, d: T) -> Self {
        Self {
            param: d,
            ..self.clone()
        }
    }

    pub fn with_eps(&self, eps: T) -> Result<Self> {
        if !(eps > T::zero()) {
            return Err(Error::invalid("eps", format!("{eps} must be positive")));
        }
        Ok(Self {
            eps,
            ..self.clone()
        })
    }

    pub fn with_noise(&self, sigma1: T, sigma2: T) -> Result<Self> {
        Self::new(
            self.op.clone(),
            self.eps,
            sigma1,
            sigma2,
            self.slow_operator.clone(),
            self.gamma2,
            self.param,
            self.coupling.clone(),
        )
    }

    pub fn with_coupling(&self, coupling: Arc<dyn Coupling<T>>) -> Self {
        Self {
            coupling,
            ..self.clone()
        }
    }

    pub(crate) fn fast_into(&self, u: &[T], v: &[T], out: &mut [T]) {
        self.coupling.fast(u, v, out)
    }

    pub(crate) fn slow_into(&self, u: &[T], v: &[T], d: T, out: &mut [T]) {
        self.coupling.slow(u, v, d, out)
    }

    /// `∇_d g(u, v, d)`: analytic when the coupling provides it, otherwise a
    /// central difference with step `1e−5·max(1, |d|)`.
    pub fn slow_param_gradient(&self, u: &[T], v: &[T], d: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_slow()];
        if self.coupling.slow_param_gradient(u, v, d, &mut out) {
            return out;
        }
        finite_difference_param_gradient(self, u, v, d)
    }

    pub(crate) fn check_dims(&self, u: &[T], v: &[T]) -> Result<()> {
        if u.len() != self.n_fast() {
            return Err(Error::invalid(
                "u0",
                format!("{} fast coefficients for {} modes", u.len(), self.n_fast()),
            ));
        }
        if v.len() != self.n_slow() {
            return Err(Error::invalid(
                "v0",
                format!("{} slow components for a {}-dimensional slow space", v.len(), self.n_slow()),
            ));
        }
        Ok(())
    }
}

/// Central difference `∇_d g` with step `1e−5·max(1, |d|)`.
pub fn finite_difference_param_gradient<T: Scalar>(
    model: &ModelSpec<T>,
    u: &[T],
    v: &[T],
    d: T,
) -> Vec<T> {
    let h = T::lit(1e-5) * T::one().max(d.abs());
    let m = model.n_slow();
    let mut plus = vec![T::zero(); m];
    let mut minus = vec![T::zero(); m];
    model.slow_into(u, v, d + h, &mut plus);
    model.slow_into(u, v, d - h, &mut minus);
    plus.iter()
        .zip(&minus)
        .map(|(&p, &q)| (p - q) / (T::lit(2.0) * h))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example2_vanishes_at_origin() {
        let m = ModelSpec::example2(1.2f64, 0.01, 0.1, 0.1, 8, 1.0).unwrap();
        let mut f = vec![1.0; 8];
        let mut g = vec![1.0; 1];
        m.fast_into(&[0.0; 8], &[0.0], &mut f);
        m.slow_into(&[0.0; 8], &[0.0], 1.3, &mut g);
        assert!(f.iter().all(|&x| x == 0.0));
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn example2_drift_values() {
        let m = ModelSpec::example2(1.2f64, 0.01, 0.1, 0.1, 4, 2.0).unwrap();
        let mut f = vec![0.0; 4];
        m.fast_into(&[0.0; 4], &[2.0], &mut f);
        let amp = 0.01 * (9.0f64.sqrt() - 5.0f64.sqrt());
        assert!((f[0] - amp * 4.0 / std::f64::consts::PI).abs() < 1e-16);
        assert_eq!(f[1], 0.0);
        let u = [0.1, 0.2, 0.3, 0.4];
        let mut g = vec![0.0];
        m.slow_into(&u, &[0.0], 2.0, &mut g);
        let integral = 0.1 * 4.0 / std::f64::consts::PI + 0.3 * 4.0 / (3.0 * std::f64::consts::PI);
        assert!((g[0] - 0.02 * integral.sin()).abs() < 1e-16);
        assert_eq!(m.lipschitz(), 0.02);
    }

    #[test]
    fn gradient_finite_difference_matches_analytic() {
        let m = ModelSpec::example2(1.2f64, 0.01, 0.1, 0.1, 6, 1.0).unwrap();
        let u = [0.3, -0.1, 0.2, 0.05, -0.4, 0.01];
        for &d in &[0.2, 1.0, 1.7, 25.0] {
            let fd = finite_difference_param_gradient(&m, &u, &[0.5], d);
            let analytic = m.slow_param_gradient(&u, &[0.5], d);
            let integral = m.op().integrate(&u);
            assert!((analytic[0] - 0.01 * integral.sin()).abs() < 1e-16);
            assert!((fd[0] - analytic[0]).abs() < 1e-7, "d={d}");
            assert!(((fd[0] - analytic[0]) / analytic[0]).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_invalid_constants() {
        assert!(ModelSpec::example2(1.2f64, 0.0, 0.1, 0.1, 4, 1.0).is_err());
        assert!(ModelSpec::example2(1.2f64, 0.01, -0.1, 0.1, 4, 1.0).is_err());
        assert!(ModelSpec::example2(1.2f64, 0.01, 0.1, f64::NAN, 4, 1.0).is_err());
        assert!(ModelSpec::example2(2.2f64, 0.01, 0.1, 0.1, 4, 1.0).is_err());
    }
}

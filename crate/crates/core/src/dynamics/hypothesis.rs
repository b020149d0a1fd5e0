//! Spectral-gap bookkeeping: the weight `μ`, the gap bound, and the
//! closed-form constants derived from them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::ModelSpec;
use crate::scalar::{self, Scalar};

/// `μ = γ₂/(2λ₁ + γ₂)`.
pub fn mu<T: Scalar>(lambda1: T, gamma2: T) -> T {
    gamma2 / (T::lit(2.0) * lambda1 + gamma2)
}

/// `λ₁γ₂/(2λ₁ + γ₂)`, the largest admissible Lipschitz constant.
pub fn gap_bound<T: Scalar>(lambda1: T, gamma2: T) -> T {
    lambda1 * mu(lambda1, gamma2)
}

/// `K/(λ₁ − μ) + K/(γ₂ + μ/ε)`: contraction factor of the Lyapunov–Perron
/// map in the `e^{(μ/ε)t}`-weighted norm. Tends to `K/(λ₁ − μ)` as `ε → 0`.
pub fn contraction_factor<T: Scalar>(k: T, lambda1: T, gamma2: T, eps: T) -> T {
    let m = mu(lambda1, gamma2);
    k / (lambda1 - m) + k * eps / (eps * gamma2 + m)
}

/// `K / ((λ₁ − μ)(1 − υ))`, the Lipschitz bound of the manifold graph.
pub fn theorem1_bound<T: Scalar>(k: T, lambda1: T, gamma2: T, eps: T) -> T {
    let m = mu(lambda1, gamma2);
    k / ((lambda1 - m) * (T::one() - contraction_factor(k, lambda1, gamma2, eps)))
}

/// `1/(1 − υ)`, the prefactor of the exponential tracking envelope.
pub fn tracking_prefactor<T: Scalar>(k: T, lambda1: T, gamma2: T, eps: T) -> T {
    T::one() / (T::one() - contraction_factor(k, lambda1, gamma2, eps))
}

#[derive(Clone, Debug)]
pub struct HypothesisReport<T> {
    pub lambda1: T,
    pub gamma2: T,
    pub eps: T,
    /// Declared `K = max(L_f, L_g)`.
    pub k: T,
    pub mu: T,
    /// `λ₁γ₂/(2λ₁ + γ₂)`
    pub gap_bound: T,
    /// `K < gap_bound`, strict.
    pub gap_ok: bool,
    pub mu_in_unit_interval: bool,
    /// `K < μλ₁`
    pub k_below_mu_lambda1: bool,
    /// `λ₁ − μ > K`
    pub rate_gap_ok: bool,
    /// Sampled `‖e^{Jt}v‖ ≤ e^{−γ₂t}‖v‖`.
    pub slow_decay_ok: bool,
    /// `f(0,0) = 0` and `g(0,0,d) = 0`.
    pub vanish_at_origin: bool,
    pub contraction_factor: T,
    pub theorem1_bound: T,
    pub tracking_prefactor: T,
    /// Largest sampled difference quotients of `f` and `g`.
    pub sampled_lip_fast: T,
    pub sampled_lip_slow: T,
    pub warnings: Vec<String>,
}

impl<T: Scalar> HypothesisReport<T> {
    /// Every hypothesis the theory needs holds.
    pub fn all_ok(&self) -> bool {
        self.gap_ok
            && self.mu_in_unit_interval
            && self.k_below_mu_lambda1
            && self.rate_gap_ok
            && self.slow_decay_ok
            && self.vanish_at_origin
    }

    /// `(key, value)` lines for summaries and logs.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lambda1", self.lambda1.to_string()),
            ("gamma2", self.gamma2.to_string()),
            ("eps", self.eps.to_string()),
            ("K", self.k.to_string()),
            ("mu", self.mu.to_string()),
            ("gap_bound", self.gap_bound.to_string()),
            ("gap_ok", self.gap_ok.to_string()),
            ("mu_in_unit_interval", self.mu_in_unit_interval.to_string()),
            ("K_below_mu_lambda1", self.k_below_mu_lambda1.to_string()),
            ("rate_gap_ok", self.rate_gap_ok.to_string()),
            ("slow_decay_ok", self.slow_decay_ok.to_string()),
            ("vanish_at_origin", self.vanish_at_origin.to_string()),
            ("contraction_factor", self.contraction_factor.to_string()),
            ("theorem1_bound", self.theorem1_bound.to_string()),
            ("tracking_prefactor", self.tracking_prefactor.to_string()),
            ("sampled_lip_fast", self.sampled_lip_fast.to_string()),
            ("sampled_lip_slow", self.sampled_lip_slow.to_string()),
        ]
    }
}

impl<T: Scalar> ModelSpec<T> {
    pub fn mu(&self) -> T {
        mu(self.op().lambda1(), self.gamma2())
    }

    /// Only the strict gap inequality, without sampling.
    pub fn gap_ok(&self) -> bool {
        self.lipschitz() < gap_bound(self.op().lambda1(), self.gamma2())
    }

    pub fn contraction_factor(&self) -> T {
        contraction_factor(self.lipschitz(), self.op().lambda1(), self.gamma2(), self.eps())
    }
}

const LIP_SAMPLES: usize = 256;
const DECAY_SAMPLES: usize = 64;

pub fn hypothesis_check<T: Scalar>(m: &ModelSpec<T>) -> HypothesisReport<T> {
    let lambda1 = m.op().lambda1();
    let gamma2 = m.gamma2();
    let eps = m.eps();
    let k = m.lipschitz();
    let mu = mu(lambda1, gamma2);
    let bound = gap_bound(lambda1, gamma2);
    let mut warnings = Vec::new();

    let slow_decay_ok = slow_decay_sampled(m);
    if !slow_decay_ok {
        warnings.push(format!(
            "‖exp(Jt)‖ exceeds exp(−γ₂t) for γ₂ = {gamma2} on sampled t"
        ));
    }

    let (n, ms) = (m.n_fast(), m.n_slow());
    let mut f0 = vec![T::one(); n];
    let mut g0 = vec![T::one(); ms];
    m.fast_into(&vec![T::zero(); n], &vec![T::zero(); ms], &mut f0);
    m.slow_into(&vec![T::zero(); n], &vec![T::zero(); ms], m.param(), &mut g0);
    let vanish_at_origin = f0.iter().chain(&g0).all(|x| x.abs() <= T::epsilon());
    if !vanish_at_origin {
        warnings.push("f(0,0) or g(0,0,d) is nonzero".into());
    }

    let (lip_f, lip_g) = sampled_lipschitz(m);
    let slack = T::one() + T::lit(1e-9);
    if lip_f > m.coupling().lip_fast() * slack {
        warnings.push(format!(
            "sampled Lipschitz quotient of f is {lip_f}, above the declared {}",
            m.coupling().lip_fast()
        ));
    }
    if lip_g > m.coupling().lip_slow(m.param()) * slack {
        warnings.push(format!(
            "sampled Lipschitz quotient of g is {lip_g}, above the declared {}",
            m.coupling().lip_slow(m.param())
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    HypothesisReport {
        lambda1,
        gamma2,
        eps,
        k,
        mu,
        gap_bound: bound,
        gap_ok: k < bound,
        mu_in_unit_interval: mu > T::zero() && mu < T::one(),
        k_below_mu_lambda1: k < mu * lambda1,
        rate_gap_ok: lambda1 - mu > k,
        slow_decay_ok,
        vanish_at_origin,
        contraction_factor: contraction_factor(k, lambda1, gamma2, eps),
        theorem1_bound: theorem1_bound(k, lambda1, gamma2, eps),
        tracking_prefactor: tracking_prefactor(k, lambda1, gamma2, eps),
        sampled_lip_fast: lip_f,
        sampled_lip_slow: lip_g,
        warnings,
    }
}

fn slow_decay_sampled<T: Scalar>(m: &ModelSpec<T>) -> bool {
    let horizon = T::lit(5.0) / m.gamma2();
    let j = m.slow_operator();
    let tol = T::one() + T::lit(1e-8);
    (1..=DECAY_SAMPLES).all(|i| {
        let t = horizon * T::from_usize_lossy(i) / T::from_usize_lossy(DECAY_SAMPLES);
        j.scale(t).exp().norm_spectral() <= (-m.gamma2() * t).exp() * tol
    })
}

/// Largest difference quotient `‖Δf‖/(‖Δu‖ + ‖Δv‖)` over random pairs.
fn sampled_lipschitz<T: Scalar>(m: &ModelSpec<T>) -> (T, T) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (n, ms) = (m.n_fast(), m.n_slow());
    let mut draw = |len: usize, scale: f64| -> Vec<T> {
        (0..len)
            .map(|_| T::standard_normal(&mut rng) * T::lit(scale))
            .collect()
    };
    let mut fa = vec![T::zero(); n];
    let mut fb = vec![T::zero(); n];
    let mut ga = vec![T::zero(); ms];
    let mut gb = vec![T::zero(); ms];
    let (mut lf, mut lg) = (T::zero(), T::zero());
    for _ in 0..LIP_SAMPLES {
        let (ua, va) = (draw(n, 0.5), draw(ms, 3.0));
        let (ub, vb) = (draw(n, 0.5), draw(ms, 3.0));
        let den = scalar::dist2(&ua, &ub) + scalar::dist2(&va, &vb);
        if !(den > T::zero()) {
            continue;
        }
        m.fast_into(&ua, &va, &mut fa);
        m.fast_into(&ub, &vb, &mut fb);
        m.slow_into(&ua, &va, m.param(), &mut ga);
        m.slow_into(&ub, &vb, m.param(), &mut gb);
        lf = lf.max(scalar::dist2(&fa, &fb) / den);
        lg = lg.max(scalar::dist2(&ga, &gb) / den);
    }
    (lf, lg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::dynamics::FnCoupling;
    use crate::linalg::SquareMatrix;

    #[test]
    fn example2_arithmetic() {
        let m = ModelSpec::example2(1.2f64, 0.01, 0.1, 0.1, 16, 1.0).unwrap();
        let r = hypothesis_check(&m);
        assert!((r.lambda1 - 1.3153).abs() < 1e-4);
        assert!((r.mu - 0.27543).abs() < 1e-4);
        assert!((r.gap_bound - 0.36227).abs() < 1e-4);
        assert!(r.gap_ok && r.all_ok());
        assert!((r.theorem1_bound - 0.009713).abs() < 1e-5);
        assert!((r.tracking_prefactor - 1.0101).abs() < 1e-4);
    }

    #[test]
    fn gap_is_strict() {
        let m = ModelSpec::example2(1.2f64, 0.01, 0.1, 0.1, 4, 1.0).unwrap();
        let bound = gap_bound(m.op().lambda1(), 1.0);
        let c = FnCoupling::new(
            |_, _, o: &mut [f64]| o.fill(0.0),
            |_, _, _, o: &mut [f64]| o.fill(0.0),
            bound,
            0.0,
        );
        let at = m.with_coupling(Arc::new(c));
        assert!(!hypothesis_check(&at).gap_ok);
        assert!(!at.gap_ok());
    }

    #[test]
    fn contraction_factor_limit() {
        let (l1, g2, k) = (1.3153f64, 1.0, 0.01);
        let m = mu(l1, g2);
        let small = contraction_factor(k, l1, g2, 1e-9);
        assert!((small - k / (l1 - m)).abs() < 1e-9);
        assert!(contraction_factor(k, l1, g2, 0.1) > contraction_factor(k, l1, g2, 0.01));
        assert!(theorem1_bound(0.02, l1, g2, 0.01) > theorem1_bound(0.01, l1, g2, 0.01));
    }

    #[test]
    fn slow_decay_detects_growth() {
        let m = ModelSpec::example2(1.2f64, 0.01, 0.1, 0.1, 4, 1.0).unwrap();
        let fast_claim = ModelSpec::new(
            m.op().clone(),
            0.01,
            0.1,
            0.1,
            SquareMatrix::scalar(-1.0),
            2.0,
            1.0,
            Arc::new(crate::dynamics::SqrtSineCoupling::example2(m.op())),
        )
        .unwrap();
        assert!(!hypothesis_check(&fast_claim).slow_decay_ok);
    }
}

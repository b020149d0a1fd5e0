//! Estimation of the slow drift parameter `d` from slow observations by
//! minimizing the reduced-system objective
//! `F(d) = 𝔼 ∫₀^T ‖v_ob(t) − v_s(t; d)‖² dt`.

use std::io::Write;

use rayon::prelude::*;

use crate::dynamics::{simulate_full, simulate_reduced, ManifoldEvaluator, ModelSpec, Trajectory};
use crate::error::{Error, Result};
use crate::manifold::{LeadingOrderGraph, LpConfig, LpSolver, LyapunovPerronGraph};
use crate::noise::{grid_index, NoiseRealization};
use crate::scalar::{dist2, norm2, Scalar};

/// Slow observation on a uniform grid starting at 0.
#[derive(Clone, Debug)]
pub struct Observation<T> {
    /// Seed of the noise realization that produced the data (shared-seed mode).
    pub seed: u64,
    pub times: Vec<T>,
    /// Row-major `times.len() × m`.
    pub slow: Vec<T>,
    /// Initial fast state of the observed system.
    pub u0: Vec<T>,
}

impl<T: Scalar> Observation<T> {
    pub fn from_trajectory(seed: u64, traj: &Trajectory<T>) -> Self {
        let slow = (0..traj.len()).flat_map(|i| traj.slow(i).to_vec()).collect();
        Self {
            seed,
            times: traj.times().to_vec(),
            slow,
            u0: traj.fast(0).to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseMode {
    /// Realization `i` reuses the seed of observation `i`.
    Shared,
    /// `n_mc` fresh realizations with seeds `base_seed + i`, each compared
    /// with every observation.
    Independent { base_seed: u64, n_mc: usize },
}

/// Manifold used inside the reduced system.
#[derive(Clone, Debug, PartialEq)]
pub enum GraphKind<T> {
    LeadingOrder,
    LyapunovPerron(LpConfig<T>),
}

fn with_graph<T: Scalar, R>(
    kind: &GraphKind<T>,
    model: &ModelSpec<T>,
    noise: &NoiseRealization<T>,
    run: impl FnOnce(&dyn ManifoldEvaluator<T>) -> Result<R>,
) -> Result<R> {
    match kind {
        GraphKind::LeadingOrder => run(&LeadingOrderGraph { model, noise }),
        GraphKind::LyapunovPerron(cfg) => run(&LyapunovPerronGraph {
            solver: LpSolver::new(model, cfg, noise.dt())?,
            noise,
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Synthesis {
    /// Slow component of the full stochastic system.
    Full,
    /// Reduced system on the manifold.
    Reduced,
}

/// Generate slow observations of `m` (at its own parameter) for each seed,
/// on the noise window `[window_start, T]`.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_observations<T: Scalar>(
    m: &ModelSpec<T>,
    kind: Synthesis,
    graph: &GraphKind<T>,
    u0: &[T],
    v0: &[T],
    t_end: T,
    dt: T,
    window_start: T,
    seeds: &[u64],
) -> Result<Vec<Observation<T>>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let noise = NoiseRealization::generate(m, window_start, t_end, dt, seed)?;
            let traj = match kind {
                Synthesis::Full => simulate_full(m, &noise, u0, v0, t_end, dt)?,
                Synthesis::Reduced => with_graph(graph, m, &noise, |h| {
                    simulate_reduced(m, h, &noise, v0, m.param(), t_end, dt)
                })?,
            };
            let mut obs = Observation::from_trajectory(seed, &traj);
            obs.u0 = u0.to_vec();
            Ok(obs)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ObjectiveValue<T> {
    pub value: T,
    /// Monte Carlo standard error of `value`.
    pub std_err: T,
    /// One integral per realization.
    pub samples: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint<T> {
    pub d: T,
    pub value: T,
    pub std_err: T,
}

pub struct EstimationProblem<T: Scalar> {
    model: ModelSpec<T>,
    range: (T, T),
    observations: Vec<Observation<T>>,
    v0: Vec<T>,
    dt: T,
    t_end: T,
    mode: NoiseMode,
    graph: GraphKind<T>,
    realizations: Vec<NoiseRealization<T>>,
}

impl<T: Scalar> EstimationProblem<T> {
    /// `window_start ≤ 0` is the left end of every regenerated noise window;
    /// with shared seeds it must match the window used for the observations.
    pub fn new(
        model: ModelSpec<T>,
        range: (T, T),
        observations: Vec<Observation<T>>,
        v0: Vec<T>,
        window_start: T,
        mode: NoiseMode,
        graph: GraphKind<T>,
    ) -> Result<Self> {
        let (lo, hi) = range;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid("lambda", format!("need a finite d_lo < d_hi, got [{lo}, {hi}]")));
        }
        if v0.len() != model.n_slow() {
            return Err(Error::invalid("v0", "slow dimension mismatch"));
        }
        let first = observations
            .first()
            .ok_or_else(|| Error::invalid("observations", "need at least one observation"))?;
        let (dt, t_end) = uniform_grid(&first.times)?;
        for o in &observations {
            if o.times != first.times {
                return Err(Error::GridMismatch("observations use different time grids".into()));
            }
            if o.slow.len() != o.times.len() * model.n_slow() {
                return Err(Error::invalid("observations", "slow data does not match the grid"));
            }
            if o.u0.len() != model.n_fast() {
                return Err(Error::invalid("observations", "u0 does not match the fast dimension"));
            }
        }
        if window_start > T::zero() {
            return Err(Error::invalid("window_start", format!("{window_start} must be ≤ 0")));
        }
        let seeds: Vec<u64> = match mode {
            NoiseMode::Shared => observations.iter().map(|o| o.seed).collect(),
            NoiseMode::Independent { base_seed, n_mc } => {
                if n_mc == 0 {
                    return Err(Error::invalid("n_mc", "need at least one realization"));
                }
                (0..n_mc as u64).map(|i| base_seed.wrapping_add(i)).collect()
            }
        };
        let realizations = seeds
            .par_iter()
            .map(|&s| NoiseRealization::generate(&model, window_start, t_end, dt, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            range,
            observations,
            v0,
            dt,
            t_end,
            mode,
            graph,
            realizations,
        })
    }

    pub fn model(&self) -> &ModelSpec<T> {
        &self.model
    }

    pub fn range(&self) -> (T, T) {
        self.range
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn n_realizations(&self) -> usize {
        self.realizations.len()
    }

    fn reduced(&self, r: usize, d: T) -> Result<Trajectory<T>> {
        let md = self.model.with_param(d);
        let noise = &self.realizations[r];
        with_graph(&self.graph, &md, noise, |h| {
            simulate_reduced(&md, h, noise, &self.v0, d, self.t_end, self.dt)
        })
    }

    fn paired(&self, r: usize) -> Vec<&Observation<T>> {
        match self.mode {
            NoiseMode::Shared => vec![&self.observations[r]],
            NoiseMode::Independent { .. } => self.observations.iter().collect(),
        }
    }

    /// Monte Carlo estimate of `F(d)`.
    pub fn objective(&self, d: T) -> Result<ObjectiveValue<T>> {
        let (lo, hi) = self.range;
        if !(d >= lo && d <= hi) {
            return Err(Error::invalid("d", format!("{d} outside [{lo}, {hi}]")));
        }
        let samples = (0..self.realizations.len())
            .into_par_iter()
            .map(|r| {
                let sim = self.reduced(r, d)?;
                let obs = self.paired(r);
                let total: T = obs.iter().map(|o| self.squared_gap_integral(o, &sim)).sum();
                Ok(total / T::from_usize_lossy(obs.len()))
            })
            .collect::<Result<Vec<T>>>()?;
        let (value, std_err) = mean_and_std_err(&samples);
        if !value.is_finite() {
            return Err(Error::NonFiniteObjective { d: d.as_f64() });
        }
        Ok(ObjectiveValue {
            value,
            std_err,
            samples,
        })
    }

    /// Trapezoid rule for `∫₀^T ‖v_ob − v_s‖² dt`.
    fn squared_gap_integral(&self, obs: &Observation<T>, sim: &Trajectory<T>) -> T {
        let ms = self.model.n_slow();
        let n = sim.len();
        let sq = |i: usize| {
            let e = dist2(&obs.slow[i * ms..(i + 1) * ms], sim.slow(i));
            e * e
        };
        let half = T::lit(0.5);
        let inner: T = (1..n - 1).map(sq).sum();
        self.dt * (inner + half * (sq(0) + sq(n - 1)))
    }

    /// Grid search over the range followed by golden-section refinement
    /// around the best grid point.
    pub fn estimate(&self, grid_n: usize, refine_iters: usize) -> Result<EstimationResult<T>> {
        if grid_n < 5 {
            return Err(Error::invalid("grid_n", format!("{grid_n} < 5")));
        }
        let (lo, hi) = self.range;
        let step = (hi - lo) / T::from_usize_lossy(grid_n - 1);
        let mut curve = Vec::with_capacity(grid_n + refine_iters + 2);
        for i in 0..grid_n {
            let d = if i + 1 == grid_n {
                hi
            } else {
                lo + step * T::from_usize_lossy(i)
            };
            let v = self.objective(d)?;
            curve.push(CurvePoint {
                d,
                value: v.value,
                std_err: v.std_err,
            });
        }
        let best = argmin(&curve);
        let grid_argmin = curve[best].d;
        let a = curve[best.saturating_sub(1)].d;
        let b = curve[(best + 1).min(grid_n - 1)].d;
        let mut extra = Vec::new();
        golden_section(
            |d| {
                let v = self.objective(d)?;
                extra.push(CurvePoint {
                    d,
                    value: v.value,
                    std_err: v.std_err,
                });
                Ok(v.value)
            },
            a,
            b,
            refine_iters,
        )?;
        curve.extend(extra);
        curve.sort_by(|p, q| p.d.partial_cmp(&q.d).expect("finite abscissae"));
        let best = curve[argmin(&curve)];
        let error = self.error_bound_report(best.d, best.value)?;
        Ok(EstimationResult {
            d_hat: best.d,
            f_min: best.value,
            f_min_std_err: best.std_err,
            grid_argmin,
            curve,
            error,
        })
    }

    /// Right-hand side of the parameter-error bound at `d_hat`, with the
    /// semigroup constant `C = 1`.
    pub fn error_bound_report(&self, d_hat: T, f_value: T) -> Result<ErrorBound<T>> {
        let md = self.model.with_param(d_hat);
        let n = grid_index(self.t_end, self.dt, "T")?;
        let t_stars: Vec<i64> = [0.25, 0.5, 0.75]
            .iter()
            .map(|&q| (T::lit(q) * T::from_i64_lossy(n)).round().to_i64().unwrap_or(0).max(1))
            .collect();
        let n_obs = self.observations.len();
        let per = (0..self.realizations.len())
            .into_par_iter()
            .map(|r| {
                let noise = &self.realizations[r];
                let sim = self.reduced(r, d_hat)?;
                let xi0 = noise.xi.at_index(0)?;
                let anchor: Vec<T> = self.v0.iter().zip(xi0).map(|(&a, &b)| a - b).collect();
                let mut h = vec![T::zero(); md.n_fast()];
                with_graph(&self.graph, &md, noise, |g| g.evaluate(0, &anchor, &mut h))?;
                let eta0 = noise.eta.at_index(0)?;
                let u0 = &self.observations[r % n_obs].u0;
                let offset: Vec<T> = (0..h.len()).map(|k| u0[k] - eta0[k] - h[k]).collect();
                let g = gradient_integrals(&md, &sim, d_hat, self.dt, &t_stars);
                Ok((norm2(&offset), g))
            })
            .collect::<Result<Vec<_>>>()?;
        let nr = T::from_usize_lossy(per.len());
        let initial_offset = per.iter().map(|p| p.0).sum::<T>() / nr;
        let g_mean: Vec<T> = (0..t_stars.len())
            .map(|j| per.iter().map(|p| p.1[j]).sum::<T>() / nr)
            .collect();
        let inputs = ErrorBoundInputs {
            eps: md.eps(),
            lambda1: md.op().lambda1(),
            lip_f: md.coupling().lip_fast(),
            lip_g: md.coupling().lip_slow(d_hat),
            t_end: self.t_end,
            f_value,
            initial_offset,
            g_value: g_mean[1],
        };
        let mut bound = assemble_error_bound(&inputs);
        bound.g_by_t_star = t_stars
            .iter()
            .zip(&g_mean)
            .map(|(&i, &g)| (T::from_i64_lossy(i) * self.dt, g))
            .collect();
        Ok(bound)
    }
}

/// `‖∫₀^{t*} e^{−Jt} ∇_d g(u_s, v_s, d) dt‖` by the trapezoid rule for each
/// requested `t*` index.
fn gradient_integrals<T: Scalar>(
    m: &ModelSpec<T>,
    sim: &Trajectory<T>,
    d: T,
    dt: T,
    t_stars: &[i64],
) -> Vec<T> {
    let ms = m.n_slow();
    let step_back = m.slow_operator().scale(-dt).exp();
    let mut prop = crate::linalg::SquareMatrix::identity(ms);
    let last = *t_stars.iter().max().unwrap_or(&0) as usize;
    let mut acc = vec![T::zero(); ms];
    let mut prev = vec![T::zero(); ms];
    let mut out = Vec::with_capacity(t_stars.len());
    let half = T::lit(0.5);
    for i in 0..=last.min(sim.len() - 1) {
        let grad = m.slow_param_gradient(sim.fast(i), sim.slow(i), d);
        let term = prop.mul_vec(&grad);
        if i > 0 {
            for c in 0..ms {
                acc[c] = acc[c] + half * dt * (prev[c] + term[c]);
            }
        }
        prev = term;
        prop = prop.matmul(&step_back);
        for &ts in t_stars {
            if ts as usize == i {
                out.push((i, norm2(&acc)));
            }
        }
    }
    t_stars
        .iter()
        .map(|&ts| {
            out.iter()
                .find(|(i, _)| *i == ts as usize)
                .map(|p| p.1)
                .unwrap_or(T::nan())
        })
        .collect()
}

/// Scalar ingredients of the error bound.
#[derive(Clone, Copy, Debug)]
pub struct ErrorBoundInputs<T> {
    pub eps: T,
    pub lambda1: T,
    pub lip_f: T,
    pub lip_g: T,
    pub t_end: T,
    /// `F(d_hat)`
    pub f_value: T,
    /// `𝔼‖u₀ − η(0) − H(ω, v₀ − ξ(0))‖`
    pub initial_offset: T,
    /// `G` at the reference `t*`.
    pub g_value: T,
}

#[derive(Clone, Debug)]
pub struct ErrorBound<T> {
    pub g_value: T,
    /// `(t*, G(t*))` at `T/4, T/2, 3T/4`.
    pub g_by_t_star: Vec<(T, T)>,
    /// `L_g 𝔼‖u₀ − η − H‖ ε/(λ₁ − L_f)`
    pub eps_term: T,
    /// `L_f L_g/(λ₁ − L_f) · √(T F)`
    pub cross_term: T,
    /// `L_g √(T F)`
    pub lipschitz_term: T,
    /// `√F / T`
    pub inv_t_term: T,
    pub numerator: T,
    /// `numerator / G`, `None` when `G < 1e−12` or `λ₁ ≤ L_f`.
    pub bound: Option<T>,
}

impl<T: Scalar> ErrorBound<T> {
    pub fn informative(&self) -> bool {
        self.bound.is_some()
    }
}

pub fn assemble_error_bound<T: Scalar>(x: &ErrorBoundInputs<T>) -> ErrorBound<T> {
    let denom = x.lambda1 - x.lip_f;
    let root_tf = (x.t_end * x.f_value).sqrt();
    let eps_term = x.lip_g * x.initial_offset * x.eps / denom;
    let cross_term = x.lip_f * x.lip_g / denom * root_tf;
    let lipschitz_term = x.lip_g * root_tf;
    let inv_t_term = x.f_value.sqrt() / x.t_end;
    let numerator = eps_term + cross_term + lipschitz_term + inv_t_term;
    let informative = denom > T::zero() && x.g_value >= T::lit(1e-12) && x.g_value.is_finite();
    ErrorBound {
        g_value: x.g_value,
        g_by_t_star: Vec::new(),
        eps_term,
        cross_term,
        lipschitz_term,
        inv_t_term,
        numerator,
        bound: informative.then(|| numerator / x.g_value),
    }
}

#[derive(Clone, Debug)]
pub struct EstimationResult<T> {
    pub d_hat: T,
    pub f_min: T,
    pub f_min_std_err: T,
    /// Best point of the coarse grid.
    pub grid_argmin: T,
    /// Every evaluated `(d, F, se)`, sorted by `d`.
    pub curve: Vec<CurvePoint<T>>,
    pub error: ErrorBound<T>,
}

impl<T: Scalar> EstimationResult<T> {
    pub fn write_curve_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "d,objective,std_err")?;
        for p in &self.curve {
            writeln!(w, "{},{},{}", p.d, p.value, p.std_err)?;
        }
        Ok(())
    }
}

fn argmin<T: Scalar>(curve: &[CurvePoint<T>]) -> usize {
    let mut best = 0;
    for (i, p) in curve.iter().enumerate() {
        if p.value < curve[best].value {
            best = i;
        }
    }
    best
}

fn uniform_grid<T: Scalar>(times: &[T]) -> Result<(T, T)> {
    if times.len() < 3 {
        return Err(Error::invalid("observations", "need at least three time points"));
    }
    if times[0] != T::zero() {
        return Err(Error::GridMismatch(format!("observation grid starts at {}, not 0", times[0])));
    }
    let dt = times[1] - times[0];
    if !(dt > T::zero()) {
        return Err(Error::GridMismatch("observation times are not increasing".into()));
    }
    let tol = dt * T::lit(1e-6);
    for (i, &t) in times.iter().enumerate() {
        if (t - T::from_usize_lossy(i) * dt).abs() > tol {
            return Err(Error::GridMismatch(format!("observation grid is not uniform at t = {t}")));
        }
    }
    Ok((dt, times[times.len() - 1]))
}

/// Sample mean and its standard error.
pub fn mean_and_std_err<T: Scalar>(x: &[T]) -> (T, T) {
    let n = T::from_usize_lossy(x.len());
    let mean = x.iter().copied().sum::<T>() / n;
    if x.len() < 2 {
        return (mean, T::zero());
    }
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (n - T::one());
    (mean, (var / n).sqrt())
}

/// Golden-section search for a minimum of `f` on `[a, b]`; returns the best
/// evaluated point and its value.
pub fn golden_section<T: Scalar>(
    mut f: impl FnMut(T) -> Result<T>,
    a: T,
    b: T,
    iters: usize,
) -> Result<(T, T)> {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    Ok(if fc < fd { (c, fc) } else { (d, fd) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_on_quadratic() {
        let (x, fx) = golden_section(|x: f64| Ok((x - 0.7317).powi(2) + 2.0), 0.0, 3.0, 60).unwrap();
        assert!((x - 0.7317).abs() < 1e-6);
        assert!((fx - 2.0).abs() < 1e-12);
    }

    #[test]
    fn golden_section_propagates_errors() {
        let r = golden_section(|_: f64| Err(Error::NonFiniteObjective { d: 0.5 }), 0.0, 1.0, 5);
        assert!(r.is_err());
    }

    #[test]
    fn error_bound_vanishes_without_gaps() {
        let b = assemble_error_bound(&ErrorBoundInputs {
            eps: 0.01f64,
            lambda1: 1.3,
            lip_f: 0.01,
            lip_g: 0.01,
            t_end: 2.0,
            f_value: 0.0,
            initial_offset: 0.0,
            g_value: 0.3,
        });
        assert_eq!(b.numerator, 0.0);
        assert_eq!(b.bound, Some(0.0));
    }

    #[test]
    fn error_bound_linear_in_eps_term() {
        let base = ErrorBoundInputs {
            eps: 0.01f64,
            lambda1: 1.3,
            lip_f: 0.01,
            lip_g: 0.02,
            t_end: 2.0,
            f_value: 1e-4,
            initial_offset: 0.5,
            g_value: 0.3,
        };
        let a = assemble_error_bound(&base);
        let b = assemble_error_bound(&ErrorBoundInputs { eps: 0.03, ..base });
        assert!((b.eps_term - 3.0 * a.eps_term).abs() < 1e-18);
        assert_eq!(a.cross_term, b.cross_term);
        assert_eq!(a.lipschitz_term, b.lipschitz_term);
        assert_eq!(a.inv_t_term, b.inv_t_term);
        assert!((b.numerator - a.numerator - 2.0 * a.eps_term).abs() < 1e-15);
        let z = assemble_error_bound(&ErrorBoundInputs { g_value: 1e-13, ..base });
        assert!(!z.informative());
    }

    #[test]
    fn mean_and_se() {
        let (m, s) = mean_and_std_err(&[1.0f64, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - ((5.0f64 / 3.0) / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_problems() {
        let m = ModelSpec::example2(1.2f64, 0.01, 0.1, 0.1, 4, 1.0).unwrap();
        let obs = Observation {
            seed: 1,
            times: vec![0.0, 0.1, 0.2, 0.3],
            slow: vec![0.0; 4],
            u0: vec![0.0; 4],
        };
        let mk = |range, obs: Vec<Observation<f64>>| {
            EstimationProblem::new(m.clone(), range, obs, vec![1.0], 0.0, NoiseMode::Shared, GraphKind::LeadingOrder)
        };
        assert!(mk((2.0, 1.0), vec![obs.clone()]).is_err());
        assert!(mk((0.0, 1.0), vec![]).is_err());
        let mut bad = obs.clone();
        bad.times = vec![0.0, 0.1, 0.25, 0.3];
        assert!(mk((0.0, 1.0), vec![bad]).is_err());
        let p = mk((0.0, 1.0), vec![obs]).unwrap();
        assert!(p.objective(1.5).is_err());
        assert!(p.estimate(4, 10).is_err());
    }
}

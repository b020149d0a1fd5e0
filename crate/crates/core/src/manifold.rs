//! Random slow manifold `V₀ ↦ H(ω, V₀)` by Lyapunov–Perron iteration on the
//! truncated past window `[−T₋, 0]`, and its leading-order approximation.
//!
//! The quadrature freezes the nonlinearity over each step and integrates it
//! against the exact per-mode kernels. The fast part runs forward from
//! `U(−T₋) = 0`, the slow part runs backward from `V(0) = V₀`; the discrete fixed
//! point is then an exact orbit of the random-system integrator.

use std::io::Write;

use rayon::prelude::*;

use crate::dynamics::{theorem1_bound, ManifoldEvaluator, ModelSpec, Trajectory};
use crate::error::{Error, Result};
use crate::noise::{NoiseRealization, OuPath};
use crate::propagator::{FastPropagator, SlowPropagator};
use crate::scalar::{all_finite, dist2, norm2, Scalar};

/// Settings of the Lyapunov–Perron solve. The quadrature step is the step
/// of the OU paths handed to the solver.
#[derive(Clone, Debug, PartialEq)]
pub struct LpConfig<T> {
    /// Requested past window `T₋`; raised to `3ε ln(1/tol)/μ` when shorter.
    pub t_minus: T,
    /// Stopping tolerance on the weighted sup norm of successive iterates.
    pub tol: T,
    pub max_iter: usize,
    /// Rate `β` of the weight `e^{βt}`, `t ≤ 0`. Defaults to `μ/ε`.
    pub weight_rate: Option<T>,
    /// Solve even when the gap condition fails (logs a warning).
    pub allow_gap_violation: bool,
}

impl<T: Scalar> Default for LpConfig<T> {
    fn default() -> Self {
        Self {
            t_minus: T::zero(),
            tol: T::lit(1e-8),
            max_iter: 50,
            weight_rate: None,
            allow_gap_violation: false,
        }
    }
}

impl<T: Scalar> LpConfig<T> {
    /// Past window actually used for `m`.
    pub fn effective_t_minus(&self, m: &ModelSpec<T>) -> T {
        let minimal = T::lit(3.0) * m.eps() * (T::one() / self.tol).ln() / m.mu();
        self.t_minus.max(minimal)
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero()) {
            return Err(Error::invalid("tol", format!("{} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "need at least one iteration"));
        }
        if !(self.t_minus >= T::zero()) {
            return Err(Error::invalid("t_minus", format!("{} must be nonnegative", self.t_minus)));
        }
        if let Some(b) = self.weight_rate {
            if !(b >= T::zero()) {
                return Err(Error::invalid("weight_rate", format!("{b} must be nonnegative")));
            }
        }
        Ok(())
    }
}

/// Converged Lyapunov–Perron orbit through `V₀` at time 0.
#[derive(Clone, Debug)]
pub struct ManifoldSolution<T> {
    pub v0: Vec<T>,
    /// Fixed point on `[−T₋, 0]` in random coordinates.
    pub path: Trajectory<T>,
    /// `H(ω, V₀)`, the fast component of `path` at `t = 0`.
    pub h_value: Vec<T>,
    /// Number of map applications, the last one confirming convergence.
    pub iterations: usize,
    /// Largest ratio of successive weighted changes.
    pub contraction_estimate: T,
    pub last_change: T,
    pub t_minus: T,
}

/// Lyapunov–Perron solver for one model and grid step, reusable across
/// anchors, realizations and time origins.
#[derive(Clone, Debug)]
pub struct LpSolver<'a, T: Scalar> {
    model: &'a ModelSpec<T>,
    cfg: LpConfig<T>,
    dt: T,
    n: usize,
    fast: FastPropagator<T>,
    slow: SlowPropagator<T>,
    weights: Vec<T>,
}

impl<'a, T: Scalar> LpSolver<'a, T> {
    pub fn new(model: &'a ModelSpec<T>, cfg: &LpConfig<T>, dt: T) -> Result<Self> {
        cfg.validate()?;
        if !model.gap_ok() {
            let msg = format!(
                "K = {} is not below the gap bound {}",
                model.lipschitz(),
                model.op().lambda1() * model.mu()
            );
            if !cfg.allow_gap_violation {
                return Err(Error::HypothesisViolation(msg));
            }
            log::warn!("{msg}; solving anyway");
        }
        let t_minus = cfg.effective_t_minus(model);
        let n = (t_minus / dt).ceil().to_usize().ok_or_else(|| {
            Error::invalid("t_minus", format!("window {t_minus} too long for dt = {dt}"))
        })?;
        let n = n.max(1);
        let fast = FastPropagator::new(model.op(), model.eps(), T::zero(), dt)?;
        let slow = SlowPropagator::new(model.slow_operator(), T::zero(), dt)?;
        let rate = cfg.weight_rate.unwrap_or(model.mu() / model.eps());
        let weights = (0..=n)
            .map(|i| (rate * T::from_i64_lossy(i as i64 - n as i64) * dt).exp())
            .collect();
        Ok(Self {
            model,
            cfg: cfg.clone(),
            dt,
            n,
            fast,
            slow,
            weights,
        })
    }

    pub fn model(&self) -> &ModelSpec<T> {
        self.model
    }

    /// Number of steps in the past window.
    pub fn window_steps(&self) -> usize {
        self.n
    }

    pub fn t_minus(&self) -> T {
        T::from_usize_lossy(self.n) * self.dt
    }

    fn noise_window(&self, eta: &OuPath<T>, xi: &OuPath<T>, origin: i64) -> Result<(Vec<T>, Vec<T>)> {
        for p in [eta, xi] {
            if (p.dt() - self.dt).abs() > self.dt * T::lit(1e-9) {
                return Err(Error::GridMismatch(format!(
                    "OU path step {} differs from the solver step {}",
                    p.dt(),
                    self.dt
                )));
            }
        }
        let start = origin - self.n as i64;
        eta.require_window(start, origin)?;
        xi.require_window(start, origin)?;
        let mut e = Vec::with_capacity((self.n + 1) * eta.dims());
        let mut x = Vec::with_capacity((self.n + 1) * xi.dims());
        for i in start..=origin {
            e.extend_from_slice(eta.at_index(i)?);
            x.extend_from_slice(xi.at_index(i)?);
        }
        Ok((e, x))
    }

    fn zero_path(&self) -> Trajectory<T> {
        let (nf, ns) = (self.model.n_fast(), self.model.n_slow());
        let mut z = Trajectory::with_capacity(nf, ns, self.n + 1);
        let (u, v) = (vec![T::zero(); nf], vec![T::zero(); ns]);
        for i in 0..=self.n {
            z.push(T::from_i64_lossy(i as i64 - self.n as i64) * self.dt, &u, &v);
        }
        z
    }

    /// One application of the map to `z`, written into `out`.
    fn apply(&self, eta: &[T], xi: &[T], v0: &[T], z: &Trajectory<T>, out: &mut Trajectory<T>) {
        let m = self.model;
        let (nf, ns) = (m.n_fast(), m.n_slow());
        let d = m.param();
        let mut ua = vec![T::zero(); nf];
        let mut va = vec![T::zero(); ns];
        let mut f = vec![T::zero(); self.n * nf];
        let mut g = vec![T::zero(); self.n * ns];
        for i in 0..self.n {
            for k in 0..nf {
                ua[k] = z.fast(i)[k] + eta[i * nf + k];
            }
            for c in 0..ns {
                va[c] = z.slow(i)[c] + xi[i * ns + c];
            }
            m.fast_into(&ua, &va, &mut f[i * nf..(i + 1) * nf]);
            m.slow_into(&ua, &va, d, &mut g[i * ns..(i + 1) * ns]);
        }

        out.fast_mut(0).fill(T::zero());
        for i in 0..self.n {
            for k in 0..nf {
                let next = self.fast.decay[k] * out.fast(i)[k] + self.fast.gain[k] * f[i * nf + k];
                out.fast_mut(i + 1)[k] = next;
            }
        }

        out.slow_mut(self.n).copy_from_slice(v0);
        let mut back = vec![T::zero(); ns];
        for i in (0..self.n).rev() {
            self.slow.backward.mul_vec_into(out.slow(i + 1), &mut back);
            let corr = self.slow.backward_gain.mul_vec(&g[i * ns..(i + 1) * ns]);
            let dst = out.slow_mut(i);
            for c in 0..ns {
                dst[c] = back[c] - corr[c];
            }
        }
    }

    /// `max_i w_i (‖Δu_i‖ + ‖Δv_i‖)`.
    fn weighted_distance(&self, a: &Trajectory<T>, b: &Trajectory<T>) -> T {
        (0..=self.n)
            .map(|i| self.weights[i] * (dist2(a.fast(i), b.fast(i)) + dist2(a.slow(i), b.slow(i))))
            .fold(T::zero(), T::max)
    }

    /// One map application on an explicit candidate path.
    pub fn iterate(
        &self,
        eta: &OuPath<T>,
        xi: &OuPath<T>,
        v0: &[T],
        z: &Trajectory<T>,
    ) -> Result<Trajectory<T>> {
        self.check_anchor(v0)?;
        if z.len() != self.n + 1 || z.n_fast() != self.model.n_fast() || z.n_slow() != self.model.n_slow() {
            return Err(Error::GridMismatch(format!(
                "candidate path has {} points, the window needs {}",
                z.len(),
                self.n + 1
            )));
        }
        let (e, x) = self.noise_window(eta, xi, 0)?;
        let mut out = self.zero_path();
        self.apply(&e, &x, v0, z, &mut out);
        Ok(out)
    }

    fn check_anchor(&self, v0: &[T]) -> Result<()> {
        if v0.len() != self.model.n_slow() {
            return Err(Error::invalid(
                "v0",
                format!("{} components for a {}-dimensional slow space", v0.len(), self.model.n_slow()),
            ));
        }
        Ok(())
    }

    /// Solve with the noise seen from time origin 0 of the paths.
    pub fn solve(&self, eta: &OuPath<T>, xi: &OuPath<T>, v0: &[T]) -> Result<ManifoldSolution<T>> {
        self.solve_at(eta, xi, 0, v0)
    }

    /// Solve for the fiber of `θ_t ω` with `t = origin·dt`, without building
    /// shifted paths.
    pub fn solve_at(
        &self,
        eta: &OuPath<T>,
        xi: &OuPath<T>,
        origin: i64,
        v0: &[T],
    ) -> Result<ManifoldSolution<T>> {
        self.check_anchor(v0)?;
        let (e, x) = self.noise_window(eta, xi, origin)?;
        let mut z = self.zero_path();
        let mut next = z.clone();
        let mut prev_change: Option<T> = None;
        let mut contraction = T::zero();
        for it in 1..=self.cfg.max_iter {
            self.apply(&e, &x, v0, &z, &mut next);
            let change = self.weighted_distance(&next, &z);
            std::mem::swap(&mut z, &mut next);
            if !change.is_finite() {
                return Err(Error::NonFinite {
                    context: "lp_solve",
                    time: (T::from_i64_lossy(origin) * self.dt).as_f64(),
                });
            }
            if let Some(p) = prev_change {
                if p > T::zero() {
                    contraction = contraction.max(change / p);
                }
            }
            if change < self.cfg.tol {
                let h_value = z.fast(self.n).to_vec();
                return Ok(ManifoldSolution {
                    v0: v0.to_vec(),
                    path: z,
                    h_value,
                    iterations: it,
                    contraction_estimate: contraction,
                    last_change: change,
                    t_minus: self.t_minus(),
                });
            }
            prev_change = Some(change);
        }
        Err(Error::NotConverged {
            iterations: self.cfg.max_iter,
            last_change: prev_change.unwrap_or(T::nan()).as_f64(),
            contraction: contraction.as_f64(),
        })
    }
}

/// One application of the Lyapunov–Perron map to the candidate `z`.
pub fn lp_iterate<T: Scalar>(
    m: &ModelSpec<T>,
    eta: &OuPath<T>,
    xi: &OuPath<T>,
    v0: &[T],
    z: &Trajectory<T>,
    cfg: &LpConfig<T>,
) -> Result<Trajectory<T>> {
    LpSolver::new(m, cfg, eta.dt())?.iterate(eta, xi, v0, z)
}

/// Fixed point of the Lyapunov–Perron map through `V₀`, from the zero path.
pub fn lp_solve<T: Scalar>(
    m: &ModelSpec<T>,
    eta: &OuPath<T>,
    xi: &OuPath<T>,
    v0: &[T],
    cfg: &LpConfig<T>,
) -> Result<ManifoldSolution<T>> {
    LpSolver::new(m, cfg, eta.dt())?.solve(eta, xi, v0)
}

/// Stationary balance `λ_k H_k = f_k(H + η, V)`, solved by Picard iteration
/// when `f` depends on its fast argument.
pub fn leading_order_graph<T: Scalar>(m: &ModelSpec<T>, eta: &[T], slow: &[T]) -> Result<Vec<T>> {
    let n = m.n_fast();
    let lambda = m.op().eigenvalues();
    let mut arg = eta.to_vec();
    let mut h = vec![T::zero(); n];
    m.fast_into(&arg, slow, &mut h);
    for k in 0..n {
        h[k] = h[k] / lambda[k];
    }
    if !m.coupling().fast_depends_on_u() {
        return Ok(h);
    }
    let lf = m.coupling().lip_fast();
    if lf >= m.op().lambda1() {
        return Err(Error::FixedPointDivergence(format!(
            "L_f = {lf} is not below lambda_1 = {}",
            m.op().lambda1()
        )));
    }
    let mut next = vec![T::zero(); n];
    for _ in 0..1000 {
        for k in 0..n {
            arg[k] = h[k] + eta[k];
        }
        m.fast_into(&arg, slow, &mut next);
        for k in 0..n {
            next[k] = next[k] / lambda[k];
        }
        let change = dist2(&next, &h);
        std::mem::swap(&mut h, &mut next);
        if !all_finite(&h) {
            return Err(Error::FixedPointDivergence("iterate is not finite".into()));
        }
        if change <= T::epsilon() * T::lit(16.0) * (T::one() + norm2(&h)) {
            return Ok(h);
        }
    }
    Err(Error::FixedPointDivergence(
        "no convergence in 1000 iterations".into(),
    ))
}

/// `H⁰(V₀)`: the leading-order graph without noise.
pub fn h0_leading_order<T: Scalar>(m: &ModelSpec<T>, v0: &[T]) -> Result<Vec<T>> {
    if v0.len() != m.n_slow() {
        return Err(Error::invalid("v0", "slow dimension mismatch"));
    }
    leading_order_graph(m, &vec![T::zero(); m.n_fast()], v0)
}

/// `H(θ_t ω, V) ≈ H⁰(V + ξ(θ_t ω))` with the fast OU offset inside `f`.
#[derive(Clone, Copy, Debug)]
pub struct LeadingOrderGraph<'a, T: Scalar> {
    pub model: &'a ModelSpec<T>,
    pub noise: &'a NoiseRealization<T>,
}

impl<T: Scalar> ManifoldEvaluator<T> for LeadingOrderGraph<'_, T> {
    fn evaluate(&self, time_index: i64, slow: &[T], out: &mut [T]) -> Result<()> {
        let xi = self.noise.xi.at_index(time_index)?;
        let arg: Vec<T> = slow.iter().zip(xi).map(|(&a, &b)| a + b).collect();
        let h = leading_order_graph(self.model, self.noise.eta.at_index(time_index)?, &arg)?;
        out.copy_from_slice(&h);
        Ok(())
    }
}

/// Full Lyapunov–Perron solve for every requested fiber.
#[derive(Clone, Debug)]
pub struct LyapunovPerronGraph<'a, T: Scalar> {
    pub solver: LpSolver<'a, T>,
    pub noise: &'a NoiseRealization<T>,
}

impl<T: Scalar> ManifoldEvaluator<T> for LyapunovPerronGraph<'_, T> {
    fn evaluate(&self, time_index: i64, slow: &[T], out: &mut [T]) -> Result<()> {
        let sol = self
            .solver
            .solve_at(&self.noise.eta, &self.noise.xi, time_index, slow)?;
        out.copy_from_slice(&sol.h_value);
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LipschitzReport<T> {
    /// Largest `‖H(V_i) − H(V_{i+1})‖ / ‖V_i − V_{i+1}‖` over adjacent anchors.
    pub measured: T,
    pub theorem1_bound: T,
    pub pass: bool,
    pub solutions: Vec<ManifoldSolution<T>>,
}

/// Solve on every anchor (in parallel) and compare the measured Lipschitz
/// constant of the graph with the closed-form bound, with relative `slack`.
pub fn lipschitz_estimate<T: Scalar>(
    m: &ModelSpec<T>,
    eta: &OuPath<T>,
    xi: &OuPath<T>,
    anchors: &[Vec<T>],
    cfg: &LpConfig<T>,
    slack: T,
) -> Result<LipschitzReport<T>> {
    if anchors.len() < 3 {
        return Err(Error::invalid("v_grid", "need at least three anchors"));
    }
    let solver = LpSolver::new(m, cfg, eta.dt())?;
    let solutions = anchors
        .par_iter()
        .map(|v| solver.solve(eta, xi, v))
        .collect::<Result<Vec<_>>>()?;
    let measured = solutions
        .windows(2)
        .filter_map(|w| {
            let dv = dist2(&w[0].v0, &w[1].v0);
            (dv > T::zero()).then(|| dist2(&w[0].h_value, &w[1].h_value) / dv)
        })
        .fold(T::zero(), T::max);
    let bound = theorem1_bound(m.lipschitz(), m.op().lambda1(), m.gamma2(), m.eps());
    Ok(LipschitzReport {
        measured,
        theorem1_bound: bound,
        pass: measured <= bound * (T::one() + slack),
        solutions,
    })
}

pub const PROFILE_POINTS: usize = 101;

/// `x_j = −1 + 2j/100`, the abscissae of the profile columns.
pub fn profile_abscissae<T: Scalar>() -> Vec<T> {
    (0..PROFILE_POINTS)
        .map(|j| -T::one() + T::lit(2.0) * T::from_usize_lossy(j) / T::from_usize_lossy(PROFILE_POINTS - 1))
        .collect()
}

/// Column names: `v0_1..v0_m, h_1..h_N, profile_0..profile_100`.
pub fn manifold_columns(n_fast: usize, n_slow: usize) -> Vec<String> {
    (1..=n_slow)
        .map(|c| format!("v0_{c}"))
        .chain((1..=n_fast).map(|k| format!("h_{k}")))
        .chain((0..PROFILE_POINTS).map(|j| format!("profile_{j}")))
        .collect()
}

/// One row per solution: anchor, graph coefficients and the reconstructed
/// profile `Σ H_k φ_k(x_j)`.
pub fn write_manifold_csv<T: Scalar, W: Write>(
    m: &ModelSpec<T>,
    rows: &[(Vec<T>, Vec<T>)],
    mut w: W,
) -> Result<()> {
    writeln!(w, "{}", manifold_columns(m.n_fast(), m.n_slow()).join(","))?;
    let xs = profile_abscissae::<T>();
    for (v0, h) in rows {
        let mut fields: Vec<String> = v0.iter().chain(h).map(|x| x.to_string()).collect();
        fields.extend(xs.iter().map(|&x| m.op().reconstruct(h, x).to_string()));
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

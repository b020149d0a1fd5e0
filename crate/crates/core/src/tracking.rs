//! Exponential tracking: project a state onto the random slow manifold and
//! measure how fast the two random-system orbits approach each other.

use std::fmt;
use std::io::Write;

use crate::dynamics::{simulate_random, tracking_prefactor, ModelSpec, Trajectory};
use crate::error::{Error, Result};
use crate::manifold::{LpConfig, LpSolver};
use crate::noise::{grid_index, NoiseRealization};
use crate::propagator::{FastPropagator, SlowPropagator};
use crate::scalar::{dist2, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    /// `Ṽ₀ = V₀`, `Ũ₀ = H(ω, V₀)`.
    Fiber,
    /// Solve the forward difference system on `[0, T]` for the anchor
    /// `Ṽ₀ = V₀ + Y(0)` of the orbit that the trajectory of `Z₀` tracks.
    Forward,
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Projection::Fiber => "fiber",
            Projection::Forward => "forward",
        })
    }
}

impl std::str::FromStr for Projection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fiber" => Ok(Projection::Fiber),
            "forward" => Ok(Projection::Forward),
            _ => Err(Error::invalid("projection", format!("`{s}` is neither fiber nor forward"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrackingConfig<T> {
    pub lp: LpConfig<T>,
    pub projection: Projection,
    /// Relative slack on the envelope.
    pub slack: T,
    /// Gaps at or below this are treated as zero.
    pub floor: T,
    pub forward_tol: T,
    pub forward_max_iter: usize,
}

impl<T: Scalar> Default for TrackingConfig<T> {
    fn default() -> Self {
        Self {
            lp: LpConfig {
                tol: T::lit(1e-12),
                ..LpConfig::default()
            },
            projection: Projection::Forward,
            slack: T::lit(0.1),
            floor: T::lit(1e-12),
            forward_tol: T::lit(1e-12),
            forward_max_iter: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Projected<T> {
    pub fast: Vec<T>,
    pub slow: Vec<T>,
    pub projection: Projection,
    /// Forward fixed-point iterations (0 for the fiber projection).
    pub iterations: usize,
}

/// Point `Z̃₀ = (H(ω, Ṽ₀), Ṽ₀)` on the manifold whose orbit tracks the orbit
/// of `Z₀`. The forward projection integrates both orbits on `[0, horizon]`.
pub fn project_to_manifold<T: Scalar>(
    m: &ModelSpec<T>,
    noise: &NoiseRealization<T>,
    u0: &[T],
    v0: &[T],
    horizon: T,
    cfg: &TrackingConfig<T>,
) -> Result<Projected<T>> {
    let dt = noise.dt();
    let solver = LpSolver::new(m, &cfg.lp, dt)?;
    match cfg.projection {
        Projection::Fiber => {
            let sol = solver.solve(&noise.eta, &noise.xi, v0)?;
            Ok(Projected {
                fast: sol.h_value,
                slow: v0.to_vec(),
                projection: Projection::Fiber,
                iterations: 0,
            })
        }
        Projection::Forward => forward_projection(m, noise, &solver, u0, v0, horizon, cfg),
    }
}

fn forward_projection<T: Scalar>(
    m: &ModelSpec<T>,
    noise: &NoiseRealization<T>,
    solver: &LpSolver<'_, T>,
    u0: &[T],
    v0: &[T],
    horizon: T,
    cfg: &TrackingConfig<T>,
) -> Result<Projected<T>> {
    let dt = noise.dt();
    let reference = simulate_random(m, &noise.eta, &noise.xi, u0, v0, horizon, dt)?;
    let n = reference.len() - 1;
    let (nf, ns) = (m.n_fast(), m.n_slow());
    let d = m.param();
    let fp = FastPropagator::new(m.op(), m.eps(), T::zero(), dt)?;
    let sp = SlowPropagator::new(m.slow_operator(), T::zero(), dt)?;
    let rate = m.mu() / m.eps();
    let weights: Vec<T> = (0..=n)
        .map(|i| (rate * T::from_usize_lossy(i) * dt).exp())
        .collect();

    // drift along the reference orbit
    let mut f_ref = vec![T::zero(); n * nf];
    let mut g_ref = vec![T::zero(); n * ns];
    let mut ua = vec![T::zero(); nf];
    let mut va = vec![T::zero(); ns];
    let load = |i: usize, dx: &[T], dy: &[T], ua: &mut [T], va: &mut [T]| -> Result<()> {
        let eta = noise.eta.at_index(i as i64)?;
        let xi = noise.xi.at_index(i as i64)?;
        for k in 0..nf {
            ua[k] = reference.fast(i)[k] + dx[k] + eta[k];
        }
        for c in 0..ns {
            va[c] = reference.slow(i)[c] + dy[c] + xi[c];
        }
        Ok(())
    };
    let (zx, zy) = (vec![T::zero(); nf], vec![T::zero(); ns]);
    for i in 0..n {
        load(i, &zx, &zy, &mut ua, &mut va)?;
        m.fast_into(&ua, &va, &mut f_ref[i * nf..(i + 1) * nf]);
        m.slow_into(&ua, &va, d, &mut g_ref[i * ns..(i + 1) * ns]);
    }

    let mut x = vec![T::zero(); (n + 1) * nf];
    let mut y = vec![T::zero(); (n + 1) * ns];
    let mut x_new = x.clone();
    let mut y_new = y.clone();
    let mut fdiff = vec![T::zero(); n * nf];
    let mut gdiff = vec![T::zero(); n * ns];
    let mut anchor = v0.to_vec();
    let mut h = vec![T::zero(); nf];
    let mut back = vec![T::zero(); ns];
    for it in 1..=cfg.forward_max_iter {
        for i in 0..n {
            load(i, &x[i * nf..(i + 1) * nf], &y[i * ns..(i + 1) * ns], &mut ua, &mut va)?;
            let fo = &mut fdiff[i * nf..(i + 1) * nf];
            m.fast_into(&ua, &va, fo);
            for k in 0..nf {
                fo[k] = fo[k] - f_ref[i * nf + k];
            }
            let go = &mut gdiff[i * ns..(i + 1) * ns];
            m.slow_into(&ua, &va, d, go);
            for c in 0..ns {
                go[c] = go[c] - g_ref[i * ns + c];
            }
        }
        y_new[n * ns..].fill(T::zero());
        for i in (0..n).rev() {
            sp.backward.mul_vec_into(&y_new[(i + 1) * ns..(i + 2) * ns], &mut back);
            let corr = sp.backward_gain.mul_vec(&gdiff[i * ns..(i + 1) * ns]);
            for c in 0..ns {
                y_new[i * ns + c] = back[c] - corr[c];
            }
        }
        for c in 0..ns {
            anchor[c] = v0[c] + y_new[c];
        }
        h = solver.solve(&noise.eta, &noise.xi, &anchor)?.h_value;
        for k in 0..nf {
            x_new[k] = h[k] - u0[k];
        }
        for i in 0..n {
            for k in 0..nf {
                x_new[(i + 1) * nf + k] = fp.decay[k] * x_new[i * nf + k] + fp.gain[k] * fdiff[i * nf + k];
            }
        }
        let change = (0..=n)
            .map(|i| {
                weights[i]
                    * (dist2(&x_new[i * nf..(i + 1) * nf], &x[i * nf..(i + 1) * nf])
                        + dist2(&y_new[i * ns..(i + 1) * ns], &y[i * ns..(i + 1) * ns]))
            })
            .fold(T::zero(), T::max);
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut y, &mut y_new);
        if !change.is_finite() {
            return Err(Error::NonFinite {
                context: "forward projection",
                time: 0.0,
            });
        }
        if change < cfg.forward_tol {
            return Ok(Projected {
                fast: h,
                slow: anchor,
                projection: Projection::Forward,
                iterations: it,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.forward_max_iter,
        last_change: f64::NAN,
        contraction: f64::NAN,
    })
}

#[derive(Clone, Debug)]
pub struct TrackingReport<T> {
    pub times: Vec<T>,
    pub gaps: Vec<T>,
    /// `prefactor · e^{−(μ/ε)t} · gap(0)`
    pub envelope: Vec<T>,
    /// Least-squares decay rate of `ln gap`, `+∞` when fewer than three
    /// samples are usable.
    pub fitted_rate: T,
    /// `μ/ε`
    pub bound_rate: T,
    pub bound_prefactor: T,
    pub fit_samples: usize,
    /// Every sampled gap lies under the envelope with the configured slack.
    pub envelope_ok: bool,
    pub pass: bool,
    pub projection: Projection,
    pub projected_fast: Vec<T>,
    pub projected_slow: Vec<T>,
    pub trajectory: Trajectory<T>,
    pub tracked: Trajectory<T>,
}

impl<T: Scalar> TrackingReport<T> {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,gap,envelope")?;
        for ((t, g), e) in self.times.iter().zip(&self.gaps).zip(&self.envelope) {
            writeln!(w, "{t},{g},{e}")?;
        }
        Ok(())
    }
}

/// Least-squares slope of `ln y` against `t` for samples with `t ≥ t_min`
/// and `y > floor`, negated. Returns the rate and the sample count.
pub fn fit_decay_rate<T: Scalar>(times: &[T], values: &[T], t_min: T, floor: T) -> (T, usize) {
    let pts: Vec<(T, T)> = times
        .iter()
        .zip(values)
        .filter(|(&t, &y)| t >= t_min && y > floor)
        .map(|(&t, &y)| (t, y.ln()))
        .collect();
    if pts.len() < 3 {
        return (T::infinity(), pts.len());
    }
    let n = T::from_usize_lossy(pts.len());
    let tm = pts.iter().map(|p| p.0).sum::<T>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy: T = pts.iter().map(|&(t, y)| (t - tm) * (y - ym)).sum();
    let sxx: T = pts.iter().map(|&(t, _)| (t - tm) * (t - tm)).sum();
    (-(sxy / sxx), pts.len())
}

/// Run the random system from `Z₀` and from its projection on the same `ω`
/// and compare the gap with the closed-form envelope.
pub fn tracking_verify<T: Scalar>(
    m: &ModelSpec<T>,
    noise: &NoiseRealization<T>,
    u0: &[T],
    v0: &[T],
    t_end: T,
    dt: T,
    cfg: &TrackingConfig<T>,
) -> Result<TrackingReport<T>> {
    m.check_dims(u0, v0)?;
    if grid_index(dt, noise.dt(), "dt")? != 1 {
        return Err(Error::GridMismatch(format!(
            "tracking step {dt} differs from the noise step {}",
            noise.dt()
        )));
    }
    let bound_rate = m.mu() / m.eps();
    let resolvable = T::lit(10.0) / bound_rate;
    if t_end < resolvable * (T::one() - T::lit(1e-9)) {
        log::warn!("T = {t_end} is shorter than 10 eps/mu = {resolvable}; the decay may not be resolved");
    }
    let projected = project_to_manifold(m, noise, u0, v0, t_end, cfg)?;
    let a = simulate_random(m, &noise.eta, &noise.xi, u0, v0, t_end, dt)?;
    let b = simulate_random(
        m,
        &noise.eta,
        &noise.xi,
        &projected.fast,
        &projected.slow,
        t_end,
        dt,
    )?;
    let gaps: Vec<T> = (0..a.len())
        .map(|i| dist2(a.fast(i), b.fast(i)) + dist2(a.slow(i), b.slow(i)))
        .collect();
    let prefactor = tracking_prefactor(m.lipschitz(), m.op().lambda1(), m.gamma2(), m.eps());
    let times = a.times().to_vec();
    let envelope: Vec<T> = times
        .iter()
        .map(|&t| prefactor * (-bound_rate * t).exp() * gaps[0])
        .collect();
    let envelope_ok = gaps
        .iter()
        .zip(&envelope)
        .all(|(&g, &e)| g <= cfg.floor || g <= e * (T::one() + cfg.slack));
    let (fitted_rate, fit_samples) =
        fit_decay_rate(&times, &gaps, T::lit(2.0) / bound_rate, cfg.floor);
    Ok(TrackingReport {
        times,
        gaps,
        envelope,
        fitted_rate,
        bound_rate,
        bound_prefactor: prefactor,
        fit_samples,
        envelope_ok,
        pass: envelope_ok && fitted_rate >= bound_rate * T::lit(0.9),
        projection: projected.projection,
        projected_fast: projected.fast,
        projected_slow: projected.slow,
        trajectory: a,
        tracked: b,
    })
}

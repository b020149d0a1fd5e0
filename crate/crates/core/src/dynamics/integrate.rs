use std::io::Write;

use super::model::ModelSpec;
use crate::error::{Error, Result};
use crate::noise::{grid_index, NoiseRealization, OuPath, WienerPath};
use crate::propagator::{FastPropagator, SlowPropagator};
use crate::scalar::{all_finite, Scalar};

/// Sampled solution: per-time fast coefficients and slow state, flat storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    n_fast: usize,
    n_slow: usize,
    times: Vec<T>,
    fast: Vec<T>,
    slow: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn with_capacity(n_fast: usize, n_slow: usize, points: usize) -> Self {
        Self {
            n_fast,
            n_slow,
            times: Vec::with_capacity(points),
            fast: Vec::with_capacity(points * n_fast),
            slow: Vec::with_capacity(points * n_slow),
        }
    }

    pub fn push(&mut self, t: T, u: &[T], v: &[T]) {
        debug_assert_eq!(u.len(), self.n_fast);
        debug_assert_eq!(v.len(), self.n_slow);
        self.times.push(t);
        self.fast.extend_from_slice(u);
        self.slow.extend_from_slice(v);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_fast(&self) -> usize {
        self.n_fast
    }

    pub fn n_slow(&self) -> usize {
        self.n_slow
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn fast(&self, i: usize) -> &[T] {
        &self.fast[i * self.n_fast..(i + 1) * self.n_fast]
    }

    pub fn slow(&self, i: usize) -> &[T] {
        &self.slow[i * self.n_slow..(i + 1) * self.n_slow]
    }

    pub(crate) fn fast_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.fast[i * self.n_fast..(i + 1) * self.n_fast]
    }

    pub(crate) fn slow_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.slow[i * self.n_slow..(i + 1) * self.n_slow]
    }

    pub fn last_fast(&self) -> &[T] {
        self.fast(self.len() - 1)
    }

    pub fn last_slow(&self) -> &[T] {
        self.slow(self.len() - 1)
    }

    /// Column names: `time, u_1..u_N, v_1..v_m`.
    pub fn columns(n_fast: usize, n_slow: usize) -> Vec<String> {
        std::iter::once("time".to_string())
            .chain((1..=n_fast).map(|k| format!("u_{k}")))
            .chain((1..=n_slow).map(|k| format!("v_{k}")))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", Self::columns(self.n_fast, self.n_slow).join(","))?;
        for i in 0..self.len() {
            write!(w, "{}", self.times[i])?;
            for x in self.fast(i).iter().chain(self.slow(i)) {
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Graph `V ↦ H(θ_t ω, V)` in random coordinates, sampled at grid time
/// index `i` (time `i·dt`).
pub trait ManifoldEvaluator<T: Scalar>: Sync {
    fn evaluate(&self, time_index: i64, slow: &[T], out: &mut [T]) -> Result<()>;
}

fn step_count<T: Scalar>(t_end: T, dt: T) -> Result<usize> {
    if !(dt > T::zero()) {
        return Err(Error::invalid("dt", format!("{dt} must be positive")));
    }
    if !(t_end > T::zero()) {
        return Err(Error::invalid("T", format!("{t_end} must be positive")));
    }
    let n = grid_index(t_end, dt, "T")?;
    Ok(n as usize)
}

fn warn_if_coarse<T: Scalar>(m: &ModelSpec<T>, dt: T) {
    let resolved = m.eps() / m.op().lambda_max();
    if dt > resolved {
        log::warn!(
            "dt = {dt} exceeds eps/lambda_N = {resolved}; the highest fast modes are under-resolved"
        );
    }
}

fn check_finite<T: Scalar>(context: &'static str, t: T, u: &[T], v: &[T]) -> Result<()> {
    if all_finite(u) && all_finite(v) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            context,
            time: t.as_f64(),
        })
    }
}

/// Integrate the stochastic system on `[0, T]` with exponential
/// Euler–Maruyama. `dt` must be a whole multiple of the noise step; the
/// Wiener increments are summed accordingly.
pub fn simulate_full<T: Scalar>(
    m: &ModelSpec<T>,
    noise: &NoiseRealization<T>,
    u0: &[T],
    v0: &[T],
    t_end: T,
    dt: T,
) -> Result<Trajectory<T>> {
    m.check_dims(u0, v0)?;
    let n = step_count(t_end, dt)?;
    let ratio = grid_index(dt, noise.dt(), "dt")?;
    if ratio < 1 {
        return Err(Error::GridMismatch(format!(
            "dt = {dt} is finer than the noise step {}",
            noise.dt()
        )));
    }
    let (wf, ws) = if ratio == 1 {
        (noise.w_fast.clone(), noise.w_slow.clone())
    } else {
        (
            noise.w_fast.coarsen(ratio as usize)?,
            noise.w_slow.coarsen(ratio as usize)?,
        )
    };
    integrate_full(m, &wf, &ws, u0, v0, n, dt)
}

fn integrate_full<T: Scalar>(
    m: &ModelSpec<T>,
    wf: &WienerPath<T>,
    ws: &WienerPath<T>,
    u0: &[T],
    v0: &[T],
    n: usize,
    dt: T,
) -> Result<Trajectory<T>> {
    wf.increment(n as i64 - 1)?;
    ws.increment(0)?;
    ws.increment(n as i64 - 1)?;
    warn_if_coarse(m, dt);
    let fp = FastPropagator::new(m.op(), m.eps(), m.sigma1(), dt)?;
    let sp = SlowPropagator::new(m.slow_operator(), m.sigma2(), dt)?;
    let (nf, ns) = (m.n_fast(), m.n_slow());
    let d = m.param();

    let mut traj = Trajectory::with_capacity(nf, ns, n + 1);
    let mut u = u0.to_vec();
    let mut v = v0.to_vec();
    let mut f = vec![T::zero(); nf];
    let mut g = vec![T::zero(); ns];
    let mut v_next = vec![T::zero(); ns];
    traj.push(T::zero(), &u, &v);
    for i in 0..n {
        m.fast_into(&u, &v, &mut f);
        m.slow_into(&u, &v, d, &mut g);
        let dw1 = wf.increment(i as i64)?;
        let dw2 = ws.increment(i as i64)?;
        for k in 0..nf {
            u[k] = fp.decay[k] * u[k] + fp.gain[k] * f[k] + fp.noise[k] * dw1[k];
        }
        sp.forward.mul_vec_into(&v, &mut v_next);
        sp.forward_gain.mul_vec_add(&g, &mut v_next);
        sp.noise.mul_vec_add(dw2, &mut v_next);
        std::mem::swap(&mut v, &mut v_next);
        let t = T::from_usize_lossy(i + 1) * dt;
        check_finite("simulate_full", t, &u, &v)?;
        traj.push(t, &u, &v);
    }
    Ok(traj)
}

/// Integrate the random system driven by the OU paths: drift arguments are
/// shifted by `η(θ_t ω)` and `ξ(θ_t ω)`, no direct noise forcing.
/// `dt` must equal the OU grid step.
pub fn simulate_random<T: Scalar>(
    m: &ModelSpec<T>,
    eta: &OuPath<T>,
    xi: &OuPath<T>,
    u0: &[T],
    v0: &[T],
    t_end: T,
    dt: T,
) -> Result<Trajectory<T>> {
    m.check_dims(u0, v0)?;
    let n = step_count(t_end, dt)?;
    check_same_step(eta, dt)?;
    check_same_step(xi, dt)?;
    eta.require_window(0, n as i64)?;
    xi.require_window(0, n as i64)?;
    warn_if_coarse(m, dt);
    let fp = FastPropagator::new(m.op(), m.eps(), T::zero(), dt)?;
    let sp = SlowPropagator::new(m.slow_operator(), T::zero(), dt)?;
    let (nf, ns) = (m.n_fast(), m.n_slow());
    let d = m.param();

    let mut traj = Trajectory::with_capacity(nf, ns, n + 1);
    let mut u = u0.to_vec();
    let mut v = v0.to_vec();
    let mut ua = vec![T::zero(); nf];
    let mut va = vec![T::zero(); ns];
    let mut f = vec![T::zero(); nf];
    let mut g = vec![T::zero(); ns];
    let mut v_next = vec![T::zero(); ns];
    traj.push(T::zero(), &u, &v);
    for i in 0..n {
        shifted(&u, eta.at_index(i as i64)?, &mut ua);
        shifted(&v, xi.at_index(i as i64)?, &mut va);
        m.fast_into(&ua, &va, &mut f);
        m.slow_into(&ua, &va, d, &mut g);
        for k in 0..nf {
            u[k] = fp.decay[k] * u[k] + fp.gain[k] * f[k];
        }
        sp.forward.mul_vec_into(&v, &mut v_next);
        sp.forward_gain.mul_vec_add(&g, &mut v_next);
        std::mem::swap(&mut v, &mut v_next);
        let t = T::from_usize_lossy(i + 1) * dt;
        check_finite("simulate_random", t, &u, &v)?;
        traj.push(t, &u, &v);
    }
    Ok(traj)
}

/// Integrate the reduced slow equation
/// `dv̄ = (J v̄ + g(H(θ_t ω, v̄ − ξ) + η, v̄, d)) dt + σ₂ dW²`
/// in original coordinates. The returned fast part is `H + η`.
pub fn simulate_reduced<T: Scalar>(
    m: &ModelSpec<T>,
    graph: &dyn ManifoldEvaluator<T>,
    noise: &NoiseRealization<T>,
    v0: &[T],
    d: T,
    t_end: T,
    dt: T,
) -> Result<Trajectory<T>> {
    let (nf, ns) = (m.n_fast(), m.n_slow());
    if v0.len() != ns {
        return Err(Error::invalid(
            "v0",
            format!("{} slow components for a {ns}-dimensional slow space", v0.len()),
        ));
    }
    let n = step_count(t_end, dt)?;
    check_same_step(&noise.eta, dt)?;
    noise.eta.require_window(0, n as i64)?;
    noise.xi.require_window(0, n as i64)?;
    noise.w_slow.increment(n as i64 - 1)?;
    let sp = SlowPropagator::new(m.slow_operator(), m.sigma2(), dt)?;

    let mut traj = Trajectory::with_capacity(nf, ns, n + 1);
    let mut v = v0.to_vec();
    let mut rel = vec![T::zero(); ns];
    let mut u = vec![T::zero(); nf];
    let mut g = vec![T::zero(); ns];
    let mut v_next = vec![T::zero(); ns];
    for i in 0..=n {
        let idx = i as i64;
        let xi = noise.xi.at_index(idx)?;
        for c in 0..ns {
            rel[c] = v[c] - xi[c];
        }
        graph.evaluate(idx, &rel, &mut u)?;
        for (uk, &e) in u.iter_mut().zip(noise.eta.at_index(idx)?) {
            *uk = *uk + e;
        }
        let t = T::from_usize_lossy(i) * dt;
        check_finite("simulate_reduced", t, &u, &v)?;
        traj.push(t, &u, &v);
        if i == n {
            break;
        }
        m.slow_into(&u, &v, d, &mut g);
        sp.forward.mul_vec_into(&v, &mut v_next);
        sp.forward_gain.mul_vec_add(&g, &mut v_next);
        sp.noise.mul_vec_add(noise.w_slow.increment(idx)?, &mut v_next);
        std::mem::swap(&mut v, &mut v_next);
    }
    Ok(traj)
}

fn shifted<T: Scalar>(x: &[T], shift: &[T], out: &mut [T]) {
    for ((o, &a), &b) in out.iter_mut().zip(x).zip(shift) {
        *o = a + b;
    }
}

fn check_same_step<T: Scalar>(path: &OuPath<T>, dt: T) -> Result<()> {
    if grid_index(dt, path.dt(), "dt")? != 1 {
        return Err(Error::GridMismatch(format!(
            "integration step {dt} differs from the OU path step {}",
            path.dt()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::dynamics::FnCoupling;

    fn linear_model(s1: f64, s2: f64) -> ModelSpec<f64> {
        ModelSpec::example2(1.2, 0.01, s1, s2, 4, 1.0)
            .unwrap()
            .with_coupling(Arc::new(FnCoupling::zero()))
    }

    #[test]
    fn linear_decay_is_exact_on_grid() {
        let m = linear_model(0.0, 0.0);
        let noise = NoiseRealization::generate(&m, 0.0, 0.1, 1e-3, 1).unwrap();
        let u0 = [1.0, 0.0, 0.0, 0.0];
        let tr = simulate_full(&m, &noise, &u0, &[0.7], 0.1, 1e-3).unwrap();
        let l1 = m.op().lambda1();
        for i in 0..tr.len() {
            let t = tr.times()[i];
            let exact = (-l1 * t / 0.01).exp();
            assert!((tr.fast(i)[0] - exact).abs() <= 1e-13 * exact.max(1e-300) + 1e-300);
            assert!((tr.slow(i)[0] - 0.7 * (-t).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn random_system_with_zero_coupling_is_exact() {
        let m = linear_model(0.1, 0.1);
        let noise = NoiseRealization::generate(&m, 0.0, 0.5, 1e-3, 2).unwrap();
        let tr = simulate_random(&m, &noise.eta, &noise.xi, &[0.0; 4], &[1.5], 0.5, 1e-3).unwrap();
        for i in 0..tr.len() {
            let t = tr.times()[i];
            assert!((tr.slow(i)[0] - 1.5 * (-t).exp()).abs() < 1e-13);
            assert!(tr.fast(i).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let m = ModelSpec::example2(1.2f64, 0.01, 0.1, 0.1, 4, 1.0).unwrap();
        let noise = NoiseRealization::generate(&m, 0.0, 0.1, 1e-3, 2).unwrap();
        assert!(simulate_full(&m, &noise, &[0.0; 3], &[0.0], 0.1, 1e-3).is_err());
        assert!(simulate_full(&m, &noise, &[0.0; 4], &[0.0], 0.2, 1e-3).is_err());
        assert!(simulate_full(&m, &noise, &[0.0; 4], &[0.0], 0.1, 5e-4).is_err());
        assert!(simulate_random(&m, &noise.eta, &noise.xi, &[0.0; 4], &[0.0], 0.1, 2e-3).is_err());
    }

    #[test]
    fn nan_is_reported() {
        let blowup = FnCoupling::new(
            |_, _, o: &mut [f64]| o.fill(f64::NAN),
            |_, _, _, o: &mut [f64]| o.fill(0.0),
            0.0,
            0.0,
        );
        let m = ModelSpec::example2(1.2f64, 0.01, 0.0, 0.0, 2, 1.0)
            .unwrap()
            .with_coupling(Arc::new(blowup));
        let noise = NoiseRealization::generate(&m, 0.0, 0.1, 1e-3, 2).unwrap();
        let e = simulate_full(&m, &noise, &[0.0; 2], &[0.0], 0.1, 1e-3).unwrap_err();
        assert!(matches!(e, Error::NonFinite { .. }));
    }

    #[test]
    fn trajectory_csv_header() {
        let mut t = Trajectory::with_capacity(2, 1, 1);
        t.push(0.0f64, &[1.0, 2.0], &[3.0]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "time,u_1,u_2,v_1\n0,1,2,3\n");
    }
}

//! Plain Euler–Maruyama for the full system, kept deliberately simple as an
//! independent discretization to cross-check the exponential integrators.

use super::integrate::Trajectory;
use super::model::ModelSpec;
use crate::error::{Error, Result};
use crate::noise::{grid_index, WienerPath};
use crate::scalar::Scalar;

/// Step on the Wiener grid of `w_fast`/`w_slow` and record every `record_dt`.
pub fn euler_maruyama<T: Scalar>(
    m: &ModelSpec<T>,
    w_fast: &WienerPath<T>,
    w_slow: &WienerPath<T>,
    u0: &[T],
    v0: &[T],
    t_end: T,
    record_dt: T,
) -> Result<Trajectory<T>> {
    m.check_dims(u0, v0)?;
    let dt = w_fast.dt();
    if grid_index(dt, w_slow.dt(), "dt")? != 1 {
        return Err(Error::GridMismatch("Wiener paths use different steps".into()));
    }
    let n = grid_index(t_end, dt, "T")? as usize;
    let every = grid_index(record_dt, dt, "record_dt")?.max(1) as usize;
    let (nf, ns) = (m.n_fast(), m.n_slow());
    let lambda = m.op().eigenvalues();
    let j = m.slow_operator();
    let inv_eps = T::one() / m.eps();
    let fast_noise = m.sigma1() / m.eps().sqrt();

    let mut traj = Trajectory::with_capacity(nf, ns, n / every + 1);
    let mut u = u0.to_vec();
    let mut v = v0.to_vec();
    let mut f = vec![T::zero(); nf];
    let mut g = vec![T::zero(); ns];
    traj.push(T::zero(), &u, &v);
    for i in 0..n {
        m.fast_into(&u, &v, &mut f);
        m.slow_into(&u, &v, m.param(), &mut g);
        let dw1 = w_fast.increment(i as i64)?;
        let dw2 = w_slow.increment(i as i64)?;
        let jv = j.mul_vec(&v);
        for k in 0..nf {
            u[k] = u[k] + dt * inv_eps * (f[k] - lambda[k] * u[k]) + fast_noise * dw1[k];
        }
        for c in 0..ns {
            v[c] = v[c] + dt * (jv[c] + g[c]) + m.sigma2() * dw2[c];
        }
        if (i + 1) % every == 0 {
            traj.push(T::from_usize_lossy(i + 1) * dt, &u, &v);
        }
    }
    Ok(traj)
}

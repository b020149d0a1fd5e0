//! Two-sided Wiener paths and the stationary Ornstein–Uhlenbeck solutions
//! `η^ε` (fast) and `ξ` (slow).
//!
//! Every path lives on an integer grid: point `j` of a path sits at time
//! `(first + j)·dt`. The metric dynamical system shift `θ_s` only moves
//! `first`, so shifted paths share storage with the original and compose
//! bit-exactly.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::ModelSpec;
use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::propagator::{FastPropagator, SlowPropagator};
use crate::scalar::Scalar;
use crate::spectral::SpectralOperator;

/// Round `t/dt` to the grid, rejecting times that are not grid points.
pub(crate) fn grid_index<T: Scalar>(t: T, dt: T, name: &'static str) -> Result<i64> {
    let r = (t / dt).round();
    let tol = T::lit(1e-6).max(r.abs() * T::epsilon() * T::lit(8.0));
    if ((t / dt) - r).abs() > tol {
        return Err(Error::GridMismatch(format!(
            "{name} = {t} is not a multiple of dt = {dt}"
        )));
    }
    r.to_i64()
        .ok_or_else(|| Error::invalid(name, format!("{t} overflows the time grid")))
}

/// Grid shared by every path: `first` index, step and point count.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Grid<T> {
    first: i64,
    dt: T,
    n_steps: usize,
}

impl<T: Scalar> Grid<T> {
    fn time(&self, i: i64) -> T {
        T::from_i64_lossy(i) * self.dt
    }

    fn last(&self) -> i64 {
        self.first + self.n_steps as i64
    }

    fn out_of_window(&self, i: i64) -> Error {
        Error::OutOfWindow {
            requested: self.time(i).as_f64(),
            start: self.time(self.first).as_f64(),
            end: self.time(self.last()).as_f64(),
        }
    }

    /// Array offset of time index `i`, when it is a grid point of the path.
    fn point(&self, i: i64) -> Result<usize> {
        if i < self.first || i > self.last() {
            return Err(self.out_of_window(i));
        }
        Ok((i - self.first) as usize)
    }

    fn shifted(&self, s: T) -> Result<Self> {
        let k = grid_index(s, self.dt, "shift")?;
        let g = Grid {
            first: self.first - k,
            ..*self
        };
        // the shifted path must still contain its own time origin
        if g.first > 0 || g.last() < 0 {
            return Err(self.out_of_window(k));
        }
        Ok(g)
    }
}

/// Discretized two-sided Wiener process of dimension `dims`.
#[derive(Clone, Debug)]
pub struct WienerPath<T> {
    grid: Grid<T>,
    dims: usize,
    seed: u64,
    /// `n_steps × dims`, row `j` is the increment from point `j` to `j+1`.
    increments: Arc<[T]>,
    /// `(n_steps+1) × dims` running sums from the first point.
    prefix: Arc<[T]>,
    /// Standard normals reserved for stationary initialisation of OU paths.
    initial_normals: Arc<[T]>,
}

impl<T: Scalar> WienerPath<T> {
    /// Seeded path on `[t0, t1]`; both endpoints must be multiples of `dt`.
    pub fn generate(t0: T, t1: T, dt: T, dims: usize, seed: u64) -> Result<Self> {
        Self::generate_stream(t0, t1, dt, dims, seed, 0)
    }

    /// Same as [`generate`](Self::generate) on an independent ChaCha stream.
    pub fn generate_stream(
        t0: T,
        t1: T,
        dt: T,
        dims: usize,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::invalid("dt", format!("{dt} must be positive")));
        }
        if !(t0 < t1) {
            return Err(Error::invalid("t0", format!("need t0 < t1, got [{t0}, {t1}]")));
        }
        if dims == 0 {
            return Err(Error::invalid("dims", "need at least one component"));
        }
        let first = grid_index(t0, dt, "t0")?;
        let last = grid_index(t1, dt, "t1")?;
        let n_steps = (last - first) as usize;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let initial_normals: Vec<T> = (0..dims).map(|_| T::standard_normal(&mut rng)).collect();
        let sqdt = dt.sqrt();
        let increments: Vec<T> = (0..n_steps * dims)
            .map(|_| T::standard_normal(&mut rng) * sqdt)
            .collect();
        Ok(Self::from_increments(
            Grid { first, dt, n_steps },
            dims,
            seed,
            increments,
            initial_normals,
        ))
    }

    fn from_increments(
        grid: Grid<T>,
        dims: usize,
        seed: u64,
        increments: Vec<T>,
        initial_normals: Vec<T>,
    ) -> Self {
        let mut prefix = vec![T::zero(); (grid.n_steps + 1) * dims];
        for j in 0..grid.n_steps {
            for d in 0..dims {
                prefix[(j + 1) * dims + d] = prefix[j * dims + d] + increments[j * dims + d];
            }
        }
        Self {
            grid,
            dims,
            seed,
            increments: increments.into(),
            prefix: prefix.into(),
            initial_normals: initial_normals.into(),
        }
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn dt(&self) -> T {
        self.grid.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    pub fn t0(&self) -> T {
        self.grid.time(self.grid.first)
    }

    pub fn t1(&self) -> T {
        self.grid.time(self.grid.last())
    }

    /// Grid index of the first point (`t0 = first·dt`).
    pub fn first_index(&self) -> i64 {
        self.grid.first
    }

    pub fn initial_normals(&self) -> &[T] {
        &self.initial_normals
    }

    /// All increments, row-major `n_steps × dims`.
    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    /// Increment over `[i·dt, (i+1)·dt]`.
    pub fn increment(&self, i: i64) -> Result<&[T]> {
        if i + 1 > self.grid.last() {
            return Err(self.grid.out_of_window(i + 1));
        }
        let j = self.grid.point(i)?;
        Ok(&self.increments[j * self.dims..(j + 1) * self.dims])
    }

    /// `W(i·dt) − W(0)`.
    pub fn value_at_index(&self, i: i64) -> Result<Vec<T>> {
        let j = self.grid.point(i)?;
        let j0 = self.grid.point(0)?;
        Ok((0..self.dims)
            .map(|d| self.prefix[j * self.dims + d] - self.prefix[j0 * self.dims + d])
            .collect())
    }

    pub fn value(&self, t: T) -> Result<Vec<T>> {
        self.value_at_index(grid_index(t, self.grid.dt, "t")?)
    }

    /// `θ_s ω = ω(· + s) − ω(s)`.
    pub fn shift(&self, s: T) -> Result<Self> {
        Ok(Self {
            grid: self.grid.shifted(s)?,
            ..self.clone()
        })
    }

    /// Sum groups of `k` increments, giving the same path sampled at `k·dt`.
    pub fn coarsen(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k", "coarsening factor must be positive"));
        }
        if k == 1 {
            return Ok(self.clone());
        }
        let ki = k as i64;
        if self.grid.first % ki != 0 || !self.grid.n_steps.is_multiple_of(k) {
            return Err(Error::GridMismatch(format!(
                "window of {} steps from index {} cannot be coarsened by {k}",
                self.grid.n_steps, self.grid.first
            )));
        }
        let n = self.grid.n_steps / k;
        let mut inc = vec![T::zero(); n * self.dims];
        for j in 0..n {
            for d in 0..self.dims {
                inc[j * self.dims + d] = self.prefix[(j + 1) * k * self.dims + d]
                    - self.prefix[j * k * self.dims + d];
            }
        }
        Ok(Self::from_increments(
            Grid {
                first: self.grid.first / ki,
                dt: self.grid.dt * T::from_usize_lossy(k),
                n_steps: n,
            },
            self.dims,
            self.seed,
            inc,
            self.initial_normals.to_vec(),
        ))
    }

    /// Long-format dump of `W(t) − W(0)`: `time,mode,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,mode,value")?;
        for i in self.grid.first..=self.grid.last() {
            let v = self.value_at_index(i)?;
            let t = self.grid.time(i);
            for (d, x) in v.iter().enumerate() {
                writeln!(w, "{t},{},{x}", d + 1)?;
            }
        }
        Ok(())
    }
}

/// Linear part of an OU path.
#[derive(Clone, Debug)]
pub enum OuGenerator<T> {
    /// Diagonal decay rates, `λ_k/ε` for the fast path.
    Diagonal { rates: Vec<T> },
    /// Full slow operator `J`.
    Matrix { generator: SquareMatrix<T> },
}

/// Stationary Ornstein–Uhlenbeck sample path.
#[derive(Clone, Debug)]
pub struct OuPath<T> {
    grid: Grid<T>,
    dims: usize,
    values: Arc<[T]>,
    generator: OuGenerator<T>,
    noise_scale: T,
}

impl<T: Scalar> OuPath<T> {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn dt(&self) -> T {
        self.grid.dt
    }

    pub fn t0(&self) -> T {
        self.grid.time(self.grid.first)
    }

    pub fn t1(&self) -> T {
        self.grid.time(self.grid.last())
    }

    pub fn first_index(&self) -> i64 {
        self.grid.first
    }

    pub fn last_index(&self) -> i64 {
        self.grid.last()
    }

    pub fn generator(&self) -> &OuGenerator<T> {
        &self.generator
    }

    /// Decay rates for diagonal generators, `None` for a full matrix.
    pub fn rates(&self) -> Option<&[T]> {
        match &self.generator {
            OuGenerator::Diagonal { rates } => Some(rates),
            OuGenerator::Matrix { .. } => None,
        }
    }

    /// `σ₁/√ε` for the fast path, `σ₂` for the slow path.
    pub fn noise_scale(&self) -> T {
        self.noise_scale
    }

    /// Value at time `i·dt`.
    pub fn at_index(&self, i: i64) -> Result<&[T]> {
        let j = self.grid.point(i)?;
        Ok(&self.values[j * self.dims..(j + 1) * self.dims])
    }

    pub fn at(&self, t: T) -> Result<&[T]> {
        self.at_index(grid_index(t, self.grid.dt, "t")?)
    }

    /// Check that `[ia, ib]` (time indices) is covered.
    pub fn require_window(&self, ia: i64, ib: i64) -> Result<()> {
        self.grid.point(ia)?;
        self.grid.point(ib)?;
        Ok(())
    }

    /// `s ↦ p(θ_s ω)`: the shifted path at time `t` is the original at `t + s`.
    pub fn shift(&self, s: T) -> Result<Self> {
        Ok(Self {
            grid: self.grid.shifted(s)?,
            ..self.clone()
        })
    }

    /// Copy of the path with every value set to zero, on the same grid.
    pub fn zeroed(&self) -> Self {
        Self {
            values: vec![T::zero(); self.values.len()].into(),
            ..self.clone()
        }
    }

    /// Long-format dump: `time,mode,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time,mode,value")?;
        for i in self.grid.first..=self.grid.last() {
            let t = self.grid.time(i);
            for (d, x) in self.at_index(i)?.iter().enumerate() {
                writeln!(w, "{t},{},{x}", d + 1)?;
            }
        }
        Ok(())
    }
}

/// Stationary solution of `dη = (1/ε) A_α η dt + (σ₁/√ε) dW¹` on the grid of
/// `path`, by the exact OU recursion with a stationary initial draw.
pub fn ou_fast_stationary<T: Scalar>(
    op: &SpectralOperator<T>,
    eps: T,
    sigma1: T,
    path: &WienerPath<T>,
) -> Result<OuPath<T>> {
    let n = op.n_modes();
    if path.dims() != n {
        return Err(Error::GridMismatch(format!(
            "fast Wiener path has {} components, operator has {n} modes",
            path.dims()
        )));
    }
    let prop = FastPropagator::new(op, eps, sigma1, path.dt())?;
    let steps = path.n_steps();
    let mut values = vec![T::zero(); (steps + 1) * n];
    for k in 0..n {
        values[k] = prop.stationary_std[k] * path.initial_normals()[k];
    }
    let inc = path.increments();
    for j in 0..steps {
        for k in 0..n {
            values[(j + 1) * n + k] =
                prop.decay[k] * values[j * n + k] + prop.noise[k] * inc[j * n + k];
        }
    }
    Ok(OuPath {
        grid: path.grid,
        dims: n,
        values: values.into(),
        generator: OuGenerator::Diagonal {
            rates: op.eigenvalues().iter().map(|&l| l / eps).collect(),
        },
        noise_scale: sigma1 / eps.sqrt(),
    })
}

/// Stationary solution of `dξ = J ξ dt + σ₂ dW²`.
pub fn ou_slow_stationary<T: Scalar>(
    j: &SquareMatrix<T>,
    sigma2: T,
    path: &WienerPath<T>,
) -> Result<OuPath<T>> {
    let m = j.dim();
    if path.dims() != m {
        return Err(Error::GridMismatch(format!(
            "slow Wiener path has {} components, J is {m}x{m}",
            path.dims()
        )));
    }
    let prop = SlowPropagator::new(j, sigma2, path.dt())?;
    let steps = path.n_steps();
    let mut values = vec![T::zero(); (steps + 1) * m];
    prop.stationary_factor
        .mul_vec_into(path.initial_normals(), &mut values[..m]);
    let inc = path.increments();
    for s in 0..steps {
        let (head, tail) = values.split_at_mut((s + 1) * m);
        let cur = &head[s * m..];
        let next = &mut tail[..m];
        prop.forward.mul_vec_into(cur, next);
        prop.noise.mul_vec_add(&inc[s * m..(s + 1) * m], next);
    }
    Ok(OuPath {
        grid: path.grid,
        dims: m,
        values: values.into(),
        generator: match diagonal_of(j) {
            Some(rates) => OuGenerator::Diagonal { rates },
            None => OuGenerator::Matrix {
                generator: j.clone(),
            },
        },
        noise_scale: sigma2,
    })
}

fn diagonal_of<T: Scalar>(j: &SquareMatrix<T>) -> Option<Vec<T>> {
    let m = j.dim();
    for r in 0..m {
        for c in 0..m {
            if r != c && j[(r, c)] != T::zero() {
                return None;
            }
        }
    }
    Some((0..m).map(|i| -j[(i, i)]).collect())
}

/// One noise realization `ω = (ω₁, ω₂)`: both Wiener paths and the derived
/// stationary OU paths, all on a common grid.
#[derive(Clone, Debug)]
pub struct NoiseRealization<T> {
    pub seed: u64,
    pub w_fast: WienerPath<T>,
    pub w_slow: WienerPath<T>,
    pub eta: OuPath<T>,
    pub xi: OuPath<T>,
}

impl<T: Scalar> NoiseRealization<T> {
    /// Generate `ω` on `[t0, t1]` for `model`. The fast and slow Wiener
    /// processes use independent ChaCha streams of the same seed.
    pub fn generate(model: &ModelSpec<T>, t0: T, t1: T, dt: T, seed: u64) -> Result<Self> {
        let w_fast = WienerPath::generate_stream(t0, t1, dt, model.n_fast(), seed, 0)?;
        let w_slow = WienerPath::generate_stream(t0, t1, dt, model.n_slow(), seed, 1)?;
        Self::from_wiener(model, w_fast, w_slow)
    }

    pub fn from_wiener(
        model: &ModelSpec<T>,
        w_fast: WienerPath<T>,
        w_slow: WienerPath<T>,
    ) -> Result<Self> {
        if w_fast.grid != w_slow.grid {
            return Err(Error::GridMismatch(
                "fast and slow Wiener paths live on different grids".into(),
            ));
        }
        let eta = ou_fast_stationary(model.op(), model.eps(), model.sigma1(), &w_fast)?;
        let xi = ou_slow_stationary(model.slow_operator(), model.sigma2(), &w_slow)?;
        Ok(Self {
            seed: w_fast.seed(),
            w_fast,
            w_slow,
            eta,
            xi,
        })
    }

    pub fn dt(&self) -> T {
        self.eta.dt()
    }

    /// `θ_s ω` for all four paths.
    pub fn shift(&self, s: T) -> Result<Self> {
        Ok(Self {
            seed: self.seed,
            w_fast: self.w_fast.shift(s)?,
            w_slow: self.w_slow.shift(s)?,
            eta: self.eta.shift(s)?,
            xi: self.xi.shift(s)?,
        })
    }

    /// Same paths re-sampled at `k·dt` (Wiener increments summed, OU paths
    /// regenerated with the coarse exact recursion).
    pub fn coarsen(&self, model: &ModelSpec<T>, k: usize) -> Result<Self> {
        Self::from_wiener(model, self.w_fast.coarsen(k)?, self.w_slow.coarsen(k)?)
    }
}

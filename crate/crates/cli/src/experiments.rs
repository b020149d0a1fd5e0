use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use slowfast::dynamics::{
    hypothesis_check, simulate_full, simulate_random, simulate_reduced, ManifoldEvaluator,
    ModelSpec, Trajectory,
};
use slowfast::estimation::{
    synthesize_observations, EstimationProblem, GraphKind, NoiseMode, Synthesis,
};
use slowfast::manifold::{
    h0_leading_order, lipschitz_estimate, manifold_columns, write_manifold_csv, LeadingOrderGraph,
    LpConfig, LpSolver, LyapunovPerronGraph,
};
use slowfast::noise::NoiseRealization;
use slowfast::tracking::{tracking_verify, Projection, TrackingConfig};
use slowfast::Result;

use crate::config::{GraphChoice, NoiseChoice, ObservationChoice, ProjectionChoice, RunConfig};

/// Collects the summary, log and file manifest of one run.
pub struct Sink {
    dir: PathBuf,
    pub summary: Vec<(String, String)>,
    pub log: Vec<String>,
    pub manifest: Vec<(String, String)>,
}

impl Sink {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            summary: Vec::new(),
            log: Vec::new(),
            manifest: Vec::new(),
        }
    }

    pub fn kv(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    pub fn line(&mut self, text: impl Into<String>) {
        self.log.push(text.into());
    }

    fn file(&mut self, name: &str, columns: &[String]) -> Result<BufWriter<File>> {
        self.manifest.push((name.to_string(), columns.join(",")));
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn trajectory(&mut self, name: &str, traj: &Trajectory<f64>) -> Result<()> {
        let cols = Trajectory::<f64>::columns(traj.n_fast(), traj.n_slow());
        let mut w = self.file(name, &cols)?;
        traj.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Left end of a noise window long enough for the manifold solve.
fn lp_window(m: &ModelSpec<f64>, lp: &LpConfig<f64>, dt: f64) -> f64 {
    let steps = (lp.effective_t_minus(m) / dt).ceil() + 1.0;
    -steps * dt
}

fn long_columns() -> Vec<String> {
    ["time", "mode", "value"].iter().map(|s| s.to_string()).collect()
}

fn hypothesis_lines(m: &ModelSpec<f64>, sink: &mut Sink) -> bool {
    let report = hypothesis_check(m);
    sink.line("hypothesis report:");
    for (k, v) in report.entries() {
        sink.line(format!("  {k} = {v}"));
        sink.kv(&format!("hypothesis.{k}"), v);
    }
    for w in &report.warnings {
        sink.line(format!("  warning: {w}"));
    }
    sink.kv("hypothesis.all_ok", report.all_ok());
    report.all_ok()
}

pub fn check(_cfg: &RunConfig, m: &ModelSpec<f64>, sink: &mut Sink) -> Result<bool> {
    let ok = hypothesis_lines(m, sink);
    let op = m.op();
    let horizon = 5.0 / op.lambda1();
    let grid: Vec<f64> = (0..=100).map(|i| horizon * i as f64 / 100.0).collect();
    let semi = op.semigroup_decay_check(&grid)?;
    sink.kv("semigroup.constant", semi.constant);
    sink.kv("semigroup.pass", semi.pass);
    sink.line(format!(
        "semigroup: max ‖exp(A t)‖ exp(λ₁ t) = {} on [0, {horizon}]",
        semi.constant
    ));
    let cols: Vec<String> = ["time", "norm", "bound"].iter().map(|s| s.to_string()).collect();
    let mut w = sink.file("semigroup.csv", &cols)?;
    writeln!(w, "{}", cols.join(","))?;
    for (t, n) in grid.iter().zip(&semi.norms) {
        writeln!(w, "{t},{n},{}", (-op.lambda1() * t).exp())?;
    }
    w.flush()?;
    let cols: Vec<String> = ["k", "lambda", "c"].iter().map(|s| s.to_string()).collect();
    let mut w = sink.file("spectrum.csv", &cols)?;
    writeln!(w, "{}", cols.join(","))?;
    for (k, (l, c)) in op.eigenvalues().iter().zip(op.basis_const_coeffs()).enumerate() {
        writeln!(w, "{},{l},{c}", k + 1)?;
    }
    w.flush()?;
    Ok(ok && semi.pass)
}

pub fn simulate(cfg: &RunConfig, m: &ModelSpec<f64>, sink: &mut Sink) -> Result<bool> {
    let ok = hypothesis_lines(m, sink);
    let (dt, t_end) = (cfg.numerics.dt, cfg.numerics.t_end);
    let lp = cfg.lp_config();
    let start = match cfg.experiment.graph {
        GraphChoice::LeadingOrder => 0.0,
        GraphChoice::LyapunovPerron => lp_window(m, &lp, dt),
    };
    let noise = NoiseRealization::generate(m, start, t_end, dt, cfg.numerics.seed)?;
    let (u0, v0) = (cfg.u0(), cfg.experiment.v0.clone());
    let full = simulate_full(m, &noise, &u0, &v0, t_end, dt)?;

    let eta0 = noise.eta.at_index(0)?;
    let xi0 = noise.xi.at_index(0)?;
    let big_u0: Vec<f64> = u0.iter().zip(eta0).map(|(a, b)| a - b).collect();
    let big_v0: Vec<f64> = v0.iter().zip(xi0).map(|(a, b)| a - b).collect();
    let random = simulate_random(m, &noise.eta, &noise.xi, &big_u0, &big_v0, t_end, dt)?;
    let mut transform = 0.0f64;
    for i in 0..full.len() {
        let eta = noise.eta.at_index(i as i64)?;
        let xi = noise.xi.at_index(i as i64)?;
        for ((a, b), e) in full.fast(i).iter().zip(random.fast(i)).zip(eta) {
            transform = transform.max((a - b - e).abs());
        }
        for ((a, b), x) in full.slow(i).iter().zip(random.slow(i)).zip(xi) {
            transform = transform.max((a - b - x).abs());
        }
    }

    let reduced = match cfg.experiment.graph {
        GraphChoice::LeadingOrder => {
            let g = LeadingOrderGraph { model: m, noise: &noise };
            simulate_reduced(m, &g as &dyn ManifoldEvaluator<f64>, &noise, &v0, m.param(), t_end, dt)?
        }
        GraphChoice::LyapunovPerron => {
            let g = LyapunovPerronGraph {
                solver: LpSolver::new(m, &lp, dt)?,
                noise: &noise,
            };
            simulate_reduced(m, &g, &noise, &v0, m.param(), t_end, dt)?
        }
    };
    let mut slow_gap = 0.0f64;
    for i in 0..full.len() {
        for (a, b) in full.slow(i).iter().zip(reduced.slow(i)) {
            slow_gap = slow_gap.max((a - b).abs());
        }
    }

    sink.trajectory("trajectory.csv", &full)?;
    sink.trajectory("random.csv", &random)?;
    sink.trajectory("reduced.csv", &reduced)?;
    if cfg.experiment.write_paths {
        let cols = long_columns();
        let mut w = sink.file("w_fast.csv", &cols)?;
        noise.w_fast.write_csv(&mut w)?;
        w.flush()?;
        let mut w = sink.file("w_slow.csv", &cols)?;
        noise.w_slow.write_csv(&mut w)?;
        w.flush()?;
        let mut w = sink.file("eta.csv", &cols)?;
        noise.eta.write_csv(&mut w)?;
        w.flush()?;
        let mut w = sink.file("xi.csv", &cols)?;
        noise.xi.write_csv(&mut w)?;
        w.flush()?;
    }
    let transform_ok = transform <= 1e-6;
    sink.kv("steps", full.len() - 1);
    sink.kv("transform_max_diff", transform);
    sink.kv("transform_ok", transform_ok);
    sink.kv("reduced_max_slow_gap", slow_gap);
    sink.kv("final_slow", fmt_vec(full.last_slow()));
    sink.kv("final_reduced_slow", fmt_vec(reduced.last_slow()));
    sink.line(format!(
        "simulated {} steps of dt = {dt}; max |Z − (z + (η, ξ))| = {transform:e}",
        full.len() - 1
    ));
    sink.line(format!("max slow gap full vs reduced = {slow_gap:e}"));
    Ok(ok && transform_ok)
}

pub fn manifold(cfg: &RunConfig, m: &ModelSpec<f64>, sink: &mut Sink) -> Result<bool> {
    let ok = hypothesis_lines(m, sink);
    let dt = cfg.numerics.dt;
    let lp = cfg.lp_config();
    let start = lp_window(m, &lp, dt);
    let noise = NoiseRealization::generate(m, start, 0.0, dt, cfg.numerics.seed)?;
    let anchors = cfg.v0_grid();
    let report = lipschitz_estimate(m, &noise.eta, &noise.xi, &anchors, &lp, cfg.experiment.slack)?;

    let rows: Vec<(Vec<f64>, Vec<f64>)> = report
        .solutions
        .iter()
        .map(|s| (s.v0.clone(), s.h_value.clone()))
        .collect();
    let cols = manifold_columns(m.n_fast(), m.n_slow());
    let mut w = sink.file("manifold.csv", &cols)?;
    write_manifold_csv(m, &rows, &mut w)?;
    w.flush()?;
    let quiet = anchors
        .iter()
        .map(|v| Ok((v.clone(), h0_leading_order(m, v)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut w = sink.file("leading_order.csv", &cols)?;
    write_manifold_csv(m, &quiet, &mut w)?;
    w.flush()?;

    let max_iter = report.solutions.iter().map(|s| s.iterations).max().unwrap_or(0);
    let max_rho = report
        .solutions
        .iter()
        .map(|s| s.contraction_estimate)
        .filter(|r| r.is_finite())
        .fold(0.0f64, f64::max);
    let rho_bound = m.contraction_factor();
    let contraction_ok = max_rho < 1.0;
    sink.kv("t_minus", report.solutions.first().map_or(0.0, |s| s.t_minus));
    sink.kv("anchors", anchors.len());
    sink.kv("lipschitz_measured", report.measured);
    sink.kv("lipschitz_bound", report.theorem1_bound);
    sink.kv("lipschitz_ok", report.pass);
    sink.kv("max_iterations", max_iter);
    sink.kv("max_contraction_estimate", max_rho);
    sink.kv("contraction_factor", rho_bound);
    sink.kv("contraction_ok", contraction_ok);
    sink.line(format!(
        "{} anchors on [{}, {}], T₋ = {}",
        anchors.len(),
        cfg.experiment.v0_min,
        cfg.experiment.v0_max,
        report.solutions.first().map_or(0.0, |s| s.t_minus)
    ));
    for s in &report.solutions {
        sink.line(format!(
            "  V0 = {}: {} iterations, contraction {:.4}, ∫H = {}",
            fmt_vec(&s.v0),
            s.iterations,
            s.contraction_estimate,
            m.op().integrate(&s.h_value)
        ));
    }
    sink.line(format!(
        "Lipschitz {} against bound {} (slack {})",
        report.measured, report.theorem1_bound, cfg.experiment.slack
    ));
    Ok(ok && report.pass && contraction_ok)
}

pub fn tracking(cfg: &RunConfig, m: &ModelSpec<f64>, sink: &mut Sink) -> Result<bool> {
    let ok = hypothesis_lines(m, sink);
    let dt = cfg.numerics.dt;
    let t_end = if cfg.experiment.tracking_t_end > 0.0 {
        cfg.experiment.tracking_t_end
    } else {
        (10.0 * m.eps() / m.mu() / dt).ceil() * dt
    };
    let defaults = TrackingConfig::<f64>::default();
    let tc = TrackingConfig {
        lp: LpConfig {
            t_minus: cfg.numerics.t_minus,
            max_iter: cfg.numerics.max_iter,
            ..defaults.lp.clone()
        },
        projection: match cfg.experiment.projection {
            ProjectionChoice::Forward => Projection::Forward,
            ProjectionChoice::Fiber => Projection::Fiber,
        },
        slack: cfg.experiment.slack,
        ..defaults
    };
    let start = lp_window(m, &tc.lp, dt);
    let noise = NoiseRealization::generate(m, start, t_end, dt, cfg.numerics.seed)?;
    let r = tracking_verify(m, &noise, &cfg.u0(), &cfg.experiment.v0, t_end, dt, &tc)?;

    let cols: Vec<String> = ["time", "gap", "envelope"].iter().map(|s| s.to_string()).collect();
    let mut w = sink.file("tracking.csv", &cols)?;
    r.write_csv(&mut w)?;
    w.flush()?;
    sink.trajectory("trajectory.csv", &r.trajectory)?;
    sink.trajectory("tracked.csv", &r.tracked)?;
    sink.kv("t_end", t_end);
    sink.kv("projection", r.projection);
    sink.kv("projected_slow", fmt_vec(&r.projected_slow));
    sink.kv("initial_gap", r.gaps[0]);
    sink.kv("final_gap", r.gaps[r.gaps.len() - 1]);
    sink.kv("fitted_rate", r.fitted_rate);
    sink.kv("bound_rate", r.bound_rate);
    sink.kv("bound_prefactor", r.bound_prefactor);
    sink.kv("fit_samples", r.fit_samples);
    sink.kv("envelope_ok", r.envelope_ok);
    sink.kv("tracking_ok", r.pass);
    sink.line(format!(
        "{} projection, horizon {t_end}: gap {} → {}",
        r.projection,
        r.gaps[0],
        r.gaps[r.gaps.len() - 1]
    ));
    sink.line(format!(
        "fitted rate {} over {} samples, bound μ/ε = {}",
        r.fitted_rate, r.fit_samples, r.bound_rate
    ));
    Ok(ok && r.pass)
}

pub fn estimate(cfg: &RunConfig, m: &ModelSpec<f64>, sink: &mut Sink) -> Result<bool> {
    let ok = hypothesis_lines(m, sink);
    let n = &cfg.numerics;
    let e = &cfg.experiment;
    let lp = cfg.lp_config();
    let (graph, start) = match e.graph {
        GraphChoice::LeadingOrder => (GraphKind::LeadingOrder, 0.0),
        GraphChoice::LyapunovPerron => (GraphKind::LyapunovPerron(lp.clone()), lp_window(m, &lp, n.dt)),
    };
    let seeds: Vec<u64> = (0..n.n_mc as u64).map(|i| n.seed.wrapping_add(i)).collect();
    let synthesis = match e.observations {
        ObservationChoice::Full => Synthesis::Full,
        ObservationChoice::Reduced => Synthesis::Reduced,
    };
    let obs = synthesize_observations(m, synthesis, &graph, &cfg.u0(), &e.v0, n.t_end, n.dt, start, &seeds)?;
    let mode = match e.noise {
        NoiseChoice::Shared => NoiseMode::Shared,
        NoiseChoice::Independent => NoiseMode::Independent {
            base_seed: n.seed.wrapping_add(1 << 32),
            n_mc: n.n_mc,
        },
    };
    let problem = EstimationProblem::new(
        m.clone(),
        (e.lambda_lo, e.lambda_hi),
        obs,
        e.v0.clone(),
        start,
        mode,
        graph,
    )?;
    let r = problem.estimate(e.grid_n, e.refine_iters)?;

    let cols: Vec<String> = ["d", "objective", "std_err"].iter().map(|s| s.to_string()).collect();
    let mut w = sink.file("objective.csv", &cols)?;
    r.write_curve_csv(&mut w)?;
    w.flush()?;

    let finite = r.curve.iter().all(|p| p.value.is_finite() && p.value >= 0.0);
    let inside = r.d_hat >= e.lambda_lo && r.d_hat <= e.lambda_hi;
    let abs_err = (r.d_hat - m.param()).abs();
    sink.kv("d_true", m.param());
    sink.kv("d_hat", r.d_hat);
    sink.kv("abs_error", abs_err);
    sink.kv("grid_argmin", r.grid_argmin);
    sink.kv("f_min", r.f_min);
    sink.kv("f_min_std_err", r.f_min_std_err);
    sink.kv("evaluations", r.curve.len());
    let eb = &r.error;
    sink.kv("bound.g_value", eb.g_value);
    for (t, g) in &eb.g_by_t_star {
        sink.kv(&format!("bound.g_at_{t}"), g);
    }
    sink.kv("bound.eps_term", eb.eps_term);
    sink.kv("bound.cross_term", eb.cross_term);
    sink.kv("bound.lipschitz_term", eb.lipschitz_term);
    sink.kv("bound.inv_t_term", eb.inv_t_term);
    sink.kv("bound.numerator", eb.numerator);
    match eb.bound {
        Some(b) => {
            sink.kv("bound.value", b);
            sink.kv("bound.covers_error", abs_err <= b);
        }
        None => sink.kv("bound.value", "uninformative"),
    }
    sink.kv("estimate_ok", finite && inside);
    sink.line(format!(
        "{} observations on [0, {}], range [{}, {}]",
        n.n_mc, n.t_end, e.lambda_lo, e.lambda_hi
    ));
    sink.line(format!(
        "d_hat = {} (true {}), F(d_hat) = {:e} ± {:e}",
        r.d_hat,
        m.param(),
        r.f_min,
        r.f_min_std_err
    ));
    match eb.bound {
        Some(b) => sink.line(format!("error bound {b} (G = {})", eb.g_value)),
        None => sink.line(format!("error bound uninformative (G = {})", eb.g_value)),
    }
    Ok(ok && finite && inside)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", parts.join(";"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_covers_solver() {
        let m = ModelSpec::example2(1.2, 0.01, 0.1, 0.1, 8, 1.0).unwrap();
        let lp = LpConfig::default();
        let s = lp_window(&m, &lp, 1e-3);
        assert!(-s >= lp.effective_t_minus(&m));
        assert!(-s - lp.effective_t_minus(&m) <= 2e-3 + 1e-12);
    }
}

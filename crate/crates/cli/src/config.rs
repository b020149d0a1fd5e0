use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use slowfast::dynamics::{ModelSpec, SqrtSineCoupling};
use slowfast::linalg::SquareMatrix;
use slowfast::manifold::LpConfig;
use slowfast::spectral::SpectralOperator;

/// Failure to produce a valid configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub numerics: NumericsSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Example2,
    Custom,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub name: ModelName,
    pub alpha: f64,
    pub eps: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub n_modes: usize,
    /// Slow drift parameter; the true value for synthetic estimation data.
    pub a: f64,
    /// Rows of the slow operator.
    pub j: Vec<Vec<f64>>,
    pub gamma2: f64,
    /// Coefficients of `f = f_scale(√(‖v‖² + f_shift) − √f_shift)·1`
    /// and `g = g_scale·a·sin(∫u)`; only read for `custom`.
    pub f_scale: f64,
    pub f_shift: f64,
    pub g_scale: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            name: ModelName::Example2,
            alpha: 1.2,
            eps: 0.01,
            sigma1: 0.1,
            sigma2: 0.1,
            n_modes: 16,
            a: 1.0,
            j: vec![vec![-1.0]],
            gamma2: 1.0,
            f_scale: 0.01,
            f_shift: 5.0,
            g_scale: 0.01,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    pub dt: f64,
    /// Horizon `T` of simulation and estimation runs.
    pub t_end: f64,
    /// Requested past window of the manifold solve (raised automatically).
    pub t_minus: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub n_mc: usize,
    pub seed: u64,
    /// Worker threads, 0 for one per core.
    pub workers: usize,
}

impl Default for NumericsSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 2.0,
            t_minus: 0.0,
            tol: 1e-8,
            max_iter: 50,
            n_mc: 50,
            seed: 42,
            workers: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum GraphChoice {
    LeadingOrder,
    LyapunovPerron,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionChoice {
    Forward,
    Fiber,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChoice {
    Shared,
    Independent,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum ObservationChoice {
    Full,
    Reduced,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Initial fast coefficients; empty means zero.
    pub u0: Vec<f64>,
    /// Initial slow state.
    pub v0: Vec<f64>,
    pub v0_min: f64,
    pub v0_max: f64,
    pub v0_step: f64,
    /// Relative slack of the Lipschitz and envelope checks.
    pub slack: f64,
    pub graph: GraphChoice,
    pub projection: ProjectionChoice,
    /// Tracking horizon; 0 means `10ε/μ` rounded up to the grid.
    pub tracking_t_end: f64,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub grid_n: usize,
    pub refine_iters: usize,
    pub noise: NoiseChoice,
    pub observations: ObservationChoice,
    /// Also dump the Wiener and OU paths of the simulate run.
    pub write_paths: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            u0: Vec::new(),
            v0: vec![1.0],
            v0_min: -3.0,
            v0_max: 3.0,
            v0_step: 0.5,
            slack: 0.1,
            graph: GraphChoice::LeadingOrder,
            projection: ProjectionChoice::Forward,
            tracking_t_end: 0.0,
            lambda_lo: 0.2,
            lambda_hi: 2.0,
            grid_n: 21,
            refine_iters: 30,
            noise: NoiseChoice::Shared,
            observations: ObservationChoice::Full,
            write_paths: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Read `path` (or start from defaults), apply `key=value` overrides and
/// deserialize with unknown keys rejected.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut table: toml::Table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| err(format!("cannot read config {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| err(format!("config {}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| err(format!("config: {}", e.message())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| err(format!("--set `{item}` is not key=value")))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| err(format!("--set key `{key}` must be section.field")))?;
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let sec = entry
        .as_table_mut()
        .ok_or_else(|| err(format!("`{section}` is not a section")))?;
    sec.insert(field.to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        let n = &self.numerics;
        let e = &self.experiment;
        let pos = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(err(format!("{name} = {x} must be positive")))
            }
        };
        pos("model.eps", m.eps)?;
        pos("model.gamma2", m.gamma2)?;
        pos("numerics.dt", n.dt)?;
        pos("numerics.t_end", n.t_end)?;
        pos("numerics.tol", n.tol)?;
        pos("experiment.v0_step", e.v0_step)?;
        if !(m.alpha > 1.0 && m.alpha < 2.0) {
            return Err(err(format!("model.alpha = {} not in (1, 2)", m.alpha)));
        }
        let on_grid = |name: &str, t: f64| {
            let r = t / n.dt;
            if (r - r.round()).abs() > 1e-6 {
                Err(err(format!("{name} = {t} is not a multiple of numerics.dt = {}", n.dt)))
            } else {
                Ok(())
            }
        };
        on_grid("numerics.t_end", n.t_end)?;
        on_grid("experiment.tracking_t_end", e.tracking_t_end)?;
        if m.n_modes == 0 {
            return Err(err("model.n_modes must be at least 1"));
        }
        if !(m.sigma1 >= 0.0) || !(m.sigma2 >= 0.0) {
            return Err(err("model.sigma1 and model.sigma2 must be nonnegative"));
        }
        let dim = m.j.len();
        if dim == 0 || m.j.iter().any(|r| r.len() != dim) {
            return Err(err("model.j must be a nonempty square matrix"));
        }
        if m.name == ModelName::Example2 && (dim != 1 || m.j[0][0] != -1.0 || m.gamma2 != 1.0) {
            return Err(err("model.name = example2 fixes j = [[-1.0]] and gamma2 = 1; use custom"));
        }
        if n.max_iter == 0 || n.n_mc == 0 {
            return Err(err("numerics.max_iter and numerics.n_mc must be at least 1"));
        }
        if !(n.t_minus >= 0.0) {
            return Err(err("numerics.t_minus must be nonnegative"));
        }
        if e.v0.len() != dim {
            return Err(err(format!("experiment.v0 has {} components, j is {dim}x{dim}", e.v0.len())));
        }
        if !e.u0.is_empty() && e.u0.len() != m.n_modes {
            return Err(err(format!(
                "experiment.u0 has {} coefficients for {} modes",
                e.u0.len(),
                m.n_modes
            )));
        }
        if !(e.v0_min < e.v0_max) {
            return Err(err("experiment.v0_min must be below experiment.v0_max"));
        }
        if !(e.lambda_lo < e.lambda_hi) {
            return Err(err("experiment.lambda_lo must be below experiment.lambda_hi"));
        }
        if !(m.a >= e.lambda_lo && m.a <= e.lambda_hi) {
            return Err(err("model.a must lie in [experiment.lambda_lo, experiment.lambda_hi]"));
        }
        if e.grid_n < 5 {
            return Err(err("experiment.grid_n must be at least 5"));
        }
        if !(e.slack >= 0.0) {
            return Err(err("experiment.slack must be nonnegative"));
        }
        if !(e.tracking_t_end >= 0.0) {
            return Err(err("experiment.tracking_t_end must be nonnegative"));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> Result<ModelSpec<f64>, ConfigError> {
        let m = &self.model;
        let wrap = |e: slowfast::Error| err(format!("model: {e}"));
        match m.name {
            ModelName::Example2 => {
                ModelSpec::example2(m.alpha, m.eps, m.sigma1, m.sigma2, m.n_modes, m.a).map_err(wrap)
            }
            ModelName::Custom => {
                let op = SpectralOperator::new(m.alpha, m.n_modes).map_err(wrap)?;
                let coupling =
                    SqrtSineCoupling::new(&op, m.f_scale, m.f_shift, m.g_scale).map_err(wrap)?;
                let j = SquareMatrix::from_rows(&m.j).map_err(wrap)?;
                ModelSpec::new(op, m.eps, m.sigma1, m.sigma2, j, m.gamma2, m.a, Arc::new(coupling))
                    .map_err(wrap)
            }
        }
    }

    pub fn lp_config(&self) -> LpConfig<f64> {
        LpConfig {
            t_minus: self.numerics.t_minus,
            tol: self.numerics.tol,
            max_iter: self.numerics.max_iter,
            weight_rate: None,
            allow_gap_violation: false,
        }
    }

    /// Anchors `v0_min, v0_min + step, …, v0_max` along the first slow axis.
    pub fn v0_grid(&self) -> Vec<Vec<f64>> {
        let e = &self.experiment;
        let dim = self.model.j.len();
        let count = ((e.v0_max - e.v0_min) / e.v0_step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| {
                let mut v = vec![0.0; dim];
                v[0] = e.v0_min + i as f64 * e.v0_step;
                v
            })
            .collect()
    }

    pub fn u0(&self) -> Vec<f64> {
        if self.experiment.u0.is_empty() {
            vec![0.0; self.model.n_modes]
        } else {
            self.experiment.u0.clone()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Flattened `section.key=value` lines.
    pub fn flat_entries(&self) -> Vec<(String, String)> {
        let value = toml::Value::try_from(self).expect("config serializes");
        let mut out = Vec::new();
        if let toml::Value::Table(t) = value {
            for (section, body) in t {
                if let toml::Value::Table(fields) = body {
                    for (k, v) in fields {
                        out.push((format!("{section}.{k}"), v.to_string()));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_example2() {
        let c = load(None, &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        let m = c.model_spec().unwrap();
        assert!((m.op().lambda1() - 1.3153).abs() < 1e-4);
        assert_eq!(c.v0_grid().len(), 13);
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let c = load(None, &["model.eps=0.05".into(), "experiment.graph=lyapunov_perron".into()]).unwrap();
        assert_eq!(c.model.eps, 0.05);
        assert_eq!(c.experiment.graph, GraphChoice::LyapunovPerron);
        assert!(load(None, &["model.epsilon=0.05".into()]).is_err());
        assert!(load(None, &["extra.x=1".into()]).is_err());
        assert!(load(None, &["model.eps=-1".into()]).is_err());
        assert!(load(None, &["noequals".into()]).is_err());
    }

    #[test]
    fn round_trip_through_toml() {
        let c = load(None, &["numerics.seed=7".into(), "model.n_modes=8".into()]).unwrap();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }
}

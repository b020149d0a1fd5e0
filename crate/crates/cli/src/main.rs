#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod experiments;
mod logging;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, RunConfig};
use experiments::Sink;

/// Environment override of the output directory.
const OUT_DIR_VAR: &str = "SLOWFAST_OUT_DIR";

#[derive(Parser)]
#[command(name = "slowfast", version, about = "Slow manifold, tracking and estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hypothesis report and spectral checks.
    Check(Options),
    /// Full, random and reduced trajectories on one noise path.
    Simulate(Options),
    /// Random slow manifold on a grid of anchors.
    Manifold(Options),
    /// Exponential tracking of a trajectory by the manifold.
    Tracking(Options),
    /// Estimate the slow drift parameter from synthetic observations.
    Estimate(Options),
}

#[derive(Args)]
struct Options {
    /// TOML configuration; defaults reproduce the reference example.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the environment and the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed, same as `--set numerics.seed=N`.
    #[arg(long)]
    seed: Option<u64>,
    /// Override one config value, e.g. `--set model.eps=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// More stderr logging (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

type Runner = fn(&RunConfig, &slowfast::ModelSpec, &mut Sink) -> slowfast::Result<bool>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, opts, runner): (&str, Options, Runner) = match cli.command {
        Command::Check(o) => ("check", o, experiments::check),
        Command::Simulate(o) => ("simulate", o, experiments::simulate),
        Command::Manifold(o) => ("manifold", o, experiments::manifold),
        Command::Tracking(o) => ("tracking", o, experiments::tracking),
        Command::Estimate(o) => ("estimate", o, experiments::estimate),
    };
    logging::init(opts.verbose);
    match run(name, &opts, runner) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("slowfast: configuration error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("slowfast: {e}");
            ExitCode::from(1)
        }
    }
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

fn run(name: &str, opts: &Options, runner: Runner) -> Result<bool, Failure> {
    let mut overrides = opts.overrides.clone();
    if let Some(seed) = opts.seed {
        overrides.push(format!("numerics.seed={seed}"));
    }
    let cfg = config::load(opts.config.as_deref(), &overrides)?;
    let model = cfg.model_spec()?;
    let dir = opts
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_VAR).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&dir)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", dir.display())))?;

    if cfg.numerics.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.numerics.workers)
            .build_global()
            .map_err(|e| Failure::Runtime(format!("thread pool: {e}")))?;
    }

    let mut sink = Sink::new(&dir);
    sink.line(format!("slowfast {name}"));
    let outcome = runner(&cfg, &model, &mut sink);
    let pass = match &outcome {
        Ok(p) => *p,
        Err(_) => false,
    };
    if let Err(e) = &outcome {
        sink.kv("error", e);
        sink.line(format!("error: {e}"));
    }
    for w in logging::warnings() {
        sink.line(format!("warning: {w}"));
    }
    sink.line(format!("pass = {pass}"));
    write_outputs(name, &cfg, &dir, &sink, pass)
        .map_err(|e| Failure::Runtime(format!("writing outputs: {e}")))?;
    match outcome {
        Ok(p) => Ok(p),
        Err(e) => match e {
            slowfast::Error::InvalidParameter { .. } | slowfast::Error::GridMismatch(_) => {
                Err(Failure::Config(e.to_string()))
            }
            _ => Err(Failure::Runtime(e.to_string())),
        },
    }
}

fn write_outputs(
    name: &str,
    cfg: &RunConfig,
    dir: &std::path::Path,
    sink: &Sink,
    pass: bool,
) -> std::io::Result<()> {
    let mut summary = format!("command={name}\npass={pass}\n");
    for (k, v) in &sink.summary {
        summary.push_str(&format!("{k}={v}\n"));
    }
    for (k, v) in cfg.flat_entries() {
        summary.push_str(&format!("config.{k}={v}\n"));
    }
    fs::write(dir.join("summary.txt"), summary)?;

    let mut log = sink.log.join("\n");
    log.push('\n');
    fs::write(dir.join("run.log"), log)?;
    fs::write(dir.join("resolved_config.toml"), cfg.to_toml())?;

    let mut manifest = String::from("summary.txt: key=value\nrun.log: text\nresolved_config.toml: toml\n");
    for (file, cols) in &sink.manifest {
        manifest.push_str(&format!("{file}: {cols}\n"));
    }
    fs::write(dir.join("manifest.txt"), manifest)
}

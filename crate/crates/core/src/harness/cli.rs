//! Command-line interface.
//!
//! ```text
//! fskmc run      --config c.toml [--seed N] [--workers N] [--scheme S] [--output out.csv]
//! fskmc compare  --config c.toml ...
//! fskmc sweep-dt --config c.toml ...
//! fskmc sweep-q  --config c.toml ...
//! fskmc oracle   --config c.toml ...
//! ```
//!
//! Exit codes: 0 on success, 2 on usage or configuration errors, 1 on
//! runtime failures.

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use super::config::{InitialCondition, RunConfig, SchemeName};
use super::csv::{emit, sweep_csv, trajectory_csv, SeriesLabel};
use super::ensemble::{run_configured, run_reference, weak_error, TrajectoryStats};
use super::sweep::{sweep_dt, sweep_q, SweepResult};
use super::HarnessError;
use crate::lattice::Decomposition;
use crate::models::RateModel;
use crate::oracle::{exact_curve, SplitOracle};

#[derive(Debug, Parser)]
#[command(name = "fskmc", version, about = "Fractional-step lattice kinetic Monte Carlo")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an ensemble of the configured scheme and write its trajectory CSV.
    Run(Common),
    /// Run the configured scheme and a serial SSA reference; report weak errors.
    Compare(Common),
    /// Weak error against an SSA reference for every `sweep.dt` value.
    SweepDt(Common),
    /// Weak error against an SSA reference for every `sweep.q` value.
    SweepQ(Common),
    /// Exact expectation curves (small lattices only).
    Oracle(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Configuration file (TOML with dotted keys).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Base seed, overriding `run.seed`.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads, overriding `run.workers`.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Output CSV path; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    /// Scheme, overriding `scheme.kind`.
    #[arg(long, value_name = "lie|strang|random|ssa")]
    scheme: Option<SchemeName>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, HarnessError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(s) = self.scheme {
            cfg.scheme = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Entry point used by the binary; `args` includes the program name.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Run(c) => {
            let cfg = c.load()?;
            let stats = run_configured(&cfg)?;
            emit(c.output.as_deref(), &trajectory_csv(&[(SeriesLabel::of(&cfg), &stats)]))
        }
        Command::Compare(c) => {
            let cfg = c.load()?;
            let reference = run_reference(&cfg)?;
            let test = run_configured(&cfg)?;
            let mut ref_cfg = cfg.clone();
            ref_cfg.scheme = SchemeName::Ssa;
            let text = trajectory_csv(&[(SeriesLabel::of(&ref_cfg), &reference), (SeriesLabel::of(&cfg), &test)]);
            emit(c.output.as_deref(), &text)?;
            for f in &cfg.observables {
                let e = weak_error(&reference, &test, f)?;
                eprintln!("weak error {f}: {} (se {})", e.value, e.stderr);
            }
            Ok(())
        }
        Command::SweepDt(c) => {
            let cfg = sweep_config(&c)?;
            if cfg.sweep_dt.is_empty() {
                return Err(HarnessError::Usage("sweep.dt lists no values".into()));
            }
            let reference = run_reference(&cfg)?;
            let result = sweep_dt(&cfg, &cfg.sweep_dt, &reference)?;
            report_sweep(&c, &cfg, &result)
        }
        Command::SweepQ(c) => {
            let cfg = sweep_config(&c)?;
            if cfg.sweep_q.is_empty() {
                return Err(HarnessError::Usage("sweep.q lists no values".into()));
            }
            let reference = run_reference(&cfg)?;
            let result = sweep_q(&cfg, &cfg.sweep_q, &reference)?;
            report_sweep(&c, &cfg, &result)
        }
        Command::Oracle(c) => {
            let cfg = c.load()?;
            let stats = oracle_curves(&cfg)?;
            let mut label = SeriesLabel::of(&cfg);
            if cfg.scheme == SchemeName::Ssa {
                label.scheme = "exact".into();
            }
            emit(c.output.as_deref(), &trajectory_csv(&[(label, &stats)]))
        }
    }
}

fn sweep_config(c: &Common) -> Result<RunConfig, HarnessError> {
    let cfg = c.load()?;
    if cfg.scheme == SchemeName::Ssa {
        return Err(HarnessError::Usage("sweeps need a fractional-step scheme".into()));
    }
    Ok(cfg)
}

fn report_sweep(c: &Common, cfg: &RunConfig, result: &SweepResult) -> Result<(), HarnessError> {
    for (v, why) in &result.skipped {
        eprintln!("skipped {} = {v}: {why}", result.parameter);
    }
    eprintln!("slope {} intercept {}", result.slope, result.intercept);
    emit(c.output.as_deref(), &sweep_csv(cfg, result))
}

/// Exact curves on the grid: the full process for `ssa`, otherwise the
/// expected recorded path of the configured splitting scheme. `K` is
/// reported as 0 and standard errors as 0.
fn oracle_curves(cfg: &RunConfig) -> Result<TrajectoryStats, HarnessError> {
    if let InitialCondition::Random(_) = cfg.initial {
        return Err(HarnessError::Usage(
            "the oracle needs a deterministic initial condition (empty or full)".into(),
        ));
    }
    let model = cfg.model.build().map_err(HarnessError::Model)?;
    let lat = cfg.lattice()?;
    let zeta = cfg.initial.build(lat.n_sites(), cfg.seed, 0);
    let times = cfg.grid();
    let mut mean = Vec::with_capacity(cfg.observables.len());
    match cfg.schedule() {
        None => {
            for f in &cfg.observables {
                mean.push(exact_curve(&model, &lat, f, &times, &zeta)?);
            }
        }
        Some(sched) => {
            let q = cfg.q.ok_or_else(|| HarnessError::Usage("decomposition.q is required".into()))?;
            let dec = Decomposition::new(&lat, q, model.interaction_range())?;
            let oracle = SplitOracle::new(&model, &lat, &dec)?;
            for f in &cfg.observables {
                mean.push(oracle.splitting_curve(&sched, cfg.horizon, f, &times, &zeta)?);
            }
        }
    }
    Ok(TrajectoryStats {
        stderr: vec![vec![0.0; times.len()]; mean.len()],
        times,
        observables: cfg.observables.clone(),
        mean,
        samples: 0,
    })
}

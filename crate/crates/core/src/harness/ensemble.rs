//! Replica ensembles and weak errors.
//!
//! Replicas are grouped in fixed chunks of [`CHUNK`]; each chunk is
//! accumulated with Welford updates in replica order and chunks are merged
//! in chunk order, so statistics are bit-identical for any worker count.

use std::sync::Arc;

use rayon::prelude::*;

use super::config::{RunConfig, SchemeName};
use super::HarnessError;
use crate::kmc::run_ssa;
use crate::lattice::{Configuration, Decomposition, Lattice};
use crate::models::{Model, RateModel};
use crate::observables::Observable;
use crate::rng::{splitmix64, RngStream};
use crate::scheduler::FsKmc;

pub const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Ssa,
    FsKmc,
}

/// Grid-sampled ensemble means and standard errors, indexed
/// `[observable][grid point]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStats {
    pub times: Vec<f64>,
    pub observables: Vec<Observable>,
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub samples: usize,
}

impl TrajectoryStats {
    pub fn series(&self, f: &Observable) -> Option<(&[f64], &[f64])> {
        let i = self.observables.iter().position(|o| o == f)?;
        Some((&self.mean[i], &self.stderr[i]))
    }
}

#[derive(Debug, Clone)]
struct Moments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, values: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(values) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }
}

/// Seed used for reference ensembles derived from the run seed, so that a
/// reference never shares streams with a test ensemble of the same seed.
pub fn reference_seed(seed: u64) -> u64 {
    splitmix64(seed ^ 0x7265_6665_7265_6e63)
}

enum Runner<'a> {
    Ssa,
    Split(FsKmc<'a, Model>),
}

/// Runs `cfg.samples` independent replicas of the SSA or of the configured
/// fractional-step scheme.
pub fn run_ensemble(cfg: &RunConfig, engine: Engine) -> Result<TrajectoryStats, HarnessError> {
    cfg.validate()?;
    let model = cfg.model.build().map_err(HarnessError::Model)?;
    let lat = cfg.lattice()?;
    let pool = Arc::new(
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| HarnessError::Runtime(e.to_string()))?,
    );
    let dec = match engine {
        Engine::Ssa => None,
        Engine::FsKmc => {
            let q = cfg.q.ok_or_else(|| HarnessError::Runtime("decomposition.q is required".into()))?;
            Some(Decomposition::new(&lat, q, model.interaction_range())?)
        }
    };
    let runner = match (&dec, engine) {
        (Some(dec), Engine::FsKmc) => {
            let sched = cfg
                .schedule()
                .ok_or_else(|| HarnessError::Runtime(format!("scheme {} has no fractional-step schedule", cfg.scheme)))?;
            Runner::Split(FsKmc::new(&model, &lat, dec, sched)?)
        }
        _ => Runner::Ssa,
    };
    let grid = cfg.grid();
    let n_obs = cfg.observables.len();
    let width = grid.len() * n_obs;
    let chunks: Vec<usize> = (0..cfg.samples.div_ceil(CHUNK)).collect();

    let results: Result<Vec<Moments>, HarnessError> = pool.install(|| {
        chunks
            .par_iter()
            .map(|&c| {
                let mut acc = Moments::new(width);
                let mut values = vec![0.0; width];
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(cfg.samples);
                for replica in lo..hi {
                    run_replica(cfg, &model, &lat, &runner, &grid, replica as u64, &mut values)?;
                    acc.push(&values);
                }
                Ok(acc)
            })
            .collect()
    });
    let mut total = Moments::new(width);
    for m in results? {
        total.merge(&m);
    }

    let k = total.count;
    let mut mean = vec![vec![0.0; grid.len()]; n_obs];
    let mut stderr = vec![vec![0.0; grid.len()]; n_obs];
    for g in 0..grid.len() {
        for o in 0..n_obs {
            let i = g * n_obs + o;
            mean[o][g] = total.mean[i];
            stderr[o][g] = if k > 1 {
                (total.m2[i].max(0.0) / (k - 1) as f64 / k as f64).sqrt()
            } else {
                0.0
            };
        }
    }
    Ok(TrajectoryStats {
        times: grid,
        observables: cfg.observables.clone(),
        mean,
        stderr,
        samples: k,
    })
}

fn run_replica(
    cfg: &RunConfig,
    model: &Model,
    lat: &Lattice,
    runner: &Runner<'_>,
    grid: &[f64],
    replica: u64,
    values: &mut [f64],
) -> Result<(), HarnessError> {
    let n_obs = cfg.observables.len();
    let init = cfg.initial.build(lat.n_sites(), cfg.seed, replica);
    let mut record = |i: usize, s: &Configuration| {
        for (o, f) in cfg.observables.iter().enumerate() {
            values[i * n_obs + o] = f.eval(lat, s);
        }
    };
    match runner {
        Runner::Ssa => {
            let mut rng = RngStream::ssa(cfg.seed, replica);
            run_ssa(model, lat, init, cfg.horizon, &mut rng, grid, &mut record);
        }
        Runner::Split(engine) => {
            engine.run(init, cfg.horizon, cfg.seed, replica, grid, &mut record)?;
        }
    }
    Ok(())
}

/// Ensemble of the engine implied by `cfg.scheme`.
pub fn run_configured(cfg: &RunConfig) -> Result<TrajectoryStats, HarnessError> {
    match cfg.scheme {
        SchemeName::Ssa => run_ensemble(cfg, Engine::Ssa),
        _ => run_ensemble(cfg, Engine::FsKmc),
    }
}

/// Serial SSA reference with `cfg.reference_samples()` replicas and the
/// derived reference seed.
pub fn run_reference(cfg: &RunConfig) -> Result<TrajectoryStats, HarnessError> {
    let mut r = cfg.clone();
    r.scheme = SchemeName::Ssa;
    r.samples = cfg.reference_samples();
    r.seed = reference_seed(cfg.seed);
    run_ensemble(&r, Engine::Ssa)
}

/// Weak error with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakError {
    pub value: f64,
    pub stderr: f64,
}

/// `∫₀ᵀ |E f_ref(t) − E f_test(t)| dt` by the trapezoidal rule on the
/// shared grid.
///
/// The standard error comes from the first-order delta method: the
/// sensitivity of the integral to the pointwise difference `d_i` is the
/// trapezoid weight `w_i` times `sign(d_i)`, and pointwise errors are
/// combined as if fully correlated in time,
/// `SE = Σ_i w_i sqrt(se_ref,i² + se_test,i²)`, which bounds the
/// uncorrelated combination from above.
pub fn weak_error(
    reference: &TrajectoryStats,
    test: &TrajectoryStats,
    f: &Observable,
) -> Result<WeakError, HarnessError> {
    if reference.times.len() != test.times.len()
        || reference
            .times
            .iter()
            .zip(&test.times)
            .any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
    {
        return Err(HarnessError::Usage("weak error needs identical time grids".into()));
    }
    let (ma, sa) = reference
        .series(f)
        .ok_or_else(|| HarnessError::Usage(format!("reference has no observable {f}")))?;
    let (mb, sb) = test
        .series(f)
        .ok_or_else(|| HarnessError::Usage(format!("test has no observable {f}")))?;
    let weights = trapezoid_weights(&reference.times);
    let mut value = 0.0;
    let mut se = 0.0;
    for i in 0..weights.len() {
        value += weights[i] * (ma[i] - mb[i]).abs();
        se += weights[i] * (sa[i] * sa[i] + sb[i] * sb[i]).sqrt();
    }
    Ok(WeakError { value, stderr: se })
}

pub fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; times.len()];
    for i in 1..times.len() {
        let h = times[i] - times[i - 1];
        w[i - 1] += 0.5 * h;
        w[i] += 0.5 * h;
    }
    w
}

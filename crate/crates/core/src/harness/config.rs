//! Run configuration files.
//!
//! A configuration is a TOML document of dotted keys. Every key is
//! optional except `model.beta`, `lattice.length`/`lattice.lengths`,
//! `run.horizon` and `run.samples`; see `docs/formats.md` for the grammar.
//!
//! ```toml
//! model.kind = "spin-flip"
//! model.beta = 15.0
//! model.J = 0.37
//! model.field = 0.5
//! model.c_a = 1.0
//! model.c_d = 1.0
//! lattice.length = 800
//! decomposition.q = 100
//! scheme.kind = "lie"
//! scheme.dt = 0.5
//! run.horizon = 4.0
//! run.samples = 10000
//! run.seed = 1
//! observables = "coverage,correlation:1"
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::lattice::{Configuration, Decomposition, Lattice};
use crate::models::{ArrheniusSpinFlip, KawasakiExchange, Model, RateModel};
use crate::observables::{self, Observable};
use crate::rng::RngStream;
use crate::scheduler::{RandomMode, Schedule, SchemeKind};

use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyIssue {
    pub key: String,
    pub message: String,
}

impl fmt::Display for KeyIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed configuration: {0}")]
    Parse(String),
    #[error("invalid configuration:\n{}", format_issues(.0))]
    Invalid(Vec<KeyIssue>),
}

fn format_issues(issues: &[KeyIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl ConfigError {
    pub fn keys(&self) -> Vec<&str> {
        match self {
            ConfigError::Invalid(issues) => issues.iter().map(|i| i.key.as_str()).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    lattice: RawLattice,
    #[serde(default)]
    decomposition: RawDecomposition,
    #[serde(default)]
    scheme: RawScheme,
    #[serde(default)]
    run: RawRun,
    observables: Option<String>,
    #[serde(default)]
    sweep: RawSweep,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: Option<String>,
    beta: Option<f64>,
    #[serde(rename = "J")]
    coupling: Option<f64>,
    field: Option<f64>,
    c_a: Option<f64>,
    c_d: Option<f64>,
    c_h: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLattice {
    dim: Option<usize>,
    length: Option<usize>,
    lengths: Option<Vec<usize>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDecomposition {
    q: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    kind: Option<String>,
    dt: Option<f64>,
    p: Option<f64>,
    mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    horizon: Option<f64>,
    grid: Option<usize>,
    samples: Option<usize>,
    reference_samples: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    initial: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    dt: Option<Vec<f64>>,
    q: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    SpinFlip,
    Kawasaki,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub beta: f64,
    pub coupling: f64,
    pub field: f64,
    pub c_a: f64,
    pub c_d: f64,
    pub c_h: f64,
}

impl ModelConfig {
    pub fn spin_flip(beta: f64, coupling: f64, field: f64, c_a: f64, c_d: f64) -> Self {
        Self {
            kind: ModelKind::SpinFlip,
            beta,
            coupling,
            field,
            c_a,
            c_d,
            c_h: 1.0,
        }
    }

    pub fn build(&self) -> Result<Model, crate::models::ModelError> {
        Ok(match self.kind {
            ModelKind::SpinFlip => Model::SpinFlip(ArrheniusSpinFlip::new(
                self.beta,
                self.coupling,
                self.field,
                self.c_a,
                self.c_d,
            )?),
            ModelKind::Kawasaki => {
                Model::Kawasaki(KawasakiExchange::new(self.beta, self.coupling, self.c_h)?)
            }
        })
    }
}

/// Which process a run simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeName {
    Ssa,
    Lie,
    Strang,
    Random,
}

impl SchemeName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeName::Ssa => "ssa",
            SchemeName::Lie => "lie",
            SchemeName::Strang => "strang",
            SchemeName::Random => "random",
        }
    }

    pub fn kind(&self) -> Option<SchemeKind> {
        match self {
            SchemeName::Ssa => None,
            SchemeName::Lie => Some(SchemeKind::Lie),
            SchemeName::Strang => Some(SchemeKind::Strang),
            SchemeName::Random => Some(SchemeKind::Random),
        }
    }
}

impl FromStr for SchemeName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ssa" => Ok(SchemeName::Ssa),
            "lie" => Ok(SchemeName::Lie),
            "strang" => Ok(SchemeName::Strang),
            "random" => Ok(SchemeName::Random),
            other => Err(format!("unknown scheme {other:?} (expected lie, strang, random or ssa)")),
        }
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialCondition {
    Empty,
    Full,
    /// Independent Bernoulli(density) spins, seeded per replica.
    Random(f64),
}

impl InitialCondition {
    pub fn build(&self, n_sites: usize, seed: u64, replica: u64) -> Configuration {
        match *self {
            InitialCondition::Empty => Configuration::empty(n_sites),
            InitialCondition::Full => Configuration::filled(n_sites, 1),
            InitialCondition::Random(density) => {
                let mut rng = RngStream::initial(seed, replica);
                let spins = (0..n_sites)
                    .map(|_| (rng.gen::<f64>() < density) as u8)
                    .collect();
                Configuration::from_spins(spins, 1).expect("binary spins")
            }
        }
    }
}

impl FromStr for InitialCondition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "empty" => Ok(InitialCondition::Empty),
            "full" => Ok(InitialCondition::Full),
            _ => s
                .strip_prefix("random:")
                .and_then(|d| d.parse::<f64>().ok())
                .filter(|d| (0.0..=1.0).contains(d))
                .map(InitialCondition::Random)
                .ok_or_else(|| format!("unknown initial condition {s:?} (expected empty, full or random:<density>)")),
        }
    }
}

/// Validated run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub dim: usize,
    pub lengths: Vec<usize>,
    pub q: Option<usize>,
    pub scheme: SchemeName,
    pub dt: Option<f64>,
    pub p: f64,
    pub mode: RandomMode,
    pub horizon: f64,
    pub grid_points: usize,
    pub samples: usize,
    pub reference_samples: Option<usize>,
    pub seed: u64,
    pub workers: usize,
    pub initial: InitialCondition,
    pub observables: Vec<Observable>,
    pub sweep_dt: Vec<f64>,
    pub sweep_q: Vec<usize>,
}

pub const DEFAULT_GRID_POINTS: usize = 101;

impl RunConfig {
    /// A spin-flip ring configuration with the defaults of the file format.
    pub fn ring(model: ModelConfig, n: usize, horizon: f64, samples: usize) -> Self {
        Self {
            model,
            dim: 1,
            lengths: vec![n],
            q: None,
            scheme: SchemeName::Ssa,
            dt: None,
            p: 0.5,
            mode: RandomMode::Rescaled,
            horizon,
            grid_points: DEFAULT_GRID_POINTS,
            samples,
            reference_samples: None,
            seed: 0,
            workers: 1,
            initial: InitialCondition::Empty,
            observables: vec![Observable::Coverage],
            sweep_dt: Vec::new(),
            sweep_q: Vec::new(),
        }
    }

    pub fn with_scheme(mut self, scheme: SchemeName, dt: Option<f64>, q: Option<usize>) -> Self {
        self.scheme = scheme;
        self.dt = dt;
        self.q = q;
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    pub fn lattice(&self) -> Result<Lattice, crate::lattice::LatticeError> {
        Lattice::new(self.dim, &self.lengths)
    }

    pub fn n_sites(&self) -> usize {
        self.lengths.iter().product()
    }

    pub fn reference_samples(&self) -> usize {
        self.reference_samples.unwrap_or(10 * self.samples)
    }

    /// Schedule for the configured fractional-step scheme.
    pub fn schedule(&self) -> Option<Schedule> {
        let kind = self.scheme.kind()?;
        let dt = self.dt?;
        Some(match kind {
            SchemeKind::Lie => Schedule::lie(dt),
            SchemeKind::Strang => Schedule::strang(dt),
            SchemeKind::Random => Schedule::random(dt, self.p, self.mode),
        })
    }

    /// Uniform grid `t_i = i T / (G − 1)`.
    pub fn grid(&self) -> Vec<f64> {
        let g = self.grid_points;
        (0..g)
            .map(|i| {
                if i + 1 == g {
                    self.horizon
                } else {
                    self.horizon * i as f64 / (g - 1) as f64
                }
            })
            .collect()
    }

    /// Checks every cross-field constraint, collecting all offending keys.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut issues = Vec::new();
        let mut bad = |key: &str, message: String| {
            issues.push(KeyIssue {
                key: key.to_string(),
                message,
            })
        };
        for (key, v) in [
            ("model.beta", self.model.beta),
            ("model.J", self.model.coupling),
            ("model.field", self.model.field),
            ("model.c_a", self.model.c_a),
            ("model.c_d", self.model.c_d),
            ("model.c_h", self.model.c_h),
        ] {
            if !v.is_finite() {
                bad(key, format!("must be finite, got {v}"));
            }
        }
        if let Err(e) = self.model.build() {
            bad("model", e.to_string());
        }
        let lattice = match self.lattice() {
            Ok(l) => Some(l),
            Err(e) => {
                bad("lattice.lengths", e.to_string());
                None
            }
        };
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            bad("run.horizon", format!("must be finite and nonnegative, got {}", self.horizon));
        }
        if self.samples < 1 {
            bad("run.samples", "must be at least 1".into());
        }
        if self.reference_samples == Some(0) {
            bad("run.reference_samples", "must be at least 1".into());
        }
        if self.grid_points < 2 {
            bad("run.grid", format!("must be at least 2, got {}", self.grid_points));
        }
        if self.workers < 1 {
            bad("run.workers", "must be at least 1".into());
        }
        if self.observables.is_empty() {
            bad("observables", "at least one observable is required".into());
        }
        if let Some(lat) = &lattice {
            for f in &self.observables {
                if let Observable::Correlation(k) = f {
                    if *k >= lat.lengths()[0] {
                        bad("observables", format!("correlation lag {k} must be below {}", lat.lengths()[0]));
                    }
                }
            }
        }
        if self.scheme != SchemeName::Ssa {
            match self.dt {
                None => bad("scheme.dt", format!("required for scheme {}", self.scheme)),
                Some(dt) if !(dt.is_finite() && dt > 0.0) => {
                    bad("scheme.dt", format!("must be positive, got {dt}"))
                }
                Some(_) => {
                    if let Some(Err(e)) = self.schedule().map(|s| s.windows(self.horizon)) {
                        bad("scheme.dt", e.to_string());
                    }
                }
            }
            if !(0.0..=1.0).contains(&self.p) {
                bad("scheme.p", format!("must lie in [0, 1], got {}", self.p));
            }
            match (self.q, &lattice, self.model.build()) {
                (None, _, _) => bad("decomposition.q", format!("required for scheme {}", self.scheme)),
                (Some(q), Some(lat), Ok(model)) => {
                    if let Err(e) = Decomposition::new(lat, q, model.interaction_range()) {
                        bad("decomposition.q", e.to_string());
                    }
                }
                _ => {}
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(issues))
        }
    }
}

impl FromStr for RunConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let raw: RawFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut issues = Vec::new();
        let mut need = |key: &str, v: Option<f64>| {
            v.unwrap_or_else(|| {
                issues.push(KeyIssue {
                    key: key.into(),
                    message: "missing".into(),
                });
                f64::NAN
            })
        };
        let kind = match raw.model.kind.as_deref().unwrap_or("spin-flip") {
            "spin-flip" => Some(ModelKind::SpinFlip),
            "kawasaki" => Some(ModelKind::Kawasaki),
            _ => None,
        };
        let beta = need("model.beta", raw.model.beta);
        let horizon = need("run.horizon", raw.run.horizon);
        if kind.is_none() {
            issues.push(KeyIssue {
                key: "model.kind".into(),
                message: "expected spin-flip or kawasaki".into(),
            });
        }
        let lengths = match (raw.lattice.length, raw.lattice.lengths) {
            (Some(n), None) => vec![n],
            (None, Some(v)) => v,
            (Some(_), Some(_)) => {
                issues.push(KeyIssue {
                    key: "lattice.length".into(),
                    message: "give either lattice.length or lattice.lengths, not both".into(),
                });
                Vec::new()
            }
            (None, None) => {
                issues.push(KeyIssue {
                    key: "lattice.length".into(),
                    message: "missing".into(),
                });
                Vec::new()
            }
        };
        let samples = raw.run.samples.unwrap_or_else(|| {
            issues.push(KeyIssue {
                key: "run.samples".into(),
                message: "missing".into(),
            });
            0
        });
        let scheme = match raw.scheme.kind.as_deref().unwrap_or("ssa").parse() {
            Ok(s) => s,
            Err(e) => {
                issues.push(KeyIssue {
                    key: "scheme.kind".into(),
                    message: e,
                });
                SchemeName::Ssa
            }
        };
        let mode = match raw.scheme.mode.as_deref().unwrap_or("rescaled") {
            "rescaled" => RandomMode::Rescaled,
            "raw" => RandomMode::Raw,
            other => {
                issues.push(KeyIssue {
                    key: "scheme.mode".into(),
                    message: format!("expected raw or rescaled, got {other:?}"),
                });
                RandomMode::Rescaled
            }
        };
        let initial = match raw.run.initial.as_deref().unwrap_or("empty").parse() {
            Ok(i) => i,
            Err(e) => {
                issues.push(KeyIssue {
                    key: "run.initial".into(),
                    message: e,
                });
                InitialCondition::Empty
            }
        };
        let observables = match observables::parse_list(raw.observables.as_deref().unwrap_or("coverage")) {
            Ok(v) => v,
            Err(e) => {
                issues.push(KeyIssue {
                    key: "observables".into(),
                    message: e.to_string(),
                });
                Vec::new()
            }
        };
        if !issues.is_empty() {
            return Err(ConfigError::Invalid(issues));
        }
        let cfg = RunConfig {
            model: ModelConfig {
                kind: kind.expect("checked above"),
                beta,
                coupling: raw.model.coupling.unwrap_or(0.0),
                field: raw.model.field.unwrap_or(0.0),
                c_a: raw.model.c_a.unwrap_or(1.0),
                c_d: raw.model.c_d.unwrap_or(1.0),
                c_h: raw.model.c_h.unwrap_or(1.0),
            },
            dim: raw.lattice.dim.unwrap_or(lengths.len()),
            lengths,
            q: raw.decomposition.q,
            scheme,
            dt: raw.scheme.dt,
            p: raw.scheme.p.unwrap_or(0.5),
            mode,
            horizon,
            grid_points: raw.run.grid.unwrap_or(DEFAULT_GRID_POINTS),
            samples,
            reference_samples: raw.run.reference_samples,
            seed: raw.run.seed.unwrap_or(0),
            workers: raw.run.workers.unwrap_or(1),
            initial,
            observables,
            sweep_dt: raw.sweep.dt.unwrap_or_default(),
            sweep_q: raw.sweep.q.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

//! Lattice kinetic Monte Carlo with fractional-step parallel schedules.
//!
//! The crate is organised bottom-up:
//!
//! - [`lattice`]: periodic lattices, configurations and the coarse-cell
//!   decomposition with its two-group coloring;
//! - [`models`]: transition mechanisms (Arrhenius spin flip, Kawasaki
//!   exchange) behind the [`models::RateModel`] plug-in trait;
//! - [`kmc`]: the exact serial SSA kernel on an arbitrary active site set;
//! - [`scheduler`]: Lie, Strang and randomized fractional-step schedules
//!   executing independent per-cell SSA runs between barriers;
//! - [`observables`]: coverage, correlation, variance and discrete
//!   derivatives;
//! - [`oracle`]: dense generators and matrix exponentials giving exact
//!   expectations for small lattices;
//! - [`harness`]: ensembles, weak errors, convergence sweeps, config files,
//!   CSV output and the command line.

pub mod harness;
pub mod kmc;
pub mod lattice;
pub mod models;
pub mod observables;
pub mod oracle;
pub mod rng;
pub mod scheduler;

pub use kmc::{run_interval, run_ssa, ssa_step, total_rate, Kernel, Recorder, SimClock, StepOutcome};
pub use lattice::{Configuration, Decomposition, Group, Lattice, LatticeError, SiteSet};
pub use models::{ArrheniusSpinFlip, Event, KawasakiExchange, Model, RateModel, Tag};
pub use observables::Observable;
pub use rng::RngStream;
pub use scheduler::{draw_window_plan, FsKmc, RandomMode, Schedule, SchemeKind, WindowPlan};

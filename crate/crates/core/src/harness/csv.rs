//! CSV emission.
//!
//! Trajectory files have the columns
//! `scheme,dt,q,N,K,time,observable,mean,stderr`, one row per
//! (observable, grid time), observables in configuration order. Sweep files
//! have `scheme,parameter,value,dt,q,N,K,observable,weak_error,stderr`.
//! Floats use Rust's shortest round-trip formatting, so equal values give
//! equal bytes. Empty fields mean "not applicable" (SSA rows carry no dt or q).

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::config::{RunConfig, SchemeName};
use super::ensemble::TrajectoryStats;
use super::sweep::SweepResult;
use super::HarnessError;

pub const TRAJECTORY_HEADER: &str = "scheme,dt,q,N,K,time,observable,mean,stderr";
pub const SWEEP_HEADER: &str = "scheme,parameter,value,dt,q,N,K,observable,weak_error,stderr";

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Identifying columns of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesLabel {
    pub scheme: String,
    pub dt: Option<f64>,
    pub q: Option<usize>,
    pub n_sites: usize,
}

impl SeriesLabel {
    pub fn of(cfg: &RunConfig) -> Self {
        let split = cfg.scheme != SchemeName::Ssa;
        Self {
            scheme: cfg.scheme.as_str().to_string(),
            dt: cfg.dt.filter(|_| split),
            q: cfg.q.filter(|_| split),
            n_sites: cfg.n_sites(),
        }
    }
}

pub fn trajectory_rows(out: &mut String, label: &SeriesLabel, stats: &TrajectoryStats) {
    for (o, f) in stats.observables.iter().enumerate() {
        for (i, t) in stats.times.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                label.scheme,
                opt(label.dt),
                opt(label.q),
                label.n_sites,
                stats.samples,
                t,
                f,
                stats.mean[o][i],
                stats.stderr[o][i]
            )
            .expect("writing to a String");
        }
    }
}

pub fn trajectory_csv(series: &[(SeriesLabel, &TrajectoryStats)]) -> String {
    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    for (label, stats) in series {
        trajectory_rows(&mut out, label, stats);
    }
    out
}

pub fn sweep_csv(cfg: &RunConfig, sweep: &SweepResult) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    let label = SeriesLabel::of(cfg);
    for p in &sweep.points {
        let (dt, q) = match sweep.parameter {
            "dt" => (Some(p.value), label.q),
            _ => (label.dt, Some(p.value as usize)),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            label.scheme,
            sweep.parameter,
            p.value,
            opt(dt),
            opt(q),
            label.n_sites,
            cfg.samples,
            cfg.observables[0],
            p.error.value,
            p.error.stderr
        )
        .expect("writing to a String");
    }
    out
}

/// Writes to `path`, or to standard output when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), HarnessError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| HarnessError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| HarnessError::Io {
                path: "<stdout>".into(),
                source,
            }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ModelConfig;
    use crate::observables::Observable;

    #[test]
    fn rows_and_blank_fields() {
        let cfg = RunConfig::ring(ModelConfig::spin_flip(1.0, 0.0, 0.0, 1.0, 1.0), 8, 1.0, 3)
            .with_scheme(SchemeName::Ssa, Some(0.5), Some(2));
        let stats = TrajectoryStats {
            times: vec![0.0, 0.5, 1.0],
            observables: vec![Observable::Coverage, Observable::Correlation(1)],
            mean: vec![vec![0.0, 0.25, 0.5], vec![0.0, 0.1, 0.2]],
            stderr: vec![vec![0.0, 0.01, 0.02], vec![0.0, 0.001, 0.002]],
            samples: 3,
        };
        let text = trajectory_csv(&[(SeriesLabel::of(&cfg), &stats)]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[0], TRAJECTORY_HEADER);
        assert_eq!(lines[1], "ssa,,,8,3,0,coverage,0,0");
        assert_eq!(lines[6], "ssa,,,8,3,1,correlation:1,0.2,0.002");
        let lie = cfg.with_scheme(SchemeName::Lie, Some(0.5), Some(2));
        let text = trajectory_csv(&[(SeriesLabel::of(&lie), &stats)]);
        assert!(text.lines().nth(2).unwrap().starts_with("lie,0.5,2,8,3,0.5,coverage,0.25,0.01"));
    }
}

//! Weak-error sweeps over the window length Δt and the cell size q.

use super::config::RunConfig;
use super::ensemble::{run_ensemble, weak_error, Engine, TrajectoryStats, WeakError};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub error: WeakError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub parameter: &'static str,
    pub points: Vec<SweepPoint>,
    /// Sweep values that could not be run, with the reason.
    pub skipped: Vec<(f64, String)>,
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares line through `(ln x, ln y)`; points with `y <= 0` are
/// ignored. Returns `(slope, intercept)`, NaN with fewer than two points.
pub fn fit_loglog(points: &[(f64, f64)]) -> (f64, f64) {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return (f64::NAN, f64::NAN);
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn finish(parameter: &'static str, points: Vec<SweepPoint>, skipped: Vec<(f64, String)>) -> SweepResult {
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.value, p.error.value)).collect();
    let (slope, intercept) = fit_loglog(&pairs);
    SweepResult {
        parameter,
        points,
        skipped,
        slope,
        intercept,
    }
}

fn check_monotone(values: &[f64]) -> Result<(), HarnessError> {
    let up = values.windows(2).all(|w| w[0] < w[1]);
    let down = values.windows(2).all(|w| w[0] > w[1]);
    if up || down {
        Ok(())
    } else {
        Err(HarnessError::Usage("sweep values must be strictly monotone".into()))
    }
}

/// Weak error of the configured scheme against `reference` for every Δt,
/// measured on the first configured observable.
pub fn sweep_dt(cfg: &RunConfig, dt_values: &[f64], reference: &TrajectoryStats) -> Result<SweepResult, HarnessError> {
    check_monotone(dt_values)?;
    let f = cfg.observables[0];
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &dt in dt_values {
        let mut c = cfg.clone();
        c.dt = Some(dt);
        if let Err(e) = c.validate() {
            skipped.push((dt, e.to_string()));
            continue;
        }
        let stats = run_ensemble(&c, Engine::FsKmc)?;
        points.push(SweepPoint {
            value: dt,
            error: weak_error(reference, &stats, &f)?,
        });
    }
    Ok(finish("dt", points, skipped))
}

/// Weak error of the configured scheme against `reference` for every cell
/// size q at fixed Δt.
pub fn sweep_q(cfg: &RunConfig, q_values: &[usize], reference: &TrajectoryStats) -> Result<SweepResult, HarnessError> {
    let as_f64: Vec<f64> = q_values.iter().map(|&q| q as f64).collect();
    check_monotone(&as_f64)?;
    let f = cfg.observables[0];
    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &q in q_values {
        let mut c = cfg.clone();
        c.q = Some(q);
        if let Err(e) = c.validate() {
            skipped.push((q as f64, e.to_string()));
            continue;
        }
        let stats = run_ensemble(&c, Engine::FsKmc)?;
        points.push(SweepPoint {
            value: q as f64,
            error: weak_error(reference, &stats, &f)?,
        });
    }
    Ok(finish("q", points, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ModelConfig, SchemeName};
    use crate::harness::ensemble::run_reference;

    #[test]
    fn synthetic_slopes() {
        let dts = [1.0, 0.5, 0.25, 0.125];
        let lin: Vec<(f64, f64)> = dts.iter().map(|&d| (d, 3.0 * d)).collect();
        let quad: Vec<(f64, f64)> = dts.iter().map(|&d| (d, 0.7 * d * d)).collect();
        assert!((fit_loglog(&lin).0 - 1.0).abs() < 1e-12);
        assert!((fit_loglog(&quad).0 - 2.0).abs() < 1e-12);
        assert!((fit_loglog(&lin).1 - 3f64.ln()).abs() < 1e-12);
        let qs = [10.0, 20.0, 30.0, 60.0];
        let inv: Vec<(f64, f64)> = qs.iter().map(|&q| (q, 5.0 / q)).collect();
        assert!((fit_loglog(&inv).0 + 1.0).abs() < 1e-12);
        assert!(fit_loglog(&[(1.0, 1.0)]).0.is_nan());
    }

    #[test]
    fn sweeps_skip_invalid_points() {
        let model = ModelConfig::spin_flip(1.0, 0.5, 0.5, 1.0, 1.0);
        let mut cfg = RunConfig::ring(model, 8, 1.0, 20).with_scheme(SchemeName::Lie, Some(0.5), Some(2));
        cfg.grid_points = 5;
        let reference = run_reference(&cfg).unwrap();
        let r = sweep_dt(&cfg, &[0.5, 0.3, 0.25], &reference).unwrap();
        assert_eq!(r.points.len(), 2);
        assert_eq!(r.skipped.len(), 1);
        assert_eq!(r.skipped[0].0, 0.3);
        // q = 4 gives two cells (degenerate but valid); q = 3 does not divide
        let r = sweep_q(&cfg, &[2, 3, 4], &reference).unwrap();
        assert_eq!(r.points.iter().map(|p| p.value).collect::<Vec<_>>(), vec![2.0, 4.0]);
        assert!(sweep_q(&cfg, &[2, 2], &reference).is_err());
    }
}

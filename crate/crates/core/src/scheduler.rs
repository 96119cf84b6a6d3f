//! Fractional-step execution of the split generator `L = L₁ + L₂`.
//!
//! A run of horizon `T = n Δt` is a sequence of `n` windows. Each window is
//! a [`WindowPlan`]: an ordered list of factors `(g, τ)`, each meaning
//! "advance every cell of group `g` independently by an SSA of duration
//! `τ`, reading frozen values on its boundary ring". Factors are separated
//! by a global barrier.
//!
//! Randomness is keyed by `(replica, cell, window, factor)`, so the result
//! does not depend on the worker count or on the order in which cells of a
//! factor execute.
//!
//! # Recording inside a window
//!
//! Every group carries its own clock. If the factors of group `g` in a
//! window add up to `D_g`, the group's clock runs linearly from `0` to `D_g`
//! while physical time runs across the window, so the configuration
//! recorded at window offset `s` takes the sites of group `g` from the
//! moment its clock read `s D_g / Δt`. For the Lie and Strang schedules
//! `D_1 = D_2 = Δt`, and a group with `D_g = 0` holds its value for the
//! whole window. With no coupling between groups this reproduces the serial
//! process at every recorded time.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::kmc::{Kernel, Recorder, SimClock};
use crate::lattice::{Configuration, Decomposition, Group, Lattice};
use crate::models::RateModel;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("window length must be positive and finite, got {0}")]
    Window(f64),
    #[error("Bernoulli parameter must lie in [0, 1], got {0}")]
    Probability(f64),
    #[error("horizon {horizon} is not an integer multiple of the window {dt}")]
    Horizon { horizon: f64, dt: f64 },
    #[error("worker count must be at least 1")]
    Workers,
    #[error("decomposition range {dec} is below the model interaction range {model}")]
    Range { dec: usize, model: usize },
    #[error("decomposition does not match the lattice")]
    Lattice,
    #[error("failed to start worker pool: {0}")]
    Pool(String),
}

impl ScheduleError {
    /// True for errors caused by user-supplied parameters.
    pub fn is_config(&self) -> bool {
        !matches!(self, ScheduleError::Pool(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Lie,
    Strang,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum RandomMode {
    /// Each draw advances its group for half a window, approximating the
    /// process generated by `L/2` (for `p = 1/2`).
    Raw,
    /// Each draw advances its group for a full window while covering half a
    /// window of physical time, approximating the process generated by `L`.
    #[default]
    Rescaled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub kind: SchemeKind,
    pub dt: f64,
    /// Probability that a draw selects group 1 (random schedules only).
    pub p: f64,
    pub mode: RandomMode,
}

impl Schedule {
    pub fn lie(dt: f64) -> Self {
        Self {
            kind: SchemeKind::Lie,
            dt,
            p: 0.5,
            mode: RandomMode::Rescaled,
        }
    }

    pub fn strang(dt: f64) -> Self {
        Self {
            kind: SchemeKind::Strang,
            ..Self::lie(dt)
        }
    }

    pub fn random(dt: f64, p: f64, mode: RandomMode) -> Self {
        Self {
            kind: SchemeKind::Random,
            dt,
            p,
            mode,
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ScheduleError::Window(self.dt));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(ScheduleError::Probability(self.p));
        }
        Ok(())
    }

    /// Number of windows covering `horizon`, which must be a multiple of Δt.
    pub fn windows(&self, horizon: f64) -> Result<usize, ScheduleError> {
        self.validate()?;
        let ratio = horizon / self.dt;
        let n = ratio.round();
        if !horizon.is_finite() || horizon < 0.0 || (ratio - n).abs() > 1e-9 * n.max(1.0) {
            return Err(ScheduleError::Horizon {
                horizon,
                dt: self.dt,
            });
        }
        Ok(n as usize)
    }

    fn random_duration(&self) -> f64 {
        match self.mode {
            RandomMode::Raw => 0.5 * self.dt,
            RandomMode::Rescaled => self.dt,
        }
    }

    /// Every possible plan of one window with its probability.
    pub fn plan_distribution(&self) -> Vec<(f64, WindowPlan)> {
        match self.kind {
            SchemeKind::Lie | SchemeKind::Strang => {
                let mut rng = RngStream::from_seed_u64(0);
                vec![(1.0, draw_window_plan(self, &mut rng))]
            }
            SchemeKind::Random => {
                let d = self.random_duration();
                let mut out = Vec::with_capacity(4);
                for (g1, p1) in [(Group::One, self.p), (Group::Two, 1.0 - self.p)] {
                    for (g2, p2) in [(Group::One, self.p), (Group::Two, 1.0 - self.p)] {
                        out.push((
                            p1 * p2,
                            WindowPlan::new(vec![Factor::new(g1, d), Factor::new(g2, d)]),
                        ));
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Factor {
    pub group: Group,
    pub duration: f64,
}

impl Factor {
    pub fn new(group: Group, duration: f64) -> Self {
        Self { group, duration }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    pub factors: Vec<Factor>,
}

impl WindowPlan {
    pub fn new(factors: Vec<Factor>) -> Self {
        Self { factors }
    }

    /// Total time `D_g` group `g` is advanced within the window.
    pub fn group_duration(&self, g: Group) -> f64 {
        self.factors
            .iter()
            .filter(|f| f.group == g)
            .map(|f| f.duration)
            .sum()
    }

    /// Locates the moment group `g` reaches the clock value corresponding
    /// to window offset `offset` of a window of length `dt`. Returns the
    /// index of the factor holding that moment and the time elapsed inside
    /// it, or `None` when the group never runs in this window.
    pub fn locate(&self, g: Group, offset: f64, dt: f64) -> Option<(usize, f64)> {
        let total = self.group_duration(g);
        if total <= 0.0 {
            return None;
        }
        let clock = (offset / dt).clamp(0.0, 1.0) * total;
        let mut before = 0.0;
        let mut last = None;
        for (i, f) in self.factors.iter().enumerate() {
            if f.group != g {
                continue;
            }
            last = Some((i, before));
            if clock <= before + f.duration * (1.0 + 1e-12) {
                return Some((i, (clock - before).clamp(0.0, f.duration)));
            }
            before += f.duration;
        }
        last.map(|(i, b)| (i, self.factors[i].duration.min(clock - b)))
    }
}

/// The factors of one window. Deterministic for Lie and Strang; random
/// schedules draw two independent group labels `(ξ₁, ξ₂)` from `rng`, each
/// selecting group 1 with probability `p`.
pub fn draw_window_plan<R: Rng + ?Sized>(sched: &Schedule, rng: &mut R) -> WindowPlan {
    let dt = sched.dt;
    let factors = match sched.kind {
        SchemeKind::Lie => vec![Factor::new(Group::One, dt), Factor::new(Group::Two, dt)],
        SchemeKind::Strang => vec![
            Factor::new(Group::One, 0.5 * dt),
            Factor::new(Group::Two, dt),
            Factor::new(Group::One, 0.5 * dt),
        ],
        SchemeKind::Random => {
            let d = sched.random_duration();
            (0..2)
                .map(|_| {
                    let g = if rng.gen::<f64>() < sched.p {
                        Group::One
                    } else {
                        Group::Two
                    };
                    Factor::new(g, d)
                })
                .collect()
        }
    };
    WindowPlan::new(factors)
}

/// Index of the window holding grid time `t > 0`.
fn window_of(t: f64, dt: f64, n: usize) -> usize {
    let k = (t / dt - 1e-9).ceil() as isize - 1;
    k.clamp(0, n as isize - 1) as usize
}

/// A grid sample scheduled inside one factor: snapshot slot and the
/// factor-local time.
#[derive(Debug, Clone, Copy)]
struct Sample {
    slot: usize,
    time: f64,
}

struct CellResult {
    cell: usize,
    state: Vec<u8>,
    /// Cell values at each requested sample, concatenated in sample order.
    samples: Vec<u8>,
}

/// Fractional-step KMC engine.
pub struct FsKmc<'a, M: RateModel + ?Sized> {
    model: &'a M,
    lat: &'a Lattice,
    dec: &'a Decomposition,
    schedule: Schedule,
    workers: usize,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl<'a, M: RateModel + ?Sized> FsKmc<'a, M> {
    pub fn new(
        model: &'a M,
        lat: &'a Lattice,
        dec: &'a Decomposition,
        schedule: Schedule,
    ) -> Result<Self, ScheduleError> {
        schedule.validate()?;
        if dec.range() < model.interaction_range() {
            return Err(ScheduleError::Range {
                dec: dec.range(),
                model: model.interaction_range(),
            });
        }
        let covered: usize = dec.cells().iter().map(|c| c.len()).sum();
        if covered != lat.n_sites() {
            return Err(ScheduleError::Lattice);
        }
        Ok(Self {
            model,
            lat,
            dec,
            schedule,
            workers: 1,
            pool: None,
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Distributes the cells of each factor over `n` workers. Results are
    /// bit-identical for every `n`.
    pub fn set_worker_count(&mut self, n: usize) -> Result<(), ScheduleError> {
        if n == 0 {
            return Err(ScheduleError::Workers);
        }
        self.pool = if n > 1 {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| ScheduleError::Pool(e.to_string()))?;
            Some(Arc::new(pool))
        } else {
            None
        };
        self.workers = n;
        Ok(())
    }

    /// Shares an existing pool instead of building one.
    pub fn with_pool(mut self, pool: Arc<rayon::ThreadPool>) -> Self {
        self.workers = pool.current_num_threads();
        self.pool = Some(pool);
        self
    }

    /// Runs windows `0..n` with `n = horizon / Δt` and records the
    /// configuration at every grid time in `[0, horizon]`.
    pub fn run(
        &self,
        mut sigma: Configuration,
        horizon: f64,
        seed: u64,
        replica: u64,
        grid: &[f64],
        recorder: &mut impl Recorder,
    ) -> Result<Configuration, ScheduleError> {
        let n = self.schedule.windows(horizon)?;
        let dt = self.schedule.dt;
        let first = grid.iter().take_while(|&&t| t <= 0.0).count();
        for i in 0..first {
            recorder.record(i, &sigma);
        }
        let mut next = first;
        for k in 0..n {
            let start = k as f64 * dt;
            let lo = next;
            while next < grid.len() && window_of(grid[next], dt, n) == k {
                next += 1;
            }
            let offsets: Vec<f64> = grid[lo..next].iter().map(|&t| t - start).collect();
            let mut rng = RngStream::schedule(seed, replica, k as u64);
            let plan = draw_window_plan(&self.schedule, &mut rng);
            let snapshots = self.run_window(&mut sigma, &plan, &offsets, seed, replica, k as u64);
            for (j, snap) in snapshots.iter().enumerate() {
                recorder.record(lo + j, snap);
            }
        }
        Ok(sigma)
    }

    /// Executes one window, returning the configurations recorded at the
    /// given offsets.
    fn run_window(
        &self,
        sigma: &mut Configuration,
        plan: &WindowPlan,
        offsets: &[f64],
        seed: u64,
        replica: u64,
        window: u64,
    ) -> Vec<Configuration> {
        let dt = self.schedule.dt;
        let mut snapshots = vec![sigma.clone(); offsets.len()];
        let mut per_factor: Vec<Vec<Sample>> = vec![Vec::new(); plan.factors.len()];
        for (slot, &offset) in offsets.iter().enumerate() {
            for g in [Group::One, Group::Two] {
                if let Some((fi, local)) = plan.locate(g, offset, dt) {
                    per_factor[fi].push(Sample { slot, time: local });
                }
            }
        }
        for samples in &mut per_factor {
            samples.sort_by(|a, b| a.time.total_cmp(&b.time));
        }

        for (fi, factor) in plan.factors.iter().enumerate() {
            let cells = self.dec.group_cells(factor.group);
            let samples = &per_factor[fi];
            let key = (seed, replica, window, fi as u64);
            match &self.pool {
                Some(pool) if cells.len() > 1 => {
                    let frozen: &Configuration = sigma;
                    let results: Vec<CellResult> = pool.install(|| {
                        cells
                            .par_iter()
                            .map(|&m| {
                                let mut local = frozen.clone();
                                let sites = self.dec.cell(m).sites();
                                let mut buf = Vec::with_capacity(samples.len() * sites.len());
                                self.run_cell(&mut local, m, factor.duration, samples, key, |_, s| {
                                    buf.extend(sites.iter().map(|&x| s.get(x)));
                                });
                                let state = sites.iter().map(|&x| local.get(x)).collect();
                                CellResult { cell: m, state, samples: buf }
                            })
                            .collect()
                    });
                    for r in results {
                        let sites = self.dec.cell(r.cell).sites();
                        for (&x, &v) in sites.iter().zip(&r.state) {
                            sigma.set(x, v);
                        }
                        if !sites.is_empty() {
                            for (sample, values) in samples.iter().zip(r.samples.chunks(sites.len())) {
                                for (&x, &v) in sites.iter().zip(values) {
                                    snapshots[sample.slot].set(x, v);
                                }
                            }
                        }
                    }
                }
                _ => {
                    // same-group cells never read each other's sites, so
                    // running them one after another in place is equivalent
                    for &m in cells {
                        let sites = self.dec.cell(m).sites();
                        self.run_cell(sigma, m, factor.duration, samples, key, |slot, s| {
                            for &x in sites {
                                snapshots[slot].set(x, s.get(x));
                            }
                        });
                    }
                }
            }
        }
        snapshots
    }

    /// Advances cell `m` by `duration`, handing `sink(slot, σ)` the
    /// configuration at each requested sample time, in sample order.
    fn run_cell(
        &self,
        sigma: &mut Configuration,
        m: usize,
        duration: f64,
        samples: &[Sample],
        key: (u64, u64, u64, u64),
        mut sink: impl FnMut(usize, &Configuration),
    ) {
        let (seed, replica, window, factor) = key;
        let sites = self.dec.cell(m);
        let mut rng = RngStream::cell(seed, replica, m as u64, window, factor);
        let mut clock = SimClock::default();
        let times: Vec<f64> = samples.iter().map(|s| s.time).collect();
        let mut kernel = Kernel::new(self.model, self.lat, sites, sigma);
        kernel.run_interval(sigma, &mut rng, &mut clock, duration, &times, |i, s| sink(samples[i].slot, s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArrheniusSpinFlip, KawasakiExchange};

    #[test]
    fn deterministic_plans() {
        let mut rng = RngStream::from_seed_u64(0);
        let lie = draw_window_plan(&Schedule::lie(0.5), &mut rng);
        assert_eq!(
            lie.factors,
            vec![Factor::new(Group::One, 0.5), Factor::new(Group::Two, 0.5)]
        );
        let strang = draw_window_plan(&Schedule::strang(0.5), &mut rng);
        assert_eq!(
            strang.factors,
            vec![
                Factor::new(Group::One, 0.25),
                Factor::new(Group::Two, 0.5),
                Factor::new(Group::One, 0.25)
            ]
        );
    }

    #[test]
    fn random_plans() {
        let mut rng = RngStream::from_seed_u64(4);
        let always_one = Schedule::random(0.5, 1.0, RandomMode::Rescaled);
        for _ in 0..20 {
            let plan = draw_window_plan(&always_one, &mut rng);
            assert_eq!(
                plan.factors,
                vec![Factor::new(Group::One, 0.5), Factor::new(Group::One, 0.5)]
            );
        }
        let raw = Schedule::random(0.5, 0.0, RandomMode::Raw);
        let plan = draw_window_plan(&raw, &mut rng);
        assert_eq!(
            plan.factors,
            vec![Factor::new(Group::Two, 0.25), Factor::new(Group::Two, 0.25)]
        );
        let dist = Schedule::random(1.0, 0.3, RandomMode::Rescaled).plan_distribution();
        let total: f64 = dist.iter().map(|(w, _)| w).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert_eq!(dist.len(), 4);
    }

    #[test]
    fn locate_maps_group_clocks() {
        let strang = WindowPlan::new(vec![
            Factor::new(Group::One, 0.5),
            Factor::new(Group::Two, 1.0),
            Factor::new(Group::One, 0.5),
        ]);
        assert_eq!(strang.locate(Group::One, 0.25, 1.0), Some((0, 0.25)));
        assert_eq!(strang.locate(Group::One, 0.5, 1.0), Some((0, 0.5)));
        assert_eq!(strang.locate(Group::One, 0.75, 1.0), Some((2, 0.25)));
        assert_eq!(strang.locate(Group::One, 1.0, 1.0), Some((2, 0.5)));
        assert_eq!(strang.locate(Group::Two, 0.75, 1.0), Some((1, 0.75)));
        let ones = WindowPlan::new(vec![Factor::new(Group::One, 1.0), Factor::new(Group::One, 1.0)]);
        assert_eq!(ones.locate(Group::Two, 0.5, 1.0), None);
        assert_eq!(ones.locate(Group::One, 0.75, 1.0), Some((1, 0.5)));
    }

    #[test]
    fn validates_inputs() {
        assert!(Schedule::lie(0.0).validate().is_err());
        assert!(Schedule::random(1.0, 1.5, RandomMode::Raw).validate().is_err());
        assert_eq!(Schedule::lie(0.25).windows(1.0), Ok(4));
        assert_eq!(Schedule::lie(0.1).windows(0.3), Ok(3));
        assert!(Schedule::lie(0.3).windows(1.0).is_err());
        assert_eq!(Schedule::lie(0.3).windows(0.0), Ok(0));
    }

    #[test]
    fn worker_count_must_be_positive() {
        let lat = Lattice::ring(8).unwrap();
        let dec = Decomposition::new(&lat, 2, 1).unwrap();
        let m = ArrheniusSpinFlip::new(1.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        let mut engine = FsKmc::new(&m, &lat, &dec, Schedule::lie(0.5)).unwrap();
        assert_eq!(engine.set_worker_count(0), Err(ScheduleError::Workers));
        assert!(engine.set_worker_count(16).is_ok());
    }

    fn trajectory<M: RateModel>(engine: &FsKmc<M>, n: usize, grid: &[f64], horizon: f64) -> Vec<Configuration> {
        let mut rec = vec![Configuration::empty(0); grid.len()];
        let out = engine
            .run(Configuration::empty(n), horizon, 42, 3, grid, &mut |i: usize, s: &Configuration| {
                rec[i] = s.clone()
            })
            .unwrap();
        rec.push(out);
        rec
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let lat = Lattice::ring(40).unwrap();
        let dec = Decomposition::new(&lat, 5, 1).unwrap();
        let m = ArrheniusSpinFlip::new(2.0, 0.37, 0.5, 1.0, 1.0).unwrap();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.1).collect();
        for sched in [
            Schedule::lie(0.25),
            Schedule::strang(0.5),
            Schedule::random(0.25, 0.5, RandomMode::Rescaled),
        ] {
            let mut serial = FsKmc::new(&m, &lat, &dec, sched).unwrap();
            serial.set_worker_count(1).unwrap();
            let mut parallel = FsKmc::new(&m, &lat, &dec, sched).unwrap();
            parallel.set_worker_count(3).unwrap();
            assert_eq!(trajectory(&serial, 40, &grid, 2.0), trajectory(&parallel, 40, &grid, 2.0));
        }
    }

    #[test]
    fn random_with_p_one_freezes_group_two() {
        let lat = Lattice::ring(24).unwrap();
        let dec = Decomposition::new(&lat, 3, 1).unwrap();
        let m = ArrheniusSpinFlip::new(1.0, 0.5, 0.5, 1.0, 1.0).unwrap();
        let engine = FsKmc::new(&m, &lat, &dec, Schedule::random(0.5, 1.0, RandomMode::Rescaled)).unwrap();
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.5).collect();
        let rec = trajectory(&engine, 24, &grid, 5.0);
        for s in &rec {
            for &x in dec.group_sites(Group::Two).sites() {
                assert_eq!(s.get(x), 0);
            }
        }
        assert!(rec.last().unwrap().total() > 0);
    }

    #[test]
    fn factors_leave_the_complement_untouched() {
        // single-factor windows expose the state after each factor
        let lat = Lattice::ring(24).unwrap();
        let dec = Decomposition::new(&lat, 3, 1).unwrap();
        let m = ArrheniusSpinFlip::new(1.0, 0.5, 0.5, 1.0, 1.0).unwrap();
        let engine = FsKmc::new(&m, &lat, &dec, Schedule::lie(0.5)).unwrap();
        let mut sigma = Configuration::from_spins((0..24).map(|x| (x % 2) as u8).collect(), 1).unwrap();
        for (fi, g) in [Group::One, Group::Two, Group::One].into_iter().enumerate() {
            let plan = WindowPlan::new(vec![Factor::new(g, 0.5)]);
            let before = sigma.clone();
            engine.run_window(&mut sigma, &plan, &[], 1, 0, fi as u64);
            let other = if g == Group::One { Group::Two } else { Group::One };
            for &x in dec.group_sites(other).sites() {
                assert_eq!(sigma.get(x), before.get(x));
            }
        }
    }

    #[test]
    fn every_grid_time_is_recorded_once() {
        let lat = Lattice::ring(8).unwrap();
        let dec = Decomposition::new(&lat, 2, 1).unwrap();
        let m = ArrheniusSpinFlip::new(1.0, 0.5, 0.5, 1.0, 1.0).unwrap();
        let grid: Vec<f64> = (0..=30).map(|i| i as f64 * 3.0 / 30.0).collect();
        for sched in [
            Schedule::lie(0.25),
            Schedule::strang(0.75),
            Schedule::random(0.1, 0.5, RandomMode::Raw),
        ] {
            let engine = FsKmc::new(&m, &lat, &dec, sched).unwrap();
            let mut hits = vec![0; grid.len()];
            engine
                .run(Configuration::empty(8), 3.0, 1, 0, &grid, &mut |i: usize, _: &Configuration| {
                    hits[i] += 1
                })
                .unwrap();
            assert!(hits.iter().all(|&h| h == 1), "{sched:?}: {hits:?}");
        }
    }

    #[test]
    fn kawasaki_conserves_under_all_schedules() {
        let lat = Lattice::ring(24).unwrap();
        let dec = Decomposition::new(&lat, 3, 1).unwrap();
        let k = KawasakiExchange::new(1.0, 0.5, 1.0).unwrap();
        let init = Configuration::from_spins((0..24).map(|x| (x % 3 == 0) as u8).collect(), 1).unwrap();
        for sched in [
            Schedule::lie(0.5),
            Schedule::strang(0.5),
            Schedule::random(0.5, 0.5, RandomMode::Rescaled),
        ] {
            let engine = FsKmc::new(&k, &lat, &dec, sched).unwrap();
            let mut totals = Vec::new();
            let out = engine
                .run(init.clone(), 20.0, 5, 0, &[0.0, 5.0, 10.0, 20.0], &mut |_: usize, s: &Configuration| {
                    totals.push(s.total())
                })
                .unwrap();
            assert!(totals.iter().all(|&t| t == init.total()));
            assert_eq!(out.total(), init.total());
            assert_ne!(out, init);
        }
    }
}

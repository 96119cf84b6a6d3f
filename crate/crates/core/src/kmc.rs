//! Exact serial SSA kernel restricted to an active site set.
//!
//! Each step draws one uniform `u ∈ (0, 1]` for the waiting time
//! `τ = −ln(u)/λ` and, if the jump lands inside the window, a second
//! uniform for the event, selected by a cumulative scan in ascending
//! `(x, ω)` order. A waiting time that crosses the window end fires nothing
//! and the residual is discarded; by memorylessness this is exact.
//!
//! The kernel caches per-site rates and after each event re-evaluates only
//! the sites whose rates can have changed. The total rate is re-summed in
//! scan order every step, so the sampled path is bit-identical to a full
//! rescan (see [`RateUpdate`]).

use rand::Rng;

use crate::lattice::{Configuration, Lattice, SiteSet};
use crate::models::{Event, RateModel, Tag};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimClock {
    pub t: f64,
    pub events: u64,
}

impl SimClock {
    pub fn at(t: f64) -> Self {
        Self { t, events: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Fired(Event),
    /// No event before the window end; the clock sits at the window end.
    Exhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateUpdate {
    #[default]
    Incremental,
    FullScan,
}

/// λ = Σ_{x ∈ sites} Σ_ω c(x, ω; σ).
pub fn total_rate<M: RateModel + ?Sized>(
    model: &M,
    lat: &Lattice,
    sigma: &Configuration,
    sites: &SiteSet,
) -> f64 {
    let mut buf = Vec::new();
    let mut total = 0.0;
    for &x in sites.sites() {
        buf.clear();
        model.site_events(lat, sigma, x, sites, &mut buf);
        for e in &buf {
            total += e.rate;
        }
    }
    total
}

/// SSA state over one active site set: cached rates and tags laid out as
/// `slots × per_site` in ascending `(x, ω)` order.
pub struct Kernel<'a, M: RateModel + ?Sized> {
    model: &'a M,
    lat: &'a Lattice,
    sites: &'a SiteSet,
    per_site: usize,
    rates: Vec<f64>,
    tags: Vec<Tag>,
    scratch: Vec<Event>,
    touched: Vec<usize>,
    update: RateUpdate,
}

impl<'a, M: RateModel + ?Sized> Kernel<'a, M> {
    pub fn new(model: &'a M, lat: &'a Lattice, sites: &'a SiteSet, sigma: &Configuration) -> Self {
        let per_site = model.max_events_per_site(lat).max(1);
        let len = per_site * sites.len();
        let mut k = Self {
            model,
            lat,
            sites,
            per_site,
            rates: vec![0.0; len],
            tags: vec![Tag::Flip; len],
            scratch: Vec::with_capacity(per_site),
            touched: Vec::new(),
            update: RateUpdate::Incremental,
        };
        k.refresh_all(sigma);
        k
    }

    pub fn with_update(mut self, update: RateUpdate) -> Self {
        self.update = update;
        self
    }

    pub fn refresh_all(&mut self, sigma: &Configuration) {
        for slot in 0..self.sites.len() {
            self.refresh_slot(sigma, slot);
        }
    }

    fn refresh_slot(&mut self, sigma: &Configuration, slot: usize) {
        let x = self.sites.sites()[slot];
        self.scratch.clear();
        self.model
            .site_events(self.lat, sigma, x, self.sites, &mut self.scratch);
        debug_assert!(self.scratch.len() <= self.per_site);
        let base = slot * self.per_site;
        for j in 0..self.per_site {
            match self.scratch.get(j) {
                Some(e) => {
                    self.rates[base + j] = e.rate;
                    self.tags[base + j] = e.tag;
                }
                None => self.rates[base + j] = 0.0,
            }
        }
    }

    fn refresh_after(&mut self, sigma: &Configuration, event: &Event) {
        if self.update == RateUpdate::FullScan {
            self.refresh_all(sigma);
            return;
        }
        let range = self.model.interaction_range();
        let (changed, count) = event.changed_sites();
        let (lat, sites) = (self.lat, self.sites);
        let mut touched = std::mem::take(&mut self.touched);
        touched.clear();
        for &c in &changed[..count] {
            touched.extend(sites.slot_of(c));
            lat.for_each_within(c, range, |y| touched.extend(sites.slot_of(y)));
        }
        for &slot in &touched {
            self.refresh_slot(sigma, slot);
        }
        self.touched = touched;
    }

    /// Current total rate of the active set, summed in scan order.
    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    fn select(&self, target: f64) -> Option<usize> {
        let mut cum = 0.0;
        let mut last = None;
        for (i, &r) in self.rates.iter().enumerate() {
            if r > 0.0 {
                cum += r;
                last = Some(i);
                if cum > target {
                    return Some(i);
                }
            }
        }
        // rounding can leave target == λ; fall back to the last live event
        last
    }

    /// One SSA step. `before_jump(t_jump, σ)` is called with the
    /// pre-jump configuration when an event is about to fire.
    pub fn step_with<R: Rng + ?Sized>(
        &mut self,
        sigma: &mut Configuration,
        rng: &mut R,
        clock: &mut SimClock,
        t_end: f64,
        mut before_jump: impl FnMut(f64, &Configuration),
    ) -> StepOutcome {
        let lambda = self.total_rate();
        if lambda <= 0.0 {
            clock.t = t_end;
            return StepOutcome::Exhausted;
        }
        let u = 1.0 - rng.gen::<f64>();
        let tau = -u.ln() / lambda;
        let t_jump = clock.t + tau;
        if t_jump > t_end {
            clock.t = t_end;
            return StepOutcome::Exhausted;
        }
        let target = rng.gen::<f64>() * lambda;
        let idx = self
            .select(target)
            .expect("positive total rate implies a live event");
        let slot = idx / self.per_site;
        let event = Event {
            site: self.sites.sites()[slot],
            tag: self.tags[idx],
            rate: self.rates[idx],
        };
        before_jump(t_jump, sigma);
        clock.t = t_jump;
        clock.events += 1;
        event.apply(sigma);
        self.refresh_after(sigma, &event);
        StepOutcome::Fired(event)
    }

    pub fn step<R: Rng + ?Sized>(
        &mut self,
        sigma: &mut Configuration,
        rng: &mut R,
        clock: &mut SimClock,
        t_end: f64,
    ) -> StepOutcome {
        self.step_with(sigma, rng, clock, t_end, |_, _| {})
    }

    /// Runs until the window `(clock.t, t1]` is exhausted. `samples` are
    /// ascending times; `on_sample(i, σ)` receives the configuration holding
    /// at `samples[i]`. A jump exactly at a sample time is seen post-jump.
    pub fn run_interval<R: Rng + ?Sized>(
        &mut self,
        sigma: &mut Configuration,
        rng: &mut R,
        clock: &mut SimClock,
        t1: f64,
        samples: &[f64],
        mut on_sample: impl FnMut(usize, &Configuration),
    ) {
        debug_assert!(clock.t <= t1);
        let mut next = 0;
        loop {
            let outcome = self.step_with(sigma, rng, clock, t1, |t_jump, s| {
                while next < samples.len() && samples[next] < t_jump {
                    on_sample(next, s);
                    next += 1;
                }
            });
            if outcome == StepOutcome::Exhausted {
                break;
            }
        }
        while next < samples.len() {
            on_sample(next, sigma);
            next += 1;
        }
    }
}

/// Single SSA step from a freshly scanned rate table.
pub fn ssa_step<M: RateModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    lat: &Lattice,
    sigma: &mut Configuration,
    sites: &SiteSet,
    rng: &mut R,
    clock: &mut SimClock,
    t_end: f64,
) -> StepOutcome {
    Kernel::new(model, lat, sites, sigma).step(sigma, rng, clock, t_end)
}

/// Simulates the active set from `clock.t` to `t1`; see
/// [`Kernel::run_interval`].
#[allow(clippy::too_many_arguments)]
pub fn run_interval<M: RateModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    lat: &Lattice,
    sigma: &mut Configuration,
    sites: &SiteSet,
    rng: &mut R,
    clock: &mut SimClock,
    t1: f64,
    samples: &[f64],
    on_sample: impl FnMut(usize, &Configuration),
) {
    Kernel::new(model, lat, sites, sigma).run_interval(sigma, rng, clock, t1, samples, on_sample)
}

/// Receives the configuration holding at each grid time.
pub trait Recorder {
    fn record(&mut self, index: usize, sigma: &Configuration);
}

impl<F: FnMut(usize, &Configuration)> Recorder for F {
    fn record(&mut self, index: usize, sigma: &Configuration) {
        self(index, sigma)
    }
}

/// Serial SSA over the whole lattice on `[0, horizon]`. Grid times at or
/// before zero are recorded from the initial configuration.
pub fn run_ssa<M: RateModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    lat: &Lattice,
    mut sigma: Configuration,
    horizon: f64,
    rng: &mut R,
    grid: &[f64],
    recorder: &mut impl Recorder,
) -> Configuration {
    let all = SiteSet::all(lat.n_sites());
    let first = grid.iter().take_while(|&&t| t <= 0.0).count();
    for i in 0..first {
        recorder.record(i, &sigma);
    }
    let mut clock = SimClock::default();
    let mut kernel = Kernel::new(model, lat, &all, &sigma);
    kernel.run_interval(&mut sigma, rng, &mut clock, horizon, &grid[first..], |i, s| {
        recorder.record(first + i, s)
    });
    sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArrheniusSpinFlip, KawasakiExchange, Model};
    use crate::rng::RngStream;

    fn flip_model(beta: f64, j: f64, h: f64) -> ArrheniusSpinFlip {
        ArrheniusSpinFlip::new(beta, j, h, 1.0, 1.0).unwrap()
    }

    #[test]
    fn total_rates() {
        let lat = Lattice::ring(10).unwrap();
        let m = flip_model(1.0, 1.0, 0.0);
        let all = SiteSet::all(10);
        assert_eq!(total_rate(&m, &lat, &Configuration::empty(10), &all), 10.0);
        assert_eq!(total_rate(&m, &lat, &Configuration::empty(10), &SiteSet::none(10)), 0.0);

        let ring = Lattice::ring(4).unwrap();
        let s = Configuration::from_spins(vec![1, 1, 0, 0], 1).unwrap();
        let expect = 2.0 + 2.0 * (-1.0f64).exp();
        let got = total_rate(&m, &ring, &s, &SiteSet::all(4));
        assert!((got - expect).abs() < 1e-14);
        assert!((got - 2.735759).abs() < 1e-6);
    }

    #[test]
    fn single_site_always_flips() {
        let lat = Lattice::new(1, &[2]).unwrap();
        let m = flip_model(0.0, 0.0, 0.0);
        let sites = SiteSet::new(2, [0]);
        let mut rng = RngStream::from_seed_u64(1);
        for _ in 0..100 {
            let mut s = Configuration::empty(2);
            let mut clock = SimClock::default();
            let out = ssa_step(&m, &lat, &mut s, &sites, &mut rng, &mut clock, f64::INFINITY);
            assert!(matches!(out, StepOutcome::Fired(e) if e.site == 0));
            assert_eq!(s.get(0), 1);
            assert!(clock.t > 0.0);
        }
    }

    #[test]
    fn overshoot_leaves_state_unchanged() {
        let lat = Lattice::ring(4).unwrap();
        let m = flip_model(0.0, 0.0, 0.0);
        let all = SiteSet::all(4);
        let mut rng = RngStream::from_seed_u64(3);
        let mut s = Configuration::empty(4);
        let mut clock = SimClock::default();
        // window of length 1e-12 is all but certainly overshot
        let out = ssa_step(&m, &lat, &mut s, &all, &mut rng, &mut clock, 1e-12);
        assert_eq!(out, StepOutcome::Exhausted);
        assert_eq!(clock.t, 1e-12);
        assert_eq!(s, Configuration::empty(4));
    }

    #[test]
    fn empty_window_and_empty_set() {
        let lat = Lattice::ring(4).unwrap();
        let m = flip_model(0.0, 0.0, 0.0);
        let mut rng = RngStream::from_seed_u64(5);
        let mut s = Configuration::empty(4);
        let mut clock = SimClock::at(2.0);
        run_interval(&m, &lat, &mut s, &SiteSet::all(4), &mut rng, &mut clock, 2.0, &[], |_, _| {});
        assert_eq!(clock.events, 0);
        assert_eq!(s, Configuration::empty(4));

        let mut clock = SimClock::default();
        run_interval(&m, &lat, &mut s, &SiteSet::none(4), &mut rng, &mut clock, 50.0, &[], |_, _| {});
        assert_eq!(clock.events, 0);
        assert_eq!(clock.t, 50.0);
        assert_eq!(s, Configuration::empty(4));
    }

    #[test]
    fn samples_see_the_holding_configuration() {
        let lat = Lattice::ring(6).unwrap();
        let m = flip_model(1.0, 0.5, 0.2);
        let all = SiteSet::all(6);
        let grid: Vec<f64> = (1..=20).map(|i| i as f64 * 0.25).collect();
        // replay: record every jump, then reconstruct values at grid times
        let mut rng = RngStream::from_seed_u64(11);
        let mut s = Configuration::empty(6);
        let mut clock = SimClock::default();
        let mut seen = Vec::new();
        run_interval(&m, &lat, &mut s, &all, &mut rng, &mut clock, 5.0, &grid, |i, c| {
            seen.push((i, c.clone()))
        });
        assert_eq!(seen.len(), grid.len());

        let mut rng = RngStream::from_seed_u64(11);
        let mut s2 = Configuration::empty(6);
        let mut clock = SimClock::default();
        let mut kernel = Kernel::new(&m, &lat, &all, &s2);
        let mut path = vec![(0.0, s2.clone())];
        while let StepOutcome::Fired(_) = kernel.step(&mut s2, &mut rng, &mut clock, 5.0) {
            path.push((clock.t, s2.clone()));
        }
        assert_eq!(s, s2);
        for (i, c) in seen {
            let holding = path.iter().rev().find(|(t, _)| *t <= grid[i]).unwrap();
            assert_eq!(c, holding.1, "sample {i}");
        }
    }

    #[test]
    fn incremental_matches_full_scan() {
        let lat = Lattice::new(2, &[6, 5]).unwrap();
        let models = [
            Model::SpinFlip(flip_model(2.0, 0.37, 0.5)),
            Model::Kawasaki(KawasakiExchange::new(1.5, 0.8, 1.0).unwrap()),
        ];
        for m in &models {
            let sites = SiteSet::new(30, (0..30).filter(|x| x % 7 != 3));
            let init = Configuration::from_spins((0..30).map(|x| (x % 3 == 0) as u8).collect(), 1).unwrap();
            let run = |update| {
                let mut s = init.clone();
                let mut rng = RngStream::from_seed_u64(99);
                let mut clock = SimClock::default();
                let mut k = Kernel::new(m, &lat, &sites, &s).with_update(update);
                let mut fired = Vec::new();
                while let StepOutcome::Fired(e) = k.step(&mut s, &mut rng, &mut clock, 20.0) {
                    fired.push((clock.t.to_bits(), e.site, e.tag));
                    let fresh = total_rate(m, &lat, &s, &sites);
                    assert_eq!(fresh.to_bits(), k.total_rate().to_bits());
                }
                (s, fired)
            };
            let (a, fa) = run(RateUpdate::Incremental);
            let (b, fb) = run(RateUpdate::FullScan);
            assert!(fa.len() > 10);
            assert_eq!(fa, fb);
            assert_eq!(a, b);
        }
    }
}

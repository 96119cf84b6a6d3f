//! Exact reference for small systems: dense generators, the matrix
//! exponential and exact expectations of the serial and split processes.
//!
//! Orientation: probability vectors are columns and evolve as `v̇ = Q v`,
//! so `Q[i][j]` is the rate of the jump `j → i` and every column sums to
//! zero. States are indexed base-`(S_max + 1)` little-endian: site `x`
//! carries the digit of weight `(S_max + 1)^x`.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::lattice::{Configuration, Decomposition, Group, Lattice, SiteSet};
use crate::models::RateModel;
use crate::observables::Observable;
use crate::scheduler::{Schedule, ScheduleError, WindowPlan};

/// Largest state space the oracle will build.
pub const MAX_STATES: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("state space of {states} states exceeds the oracle cap of {cap}")]
    StateSpace { states: usize, cap: usize },
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("observable {0} is not site-additive; intra-window split expectations need an additive observable")]
    NotAdditive(Observable),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Configuration ↔ state index codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateCodec {
    n_sites: usize,
    base: usize,
    states: usize,
}

impl StateCodec {
    pub fn new(n_sites: usize, max_spin: u8) -> Result<Self, OracleError> {
        let base = max_spin as usize + 1;
        let mut states: usize = 1;
        for _ in 0..n_sites {
            states = states.saturating_mul(base);
            if states > MAX_STATES {
                return Err(OracleError::StateSpace {
                    states: base.checked_pow(n_sites as u32).unwrap_or(usize::MAX),
                    cap: MAX_STATES,
                });
            }
        }
        Ok(Self {
            n_sites,
            base,
            states,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn encode(&self, sigma: &Configuration) -> usize {
        sigma
            .as_slice()
            .iter()
            .rev()
            .fold(0, |acc, &s| acc * self.base + s as usize)
    }

    pub fn decode(&self, mut index: usize) -> Configuration {
        let spins = (0..self.n_sites)
            .map(|_| {
                let s = (index % self.base) as u8;
                index /= self.base;
                s
            })
            .collect();
        Configuration::from_spins(spins, (self.base - 1) as u8).expect("digits are in range")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGenerator {
    pub matrix: Array2<f64>,
    pub codec: StateCodec,
}

impl DenseGenerator {
    pub fn dim(&self) -> usize {
        self.codec.states()
    }
}

/// Generator restricted to events rooted in `sites`. The whole lattice
/// gives `L`; a group's sites give `L₁` or `L₂`.
pub fn build_generator<M: RateModel + ?Sized>(
    model: &M,
    lat: &Lattice,
    sites: &SiteSet,
) -> Result<DenseGenerator, OracleError> {
    let codec = StateCodec::new(lat.n_sites(), model.max_spin())?;
    let d = codec.states();
    let mut q = Array2::<f64>::zeros((d, d));
    let mut events = Vec::new();
    for j in 0..d {
        let sigma = codec.decode(j);
        events.clear();
        for &x in sites.sites() {
            model.site_events(lat, &sigma, x, sites, &mut events);
        }
        for e in &events {
            let mut target = sigma.clone();
            e.apply(&mut target);
            let i = codec.encode(&target);
            q[[i, j]] += e.rate;
            q[[j, j]] -= e.rate;
        }
    }
    Ok(DenseGenerator { matrix: q, codec })
}

fn norm1(a: &Array2<f64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(t A)` by scaling and squaring with a truncated Taylor series.
///
/// `t A` is scaled by `2^-s` until its 1-norm is at most 1/2, the Taylor
/// series is summed until the next term falls below `1e-17` of the partial
/// sum in 1-norm, and the result is squared `s` times.
pub fn expm(a: &Array2<f64>, t: f64) -> Result<Array2<f64>, OracleError> {
    if t < 0.0 {
        return Err(OracleError::NegativeTime(t));
    }
    let (n, m) = a.dim();
    if n != m {
        return Err(OracleError::Dimension(n, m));
    }
    let scaled = a * t;
    let norm = norm1(&scaled);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let b = scaled / 2f64.powi(s);
    let mut sum = Array2::<f64>::eye(n);
    let mut term = Array2::<f64>::eye(n);
    for k in 1..=40 {
        term = term.dot(&b) / k as f64;
        sum += &term;
        if norm1(&term) <= 1e-17 * norm1(&sum) {
            break;
        }
    }
    for _ in 0..s {
        sum = sum.dot(&sum);
    }
    Ok(sum)
}

/// `exp(t Q) v`.
pub fn expm_apply(q: &DenseGenerator, v: &Array1<f64>, t: f64) -> Result<Array1<f64>, OracleError> {
    if v.len() != q.dim() {
        return Err(OracleError::Dimension(v.len(), q.dim()));
    }
    Ok(expm(&q.matrix, t)?.dot(v))
}

pub fn point_mass(codec: &StateCodec, zeta: &Configuration) -> Array1<f64> {
    let mut v = Array1::zeros(codec.states());
    v[codec.encode(zeta)] = 1.0;
    v
}

/// `f` evaluated on every state.
pub fn observable_vector(codec: &StateCodec, lat: &Lattice, f: &Observable) -> Array1<f64> {
    Array1::from_iter((0..codec.states()).map(|i| f.eval(lat, &codec.decode(i))))
}

/// `E[f(σ_t) | σ_0 = ζ]` for the full process.
pub fn exact_expectation<M: RateModel + ?Sized>(
    model: &M,
    lat: &Lattice,
    f: &Observable,
    t: f64,
    zeta: &Configuration,
) -> Result<f64, OracleError> {
    Ok(exact_curve(model, lat, f, &[t], zeta)?[0])
}

/// Exact expectations at several times.
pub fn exact_curve<M: RateModel + ?Sized>(
    model: &M,
    lat: &Lattice,
    f: &Observable,
    times: &[f64],
    zeta: &Configuration,
) -> Result<Vec<f64>, OracleError> {
    let q = build_generator(model, lat, &SiteSet::all(lat.n_sites()))?;
    let v = point_mass(&q.codec, zeta);
    let fv = observable_vector(&q.codec, lat, f);
    times
        .iter()
        .map(|&t| Ok(expm_apply(&q, &v, t)?.dot(&fv)))
        .collect()
}

/// Expected one-window transition matrix of a schedule: the plan-weighted
/// product of its factor exponentials, first factor acting first.
pub fn window_operator(
    parts: [&DenseGenerator; 2],
    sched: &Schedule,
) -> Result<Array2<f64>, OracleError> {
    let d = parts[0].dim();
    if parts[1].dim() != d {
        return Err(OracleError::Dimension(d, parts[1].dim()));
    }
    let mut cache = ExpCache::default();
    let mut total = Array2::<f64>::zeros((d, d));
    for (weight, plan) in sched.plan_distribution() {
        if weight == 0.0 {
            continue;
        }
        let mut op = Array2::<f64>::eye(d);
        for f in &plan.factors {
            op = cache.get(parts, f.group, f.duration)?.dot(&op);
        }
        total = total + op * weight;
    }
    Ok(total)
}

/// `E[f]` after `n` windows of the split scheme started from `ζ`:
/// for Lie `(e^{Δt L₁} e^{Δt L₂})^n f(ζ)`, for Strang
/// `(e^{Δt/2 L₁} e^{Δt L₂} e^{Δt/2 L₁})^n f(ζ)`; random schedules average
/// over the draws.
pub fn splitting_expectation(
    l1: &DenseGenerator,
    l2: &DenseGenerator,
    sched: &Schedule,
    n: usize,
    f: &Array1<f64>,
    zeta: &Configuration,
) -> Result<f64, OracleError> {
    sched.validate()?;
    let w = window_operator([l1, l2], sched)?;
    let mut v = point_mass(&l1.codec, zeta);
    for _ in 0..n {
        v = w.dot(&v);
    }
    Ok(v.dot(f))
}

pub fn commutator(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    a.dot(b) - b.dot(a)
}

pub fn max_abs(a: &Array2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Default)]
struct ExpCache {
    map: HashMap<(Group, u64), Array2<f64>>,
}

impl ExpCache {
    fn get(&mut self, parts: [&DenseGenerator; 2], g: Group, t: f64) -> Result<&Array2<f64>, OracleError> {
        let key = (g, t.to_bits());
        if !self.map.contains_key(&key) {
            let e = expm(&parts[g.index()].matrix, t)?;
            self.map.insert(key, e);
        }
        Ok(&self.map[&key])
    }
}

/// Generators of a small decomposed system, for exact serial and split
/// expectations.
pub struct SplitOracle {
    lat: Lattice,
    full: DenseGenerator,
    parts: [DenseGenerator; 2],
    group_sites: [SiteSet; 2],
}

impl SplitOracle {
    pub fn new<M: RateModel + ?Sized>(
        model: &M,
        lat: &Lattice,
        dec: &Decomposition,
    ) -> Result<Self, OracleError> {
        let full = build_generator(model, lat, &SiteSet::all(lat.n_sites()))?;
        let g1 = dec.group_sites(Group::One).clone();
        let g2 = dec.group_sites(Group::Two).clone();
        let parts = [
            build_generator(model, lat, &g1)?,
            build_generator(model, lat, &g2)?,
        ];
        Ok(Self {
            lat: lat.clone(),
            full,
            parts,
            group_sites: [g1, g2],
        })
    }

    pub fn full(&self) -> &DenseGenerator {
        &self.full
    }

    pub fn part(&self, g: Group) -> &DenseGenerator {
        &self.parts[g.index()]
    }

    pub fn observable(&self, f: &Observable) -> Array1<f64> {
        observable_vector(&self.full.codec, &self.lat, f)
    }

    pub fn exact_curve(&self, f: &Observable, times: &[f64], zeta: &Configuration) -> Result<Vec<f64>, OracleError> {
        let v = point_mass(&self.full.codec, zeta);
        let fv = self.observable(f);
        times
            .iter()
            .map(|&t| Ok(expm_apply(&self.full, &v, t)?.dot(&fv)))
            .collect()
    }

    pub fn splitting_expectation(
        &self,
        sched: &Schedule,
        n: usize,
        f: &Observable,
        zeta: &Configuration,
    ) -> Result<f64, OracleError> {
        splitting_expectation(&self.parts[0], &self.parts[1], sched, n, &self.observable(f), zeta)
    }

    pub fn commutator(&self) -> Array2<f64> {
        commutator(&self.parts[0].matrix, &self.parts[1].matrix)
    }

    /// Parts of an additive observable carried by each group:
    /// `f(σ) = f₁(σ) + f₂(σ)` with `f_g` depending only on group-`g` sites.
    fn group_parts(&self, f: &Observable) -> [Array1<f64>; 2] {
        let codec = &self.full.codec;
        let zero = f.eval(&self.lat, &Configuration::empty(self.lat.n_sites()));
        let part = |g: usize, shift: f64| {
            Array1::from_iter((0..codec.states()).map(|i| {
                let mut s = codec.decode(i);
                for x in 0..self.lat.n_sites() {
                    if !self.group_sites[g].contains(x) {
                        s.set(x, 0);
                    }
                }
                f.eval(&self.lat, &s) - shift
            }))
        };
        [part(0, 0.0), part(1, zero)]
    }

    /// Expected value of `f` on the recorded FS-KMC path at times in
    /// `[0, horizon]`, using the per-group clock convention of the
    /// scheduler. Times strictly inside a window need a site-additive `f`;
    /// window ends accept any observable.
    pub fn splitting_curve(
        &self,
        sched: &Schedule,
        horizon: f64,
        f: &Observable,
        times: &[f64],
        zeta: &Configuration,
    ) -> Result<Vec<f64>, OracleError> {
        let n = sched.windows(horizon)?;
        let dt = sched.dt;
        let additive = f.is_site_additive();
        let at_end = |t: f64| ((t / dt).round() * dt - t).abs() <= 1e-9 * dt;
        if !additive && times.iter().any(|&t| t > 0.0 && !at_end(t)) {
            return Err(OracleError::NotAdditive(*f));
        }
        let fparts = if additive {
            self.group_parts(f)
        } else {
            let d = self.full.codec.states();
            [Array1::zeros(d), Array1::zeros(d)]
        };
        let fv = self.observable(f);
        let parts = [&self.parts[0], &self.parts[1]];
        let plans: Vec<(f64, WindowPlan)> = sched.plan_distribution();
        let w = window_operator(parts, sched)?;
        let mut cache = ExpCache::default();

        let mut out = vec![0.0; times.len()];
        let mut v = point_mass(&self.full.codec, zeta);
        let mut next = 0;
        while next < times.len() && times[next] <= 0.0 {
            out[next] = v.dot(&fv);
            next += 1;
        }
        for k in 0..n {
            let start = k as f64 * dt;
            let end = if k + 1 == n { horizon } else { (k + 1) as f64 * dt };
            let lo = next;
            while next < times.len() && (times[next] <= end + 1e-9 * dt || k + 1 == n) {
                next += 1;
            }
            if next > lo {
                for (weight, plan) in &plans {
                    if *weight == 0.0 {
                        continue;
                    }
                    // distribution at the start of every factor
                    let mut starts = Vec::with_capacity(plan.factors.len());
                    let mut cur = v.clone();
                    for fac in &plan.factors {
                        starts.push(cur.clone());
                        cur = cache.get(parts, fac.group, fac.duration)?.dot(&cur);
                    }
                    for i in lo..next {
                        let offset = times[i] - start;
                        if (offset - dt).abs() <= 1e-9 * dt {
                            out[i] += weight * cur.dot(&fv);
                            continue;
                        }
                        let mut value = 0.0;
                        for g in [Group::One, Group::Two] {
                            let dist = match plan.locate(g, offset, dt) {
                                Some((fi, local)) => expm(&parts[g.index()].matrix, local)?.dot(&starts[fi]),
                                None => v.clone(),
                            };
                            value += dist.dot(&fparts[g.index()]);
                        }
                        out[i] += weight * value;
                    }
                }
            }
            v = w.dot(&v);
        }
        Ok(out)
    }
}

//! Transition mechanisms: per-event rates, update rules and interaction
//! ranges.
//!
//! A model is a plug-in implementing [`RateModel`]. Events are rooted at a
//! site `x`; a model reports the events rooted at `x` in ascending tag
//! order, which together with ascending site order fixes the global event
//! order used by the SSA selection scan.

use thiserror::Error;

use crate::lattice::{Configuration, Lattice, SiteSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("update tag {tag:?} is not valid for the {model} model")]
    InvalidTag { model: &'static str, tag: Tag },
    #[error("invalid model parameter {name} = {value}")]
    Parameter { name: &'static str, value: f64 },
}

/// The update part `ω` of an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    /// Toggle the spin at the root site.
    Flip,
    /// Swap the root site with its neighbor along direction `dir`
    /// (`2 * axis` for the negative step, `2 * axis + 1` for the positive one).
    Exchange { dir: u8, partner: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub site: usize,
    pub tag: Tag,
    pub rate: f64,
}

impl Event {
    /// Applies the update rule in place. Flips assume binary spins.
    #[inline]
    pub fn apply(&self, sigma: &mut Configuration) {
        match self.tag {
            Tag::Flip => sigma.set(self.site, 1 - sigma.get(self.site)),
            Tag::Exchange { partner, .. } => sigma.swap(self.site, partner),
        }
    }

    /// Sites whose spin the event modifies.
    pub fn changed_sites(&self) -> ([usize; 2], usize) {
        match self.tag {
            Tag::Flip => ([self.site, self.site], 1),
            Tag::Exchange { partner, .. } => ([self.site, partner], 2),
        }
    }
}

pub fn apply_event(sigma: &mut Configuration, event: &Event) {
    event.apply(sigma)
}

pub trait RateModel: Send + Sync {
    fn name(&self) -> &'static str;

    /// Largest spin value; spins live in `0..=max_spin`.
    fn max_spin(&self) -> u8 {
        1
    }

    /// Largest distance at which another spin can influence a rate rooted
    /// at a site. Structural: it does not depend on parameter values.
    fn interaction_range(&self) -> usize;

    /// Upper bound on the number of events rooted at one site.
    fn max_events_per_site(&self, lat: &Lattice) -> usize;

    /// Pushes the events rooted at `x` onto `out` in ascending tag order.
    /// Events that would modify a site outside `active` are not admissible
    /// and zero-rate events may be skipped.
    fn site_events(
        &self,
        lat: &Lattice,
        sigma: &Configuration,
        x: usize,
        active: &SiteSet,
        out: &mut Vec<Event>,
    );

    /// Evaluates the rate of a single `(x, tag)` pair on `sigma`.
    fn event_rate(
        &self,
        lat: &Lattice,
        sigma: &Configuration,
        x: usize,
        tag: Tag,
    ) -> Result<f64, ModelError>;
}

/// All events rooted at sites of `sites`, ascending in `(x, tag)`.
pub fn local_events<M: RateModel + ?Sized>(
    model: &M,
    lat: &Lattice,
    sigma: &Configuration,
    sites: &SiteSet,
) -> Vec<Event> {
    let mut out = Vec::new();
    for &x in sites.sites() {
        model.site_events(lat, sigma, x, sites, &mut out);
    }
    out
}

fn occupied_neighbors(lat: &Lattice, sigma: &Configuration, x: usize) -> usize {
    let mut n = 0;
    for axis in 0..lat.dim() {
        n += sigma.get(lat.shift(x, axis, -1)) as usize;
        n += sigma.get(lat.shift(x, axis, 1)) as usize;
    }
    n
}

fn check_nonneg(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::Parameter { name, value })
    }
}

/// Adsorption/desorption spin-flip dynamics with Arrhenius desorption:
///
/// `c(x, σ) = c_d (1 − σ(x)) + c_a σ(x) exp(−β U(x))`,
/// `U(x) = J Σ_{y ~ x} σ(y) + h̄`
///
/// where the sum runs over the `2d` nearest neighbors of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrheniusSpinFlip {
    pub beta: f64,
    pub coupling: f64,
    pub field: f64,
    pub desorption: f64,
    pub adsorption: f64,
    // c_a exp(−β (J n + h̄)) for n occupied neighbors, n = 0..=4
    desorption_by_neighbors: [f64; 5],
}

impl ArrheniusSpinFlip {
    pub fn new(
        beta: f64,
        coupling: f64,
        field: f64,
        desorption: f64,
        adsorption: f64,
    ) -> Result<Self, ModelError> {
        check_nonneg("beta", beta)?;
        check_nonneg("c_a", desorption)?;
        check_nonneg("c_d", adsorption)?;
        for (name, v) in [("J", coupling), ("field", field)] {
            if !v.is_finite() {
                return Err(ModelError::Parameter { name, value: v });
            }
        }
        let mut table = [0.0; 5];
        for (n, slot) in table.iter_mut().enumerate() {
            let energy = coupling * n as f64 + field;
            *slot = desorption * (-beta * energy).exp();
            if !slot.is_finite() {
                return Err(ModelError::Parameter {
                    name: "c_a exp(-beta U)",
                    value: *slot,
                });
            }
        }
        Ok(Self {
            beta,
            coupling,
            field,
            desorption,
            adsorption,
            desorption_by_neighbors: table,
        })
    }

    #[inline]
    fn rate_at(&self, lat: &Lattice, sigma: &Configuration, x: usize) -> f64 {
        if sigma.get(x) == 0 {
            self.adsorption
        } else {
            self.desorption_by_neighbors[occupied_neighbors(lat, sigma, x)]
        }
    }
}

impl RateModel for ArrheniusSpinFlip {
    fn name(&self) -> &'static str {
        "spin-flip"
    }

    fn interaction_range(&self) -> usize {
        1
    }

    fn max_events_per_site(&self, _lat: &Lattice) -> usize {
        1
    }

    #[inline]
    fn site_events(
        &self,
        lat: &Lattice,
        sigma: &Configuration,
        x: usize,
        _active: &SiteSet,
        out: &mut Vec<Event>,
    ) {
        let rate = self.rate_at(lat, sigma, x);
        if rate > 0.0 {
            out.push(Event {
                site: x,
                tag: Tag::Flip,
                rate,
            });
        }
    }

    fn event_rate(
        &self,
        lat: &Lattice,
        sigma: &Configuration,
        x: usize,
        tag: Tag,
    ) -> Result<f64, ModelError> {
        match tag {
            Tag::Flip => Ok(self.rate_at(lat, sigma, x)),
            other => Err(ModelError::InvalidTag {
                model: self.name(),
                tag: other,
            }),
        }
    }
}

/// Particle-conserving nearest-neighbor exchange (Kawasaki) dynamics. A
/// particle at `x` hops to a vacant nearest neighbor with rate
/// `c_h exp(−β J n(x))`, `n(x)` being the number of occupied neighbors of
/// `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct KawasakiExchange {
    pub beta: f64,
    pub coupling: f64,
    pub hop: f64,
    hop_by_neighbors: [f64; 5],
}

impl KawasakiExchange {
    pub fn new(beta: f64, coupling: f64, hop: f64) -> Result<Self, ModelError> {
        check_nonneg("beta", beta)?;
        check_nonneg("c_h", hop)?;
        if !coupling.is_finite() {
            return Err(ModelError::Parameter {
                name: "J",
                value: coupling,
            });
        }
        let mut table = [0.0; 5];
        for (n, slot) in table.iter_mut().enumerate() {
            *slot = hop * (-beta * coupling * n as f64).exp();
            if !slot.is_finite() {
                return Err(ModelError::Parameter {
                    name: "c_h exp(-beta J n)",
                    value: *slot,
                });
            }
        }
        Ok(Self {
            beta,
            coupling,
            hop,
            hop_by_neighbors: table,
        })
    }

    fn partner(lat: &Lattice, x: usize, dir: u8) -> usize {
        let axis = (dir / 2) as usize;
        let step = if dir % 2 == 0 { -1 } else { 1 };
        lat.shift(x, axis, step)
    }
}

impl RateModel for KawasakiExchange {
    fn name(&self) -> &'static str {
        "kawasaki"
    }

    fn interaction_range(&self) -> usize {
        1
    }

    fn max_events_per_site(&self, lat: &Lattice) -> usize {
        2 * lat.dim()
    }

    fn site_events(
        &self,
        lat: &Lattice,
        sigma: &Configuration,
        x: usize,
        active: &SiteSet,
        out: &mut Vec<Event>,
    ) {
        if sigma.get(x) == 0 {
            return;
        }
        let rate = self.hop_by_neighbors[occupied_neighbors(lat, sigma, x)];
        if rate <= 0.0 {
            return;
        }
        for dir in 0..(2 * lat.dim()) as u8 {
            let y = Self::partner(lat, x, dir);
            if y != x && sigma.get(y) == 0 && active.contains(y) {
                out.push(Event {
                    site: x,
                    tag: Tag::Exchange { dir, partner: y },
                    rate,
                });
            }
        }
    }

    fn event_rate(
        &self,
        lat: &Lattice,
        sigma: &Configuration,
        x: usize,
        tag: Tag,
    ) -> Result<f64, ModelError> {
        match tag {
            Tag::Exchange { dir, partner }
                if (dir as usize) < 2 * lat.dim() && Self::partner(lat, x, dir) == partner =>
            {
                if sigma.get(x) == 1 && sigma.get(partner) == 0 {
                    Ok(self.hop_by_neighbors[occupied_neighbors(lat, sigma, x)])
                } else {
                    Ok(0.0)
                }
            }
            other => Err(ModelError::InvalidTag {
                model: self.name(),
                tag: other,
            }),
        }
    }
}

/// Closed set of the built-in models, dispatching to the concrete type.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    SpinFlip(ArrheniusSpinFlip),
    Kawasaki(KawasakiExchange),
}

impl RateModel for Model {
    fn name(&self) -> &'static str {
        match self {
            Model::SpinFlip(m) => m.name(),
            Model::Kawasaki(m) => m.name(),
        }
    }

    fn interaction_range(&self) -> usize {
        match self {
            Model::SpinFlip(m) => m.interaction_range(),
            Model::Kawasaki(m) => m.interaction_range(),
        }
    }

    fn max_events_per_site(&self, lat: &Lattice) -> usize {
        match self {
            Model::SpinFlip(m) => m.max_events_per_site(lat),
            Model::Kawasaki(m) => m.max_events_per_site(lat),
        }
    }

    #[inline]
    fn site_events(
        &self,
        lat: &Lattice,
        sigma: &Configuration,
        x: usize,
        active: &SiteSet,
        out: &mut Vec<Event>,
    ) {
        match self {
            Model::SpinFlip(m) => m.site_events(lat, sigma, x, active, out),
            Model::Kawasaki(m) => m.site_events(lat, sigma, x, active, out),
        }
    }

    fn event_rate(
        &self,
        lat: &Lattice,
        sigma: &Configuration,
        x: usize,
        tag: Tag,
    ) -> Result<f64, ModelError> {
        match self {
            Model::SpinFlip(m) => m.event_rate(lat, sigma, x, tag),
            Model::Kawasaki(m) => m.event_rate(lat, sigma, x, tag),
        }
    }
}

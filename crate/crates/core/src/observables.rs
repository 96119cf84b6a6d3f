//! Macroscopic observables and flip-based discrete derivatives.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::lattice::{Configuration, Lattice};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown observable {0:?} (expected coverage, variance or correlation:<k>)")]
pub struct ParseObservableError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Observable {
    /// Mean coverage `(1/N) Σ_x σ(x)`.
    Coverage,
    /// Mean correlation at lag `k` along axis 0, `(1/N) Σ_x σ(x) σ(x + k)`.
    Correlation(usize),
    /// `c̄ − c̄²` with `c̄` the coverage.
    Variance,
}

impl Observable {
    pub fn eval(&self, lat: &Lattice, sigma: &Configuration) -> f64 {
        match *self {
            Observable::Coverage => coverage(sigma),
            Observable::Correlation(k) => correlation(lat, sigma, k),
            Observable::Variance => variance_obs(sigma),
        }
    }

    /// True when `f(σ) = Σ_x φ_x(σ(x))`, so that its expectation splits
    /// into independent per-site contributions.
    pub fn is_site_additive(&self) -> bool {
        matches!(self, Observable::Coverage | Observable::Correlation(0))
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::Coverage => f.write_str("coverage"),
            Observable::Correlation(k) => write!(f, "correlation:{k}"),
            Observable::Variance => f.write_str("variance"),
        }
    }
}

impl FromStr for Observable {
    type Err = ParseObservableError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "coverage" => Ok(Observable::Coverage),
            "variance" => Ok(Observable::Variance),
            _ => s
                .strip_prefix("correlation:")
                .and_then(|k| k.trim().parse().ok())
                .map(Observable::Correlation)
                .ok_or_else(|| ParseObservableError(s.to_string())),
        }
    }
}

/// Parses a comma-separated observable list such as `"coverage,correlation:1"`.
pub fn parse_list(s: &str) -> Result<Vec<Observable>, ParseObservableError> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

pub fn coverage(sigma: &Configuration) -> f64 {
    sigma.total() as f64 / sigma.len() as f64
}

pub fn correlation(lat: &Lattice, sigma: &Configuration, k: usize) -> f64 {
    let n = lat.n_sites();
    let shift = (k % lat.lengths()[0]) as isize;
    let sum: u64 = (0..n)
        .map(|x| sigma.get(x) as u64 * sigma.get(lat.shift(x, 0, shift)) as u64)
        .sum();
    sum as f64 / n as f64
}

pub fn variance_obs(sigma: &Configuration) -> f64 {
    let c = coverage(sigma);
    c - c * c
}

/// Nested flip difference `δ_{x₁} … δ_{x_m} f(σ)`, i.e. the alternating sum
/// of `f` over all configurations obtained by flipping a subset of `xs`.
pub fn discrete_derivative<F>(f: F, sigma: &Configuration, xs: &[usize]) -> f64
where
    F: Fn(&Configuration) -> f64,
{
    assert!(!xs.is_empty(), "discrete derivative needs at least one site");
    assert!(xs.len() < 32);
    let mut work = sigma.clone();
    let mut total = 0.0;
    for mask in 0u32..(1 << xs.len()) {
        work.clone_from(sigma);
        for (i, &x) in xs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                work.set(x, 1 - work.get(x));
            }
        }
        let flipped = mask.count_ones() as usize;
        let sign = if (xs.len() - flipped) % 2 == 0 { 1.0 } else { -1.0 };
        total += sign * f(&work);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ArrheniusSpinFlip, RateModel, Tag};

    fn cfg(s: &[u8]) -> Configuration {
        Configuration::from_spins(s.to_vec(), 1).unwrap()
    }

    #[test]
    fn basic_values() {
        let ring = Lattice::ring(4).unwrap();
        assert_eq!(coverage(&cfg(&[1, 0, 1, 0])), 0.5);
        assert_eq!(coverage(&cfg(&[0, 0, 0, 0])), 0.0);
        for k in 0..4 {
            assert_eq!(correlation(&ring, &cfg(&[1, 1, 1, 1]), k), 1.0);
        }
        assert_eq!(correlation(&ring, &cfg(&[1, 0, 1, 0]), 1), 0.0);
        assert_eq!(correlation(&ring, &cfg(&[1, 1, 0, 0]), 1), 0.25);
        assert_eq!(variance_obs(&cfg(&[1, 1, 1, 1])), 0.0);
        assert_eq!(variance_obs(&cfg(&[1, 0, 1, 0])), 0.25);
        assert_eq!(variance_obs(&cfg(&[0, 0, 0, 0])), 0.0);
    }

    #[test]
    fn parses_names() {
        assert_eq!("coverage".parse(), Ok(Observable::Coverage));
        assert_eq!("correlation:3".parse(), Ok(Observable::Correlation(3)));
        assert!("correlation:x".parse::<Observable>().is_err());
        assert_eq!(
            parse_list("coverage, correlation:1,variance").unwrap(),
            vec![
                Observable::Coverage,
                Observable::Correlation(1),
                Observable::Variance
            ]
        );
        assert_eq!(Observable::Correlation(2).to_string(), "correlation:2");
    }

    fn all_configs(n: usize) -> impl Iterator<Item = Configuration> {
        (0u32..(1 << n)).map(move |b| cfg(&(0..n).map(|i| ((b >> i) & 1) as u8).collect::<Vec<_>>()))
    }

    #[test]
    fn coverage_derivatives() {
        let ring = Lattice::ring(6).unwrap();
        let n = 6.0;
        for s in all_configs(6) {
            for x in 0..6 {
                let d = discrete_derivative(coverage, &s, &[x]);
                let expect = (1.0 - 2.0 * s.get(x) as f64) / n;
                assert!((d - expect).abs() < 1e-15);
                for y in 0..6 {
                    if y != x {
                        assert!(discrete_derivative(coverage, &s, &[x, y]).abs() < 1e-15);
                    }
                }
            }
            let f = |c: &Configuration| correlation(&ring, c, 1);
            for x in 0..6 {
                let d = discrete_derivative(f, &s, &[x]);
                let nb = s.get((x + 1) % 6) as f64 + s.get((x + 5) % 6) as f64;
                let expect = (1.0 - 2.0 * s.get(x) as f64) * nb / n;
                assert!((d - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mixed_derivatives_commute() {
        let ring = Lattice::ring(6).unwrap();
        let fs: Vec<Box<dyn Fn(&Configuration) -> f64>> = vec![
            Box::new(coverage),
            Box::new(variance_obs),
            Box::new(|c: &Configuration| correlation(&ring, c, 1)),
            Box::new(|c: &Configuration| correlation(&ring, c, 2)),
        ];
        for f in &fs {
            for s in all_configs(6) {
                for x in 0..6 {
                    for y in 0..6 {
                        let a = discrete_derivative(f, &s, &[x, y]);
                        let b = discrete_derivative(f, &s, &[y, x]);
                        assert!((a - b).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn rate_derivative_is_local() {
        let ring = Lattice::ring(8).unwrap();
        let m = ArrheniusSpinFlip::new(2.0, 0.37, 0.5, 1.0, 1.0).unwrap();
        for s in all_configs(8) {
            for a in 0..8 {
                let rate = |c: &Configuration| m.event_rate(&ring, c, a, Tag::Flip).unwrap();
                for x in 0..8 {
                    if ring.distance(x, a) > 1 {
                        assert_eq!(discrete_derivative(rate, &s, &[x]), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn bounds() {
        for s in all_configs(6) {
            let c = coverage(&s);
            let v = variance_obs(&s);
            assert!((0.0..=1.0).contains(&c));
            assert!((0.0..=0.25).contains(&v));
        }
    }
}

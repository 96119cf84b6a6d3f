//! Periodic lattice geometry, spin configurations and the coarse-cell
//! decomposition used by the fractional-step schedules.
//!
//! Sites are numbered in row-major order: in two dimensions the site at
//! coordinates `(i0, i1)` has index `i0 * n1 + i1`, so axis 1 varies
//! fastest. All neighbor arithmetic wraps around periodically. Distances
//! are the periodic absolute difference in one dimension and the periodic
//! Chebyshev distance in two dimensions.

use std::fmt;
use std::ops::Index;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LatticeError {
    #[error("dimension {0} is not supported (expected 1 or 2)")]
    Dimension(usize),
    #[error("dimension {dim} needs {dim} side lengths, got {got}")]
    LengthCount { dim: usize, got: usize },
    #[error("side length {0} is too short (minimum 2)")]
    ShortSide(usize),
    #[error("cell too small for interaction range: q = {q}, L = {range}")]
    CellTooSmall { q: usize, range: usize },
    #[error("lattice/cell mismatch: side length {length} is not divisible by q = {q}")]
    Mismatch { length: usize, q: usize },
    #[error("group coloring inconsistent under periodicity: {cells} cells along axis 0")]
    OddCellCount { cells: usize },
    #[error("spin value {value} at site {site} exceeds the maximum {max}")]
    SpinOutOfRange { site: usize, value: u8, max: u8 },
    #[error("configuration has {got} sites, lattice has {expected}")]
    SizeMismatch { expected: usize, got: usize },
}

/// Finite periodic lattice in one or two dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    lengths: Vec<usize>,
    n_sites: usize,
}

impl Lattice {
    pub fn new(dim: usize, lengths: &[usize]) -> Result<Self, LatticeError> {
        if dim != 1 && dim != 2 {
            return Err(LatticeError::Dimension(dim));
        }
        if lengths.len() != dim {
            return Err(LatticeError::LengthCount {
                dim,
                got: lengths.len(),
            });
        }
        if let Some(&short) = lengths.iter().find(|&&n| n < 2) {
            return Err(LatticeError::ShortSide(short));
        }
        Ok(Self {
            lengths: lengths.to_vec(),
            n_sites: lengths.iter().product(),
        })
    }

    /// One-dimensional ring of `n` sites.
    pub fn ring(n: usize) -> Result<Self, LatticeError> {
        Self::new(1, &[n])
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Number of sites in one slab of constant axis-0 coordinate.
    pub fn slab_size(&self) -> usize {
        self.n_sites / self.lengths[0]
    }

    pub fn coords(&self, x: usize) -> [usize; 2] {
        match self.dim() {
            1 => [x, 0],
            _ => [x / self.lengths[1], x % self.lengths[1]],
        }
    }

    pub fn index(&self, coords: [usize; 2]) -> usize {
        match self.dim() {
            1 => coords[0],
            _ => coords[0] * self.lengths[1] + coords[1],
        }
    }

    /// Site reached from `x` by moving `step` sites along `axis`.
    pub fn shift(&self, x: usize, axis: usize, step: isize) -> usize {
        let mut c = self.coords(x);
        let n = self.lengths[axis] as isize;
        c[axis] = (c[axis] as isize + step).rem_euclid(n) as usize;
        self.index(c)
    }

    /// Periodic distance between two sites.
    pub fn distance(&self, x: usize, y: usize) -> usize {
        let (cx, cy) = (self.coords(x), self.coords(y));
        (0..self.dim())
            .map(|a| {
                let d = cx[a].abs_diff(cy[a]);
                d.min(self.lengths[a] - d)
            })
            .max()
            .unwrap_or(0)
    }

    /// Calls `f` for every site `y != x` within distance `r` of `x`. On
    /// lattices shorter than `2r + 1` along an axis a site may be visited
    /// more than once.
    pub fn for_each_within(&self, x: usize, r: usize, mut f: impl FnMut(usize)) {
        let r = r as isize;
        match self.dim() {
            1 => {
                for s in -r..=r {
                    if s != 0 {
                        let y = self.shift(x, 0, s);
                        if y != x {
                            f(y);
                        }
                    }
                }
            }
            _ => {
                for s0 in -r..=r {
                    let row = self.shift(x, 0, s0);
                    for s1 in -r..=r {
                        let y = self.shift(row, 1, s1);
                        if y != x {
                            f(y);
                        }
                    }
                }
            }
        }
    }

    /// All sites `y != x` with periodic distance at most `r`, ascending.
    pub fn sites_within(&self, x: usize, r: usize) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(x, r, |y| out.push(y));
        out.sort_unstable();
        out.dedup();
        out
    }
}

impl fmt::Display for Lattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dims: Vec<String> = self.lengths.iter().map(|n| n.to_string()).collect();
        write!(f, "{} (N = {})", dims.join("x"), self.n_sites)
    }
}

/// Spin values on every lattice site.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    spins: Vec<u8>,
}

impl Configuration {
    /// All-zero configuration.
    pub fn empty(n_sites: usize) -> Self {
        Self {
            spins: vec![0; n_sites],
        }
    }

    pub fn filled(n_sites: usize, value: u8) -> Self {
        Self {
            spins: vec![value; n_sites],
        }
    }

    pub fn from_spins(spins: Vec<u8>, max_spin: u8) -> Result<Self, LatticeError> {
        if let Some((site, &value)) = spins.iter().enumerate().find(|(_, &s)| s > max_spin) {
            return Err(LatticeError::SpinOutOfRange {
                site,
                value,
                max: max_spin,
            });
        }
        Ok(Self { spins })
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.spins
    }

    #[inline]
    pub fn get(&self, x: usize) -> u8 {
        self.spins[x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, value: u8) {
        self.spins[x] = value;
    }

    #[inline]
    pub fn swap(&mut self, x: usize, y: usize) {
        self.spins.swap(x, y);
    }

    pub fn total(&self) -> u64 {
        self.spins.iter().map(|&s| s as u64).sum()
    }
}

impl Index<usize> for Configuration {
    type Output = u8;

    fn index(&self, x: usize) -> &u8 {
        &self.spins[x]
    }
}

/// Ordered set of lattice sites with constant-time membership lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiteSet {
    sites: Vec<usize>,
    slot: Vec<u32>,
}

const NO_SLOT: u32 = u32::MAX;

impl SiteSet {
    /// Builds the set from arbitrary site indices; duplicates are dropped.
    pub fn new(n_sites: usize, sites: impl IntoIterator<Item = usize>) -> Self {
        let mut sites: Vec<usize> = sites.into_iter().collect();
        sites.sort_unstable();
        sites.dedup();
        let mut slot = vec![NO_SLOT; n_sites];
        for (i, &x) in sites.iter().enumerate() {
            slot[x] = i as u32;
        }
        Self { sites, slot }
    }

    pub fn all(n_sites: usize) -> Self {
        Self::new(n_sites, 0..n_sites)
    }

    pub fn none(n_sites: usize) -> Self {
        Self::new(n_sites, std::iter::empty())
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    #[inline]
    pub fn contains(&self, x: usize) -> bool {
        self.slot.get(x).is_some_and(|&s| s != NO_SLOT)
    }

    /// Position of `x` within the ascending site list.
    #[inline]
    pub fn slot_of(&self, x: usize) -> Option<usize> {
        match self.slot.get(x) {
            Some(&s) if s != NO_SLOT => Some(s as usize),
            _ => None,
        }
    }
}

/// The two cell groups. Cells alternate between them along axis 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    One,
    Two,
}

impl Group {
    pub fn index(self) -> usize {
        match self {
            Group::One => 0,
            Group::Two => 1,
        }
    }

    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }
}

/// Coarse cells, their two-group coloring and boundary rings.
///
/// Cells are slabs of `q` consecutive axis-0 coordinates spanning the whole
/// lattice along axis 1; in one dimension that is a block of `q` sites.
#[derive(Debug, Clone)]
pub struct Decomposition {
    q: usize,
    range: usize,
    cells: Vec<SiteSet>,
    cell_group: Vec<Group>,
    groups: [Vec<usize>; 2],
    group_sites: [SiteSet; 2],
    boundaries: Vec<Vec<usize>>,
    site_cell: Vec<usize>,
}

impl Decomposition {
    pub fn new(lat: &Lattice, q: usize, range: usize) -> Result<Self, LatticeError> {
        if q <= range {
            return Err(LatticeError::CellTooSmall { q, range });
        }
        let n0 = lat.lengths()[0];
        if n0 % q != 0 {
            return Err(LatticeError::Mismatch { length: n0, q });
        }
        let m = n0 / q;
        if m % 2 != 0 {
            return Err(LatticeError::OddCellCount { cells: m });
        }
        let n = lat.n_sites();
        let slab = lat.slab_size();
        let block = q * slab;

        let cells: Vec<SiteSet> = (0..m)
            .map(|c| SiteSet::new(n, c * block..(c + 1) * block))
            .collect();
        let cell_group: Vec<Group> = (0..m)
            .map(|c| if c % 2 == 0 { Group::One } else { Group::Two })
            .collect();
        let groups = [
            (0..m).step_by(2).collect::<Vec<_>>(),
            (1..m).step_by(2).collect::<Vec<_>>(),
        ];
        let group_sites = [
            SiteSet::new(n, groups[0].iter().flat_map(|&c| cells[c].sites().to_vec())),
            SiteSet::new(n, groups[1].iter().flat_map(|&c| cells[c].sites().to_vec())),
        ];
        let site_cell: Vec<usize> = (0..n).map(|x| x / block).collect();
        let boundaries = cells
            .iter()
            .map(|cell| {
                let mut ring = Vec::new();
                for &x in cell.sites() {
                    lat.for_each_within(x, range, |y| {
                        if !cell.contains(y) {
                            ring.push(y);
                        }
                    });
                }
                ring.sort_unstable();
                ring.dedup();
                ring
            })
            .collect();

        Ok(Self {
            q,
            range,
            cells,
            cell_group,
            groups,
            group_sites,
            boundaries,
            site_cell,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn range(&self) -> usize {
        self.range
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, m: usize) -> &SiteSet {
        &self.cells[m]
    }

    pub fn cells(&self) -> &[SiteSet] {
        &self.cells
    }

    pub fn group_of(&self, m: usize) -> Group {
        self.cell_group[m]
    }

    /// Cell ids belonging to `g`, ascending.
    pub fn group_cells(&self, g: Group) -> &[usize] {
        &self.groups[g.index()]
    }

    /// Union of all sites in the cells of `g`.
    pub fn group_sites(&self, g: Group) -> &SiteSet {
        &self.group_sites[g.index()]
    }

    /// Sites within the interaction range of cell `m` but outside it.
    pub fn boundary(&self, m: usize) -> &[usize] {
        &self.boundaries[m]
    }

    pub fn cell_of(&self, x: usize) -> usize {
        self.site_cell[x]
    }
}

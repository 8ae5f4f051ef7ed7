//! Finite vertex sets with a metric, region arithmetic, and membrane
//! construction.
//!
//! Distances are stored as `f64` so explicit distance tables are allowed;
//! for graph lattices they are integral.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Site = usize;

/// How distances between vertices are defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    /// Regular hypercubic grid with Manhattan (graph) distance. Site index is
    /// row-major in `sides`, last coordinate fastest.
    Grid { sides: Vec<usize>, periodic: bool },
    /// Explicit symmetric distance table.
    Table(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    site_dims: Vec<usize>,
    geometry: Geometry,
    dist: Vec<f64>,
}

impl Lattice {
    /// Open chain of `n` sites with Hilbert dimension `site_dim` each.
    pub fn chain(n: usize, site_dim: usize) -> Result<Self> {
        Self::grid(&[n], false, site_dim)
    }

    pub fn grid(sides: &[usize], periodic: bool, site_dim: usize) -> Result<Self> {
        if sides.is_empty() || sides.contains(&0) {
            return Err(Error::InvalidLattice(format!("bad grid sides {sides:?}")));
        }
        let n: usize = sides.iter().product();
        let geometry = Geometry::Grid {
            sides: sides.to_vec(),
            periodic,
        };
        let mut dist = vec![0.0; n * n];
        for x in 0..n {
            let cx = grid_coords(sides, x);
            for y in 0..n {
                let cy = grid_coords(sides, y);
                let d: usize = cx
                    .iter()
                    .zip(&cy)
                    .zip(sides)
                    .map(|((&a, &b), &side)| {
                        let diff = a.abs_diff(b);
                        if periodic {
                            diff.min(side - diff)
                        } else {
                            diff
                        }
                    })
                    .sum();
                dist[x * n + y] = d as f64;
            }
        }
        Self::with_dims(geometry, dist, vec![site_dim; n])
    }

    /// Lattice from an explicit distance table. The table must be a metric.
    pub fn from_distances(table: Vec<Vec<f64>>, site_dims: Vec<usize>) -> Result<Self> {
        let n = table.len();
        if table.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidLattice("distance table is not square".into()));
        }
        let dist = table.iter().flatten().copied().collect();
        let lattice = Self::with_dims(Geometry::Table(table), dist, site_dims)?;
        lattice.check_metric()?;
        Ok(lattice)
    }

    fn with_dims(geometry: Geometry, dist: Vec<f64>, site_dims: Vec<usize>) -> Result<Self> {
        let n = site_dims.len();
        if n == 0 {
            return Err(Error::InvalidLattice("no vertices".into()));
        }
        if dist.len() != n * n {
            return Err(Error::InvalidLattice(format!(
                "{} site dimensions for a {}-entry distance table",
                n,
                dist.len()
            )));
        }
        if let Some(&d) = site_dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidLattice(format!("site dimension {d} < 2")));
        }
        Ok(Self {
            site_dims,
            geometry,
            dist,
        })
    }

    pub fn len(&self) -> usize {
        self.site_dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.site_dims.is_empty()
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn site_dim(&self, x: Site) -> usize {
        self.site_dims[x]
    }

    pub fn site_dims(&self) -> &[usize] {
        &self.site_dims
    }

    pub fn distance(&self, x: Site, y: Site) -> f64 {
        self.dist[x * self.len() + y]
    }

    /// Coordinates of a grid site; `None` for table geometries.
    pub fn coords(&self, x: Site) -> Option<Vec<usize>> {
        match &self.geometry {
            Geometry::Grid { sides, .. } => Some(grid_coords(sides, x)),
            Geometry::Table(_) => None,
        }
    }

    /// Grid site at `coords`.
    pub fn site_at(&self, coords: &[usize]) -> Result<Site> {
        match &self.geometry {
            Geometry::Grid { sides, .. } if sides.len() == coords.len() => {
                let mut idx = 0;
                for (&c, &side) in coords.iter().zip(sides) {
                    if c >= side {
                        return Err(Error::InvalidLattice(format!("coordinate {coords:?} outside grid")));
                    }
                    idx = idx * side + c;
                }
                Ok(idx)
            }
            _ => Err(Error::InvalidLattice(format!("no grid site at {coords:?}"))),
        }
    }

    /// Validated region over this lattice.
    pub fn region<I: IntoIterator<Item = Site>>(&self, sites: I) -> Result<Region> {
        let region = Region::new(sites);
        if let Some(&x) = region.sites().iter().find(|&&x| x >= self.len()) {
            return Err(Error::UnknownSite {
                site: x,
                len: self.len(),
            });
        }
        Ok(region)
    }

    pub fn all(&self) -> Region {
        Region::new(0..self.len())
    }

    /// Product of site dimensions over `region`.
    pub fn region_dim(&self, region: &Region) -> usize {
        region.sites().iter().map(|&x| self.site_dims[x]).product()
    }

    pub fn dims_of(&self, region: &Region) -> Vec<usize> {
        region.sites().iter().map(|&x| self.site_dims[x]).collect()
    }

    /// Checks symmetry, identity of indiscernibles and the triangle
    /// inequality on every triple.
    pub fn check_metric(&self) -> Result<()> {
        let n = self.len();
        for x in 0..n {
            for y in 0..n {
                let d = self.distance(x, y);
                if !(d.is_finite() && d >= 0.0) {
                    return Err(Error::InvalidLattice(format!("d({x},{y}) = {d}")));
                }
                if (d == 0.0) != (x == y) {
                    return Err(Error::InvalidLattice(format!("d({x},{y}) = {d} violates identity")));
                }
                if d != self.distance(y, x) {
                    return Err(Error::InvalidLattice(format!("d({x},{y}) is not symmetric")));
                }
                for z in 0..n {
                    if d > self.distance(x, z) + self.distance(z, y) + 1e-12 {
                        return Err(Error::InvalidLattice(format!(
                            "triangle inequality fails on ({x},{y},{z})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Minimum distance between a site and a region.
    pub fn distance_to(&self, x: Site, region: &Region) -> f64 {
        region
            .sites()
            .iter()
            .map(|&y| self.distance(x, y))
            .fold(f64::INFINITY, f64::min)
    }

    /// `min_{x∈A, y∈B} d(x, y)`; zero iff the regions overlap.
    pub fn region_distance(&self, a: &Region, b: &Region) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptyRegion);
        }
        Ok(a
            .sites()
            .iter()
            .map(|&x| self.distance_to(x, b))
            .fold(f64::INFINITY, f64::min))
    }

    /// Largest pairwise distance inside `region`.
    pub fn diameter(&self, region: &Region) -> Result<f64> {
        if region.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let s = region.sites();
        let mut diam: f64 = 0.0;
        for (i, &x) in s.iter().enumerate() {
            for &y in &s[i + 1..] {
                diam = diam.max(self.distance(x, y));
            }
        }
        Ok(diam)
    }

    /// Union of two shells of thickness `2 d*` at radius `d_AB / 2` around
    /// `a` and `b`:
    ///
    /// `S_A = { x : d_AB/2 <= d(x, A) < d_AB/2 + 2 d* }`, likewise `S_B`.
    ///
    /// Requires `d_AB > 2 (2 d* + 1)` so the shells are disjoint from both
    /// regions and from each other.
    pub fn build_membranes(&self, a: &Region, b: &Region, d_star: f64) -> Result<Region> {
        let d_ab = self.region_distance(a, b)?;
        let required = 2.0 * (2.0 * d_star + 1.0);
        if d_ab <= required {
            return Err(Error::MembraneOverlap {
                distance: d_ab,
                required,
            });
        }
        let inner = d_ab / 2.0;
        let outer = inner + 2.0 * d_star;
        let in_shell = |x: Site, r: &Region| {
            let d = self.distance_to(x, r);
            d >= inner && d < outer
        };
        let membrane = Region::new((0..self.len()).filter(|&x| in_shell(x, a) || in_shell(x, b)));
        debug_assert!(!membrane.intersects(a) && !membrane.intersects(b));
        Ok(membrane)
    }
}

fn grid_coords(sides: &[usize], mut x: Site) -> Vec<usize> {
    let mut coords = vec![0; sides.len()];
    for (c, &side) in coords.iter_mut().zip(sides).rev() {
        *c = x % side;
        x /= side;
    }
    coords
}

/// Sorted set of lattice sites.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Region(Vec<Site>);

impl Region {
    /// Sorts and removes duplicates. Does not check membership in a lattice;
    /// use [`Lattice::region`] for that.
    pub fn new<I: IntoIterator<Item = Site>>(sites: I) -> Self {
        let mut v: Vec<Site> = sites.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Region(v)
    }

    pub fn single(x: Site) -> Self {
        Region(vec![x])
    }

    pub fn empty() -> Self {
        Region(Vec::new())
    }

    pub fn sites(&self) -> &[Site] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, x: Site) -> bool {
        self.0.binary_search(&x).is_ok()
    }

    /// Position of `x` inside the sorted site list.
    pub fn position(&self, x: Site) -> Option<usize> {
        self.0.binary_search(&x).ok()
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.0.iter().all(|&x| other.contains(x))
    }

    pub fn intersects(&self, other: &Region) -> bool {
        self.0.iter().any(|&x| other.contains(x))
    }

    pub fn union(&self, other: &Region) -> Region {
        Region::new(self.0.iter().chain(other.0.iter()).copied())
    }

    pub fn intersection(&self, other: &Region) -> Region {
        Region(self.0.iter().copied().filter(|&x| other.contains(x)).collect())
    }

    pub fn difference(&self, other: &Region) -> Region {
        Region(self.0.iter().copied().filter(|&x| !other.contains(x)).collect())
    }

    /// Region shifted by `offset` sites (chain placements).
    pub fn shifted(&self, offset: isize) -> Option<Region> {
        self.0
            .iter()
            .map(|&x| x.checked_add_signed(offset))
            .collect::<Option<Vec<_>>>()
            .map(Region::new)
    }
}

impl FromIterator<Site> for Region {
    fn from_iter<I: IntoIterator<Item = Site>>(iter: I) -> Self {
        Region::new(iter)
    }
}

/// Sites reachable from `from` when two sites are adjacent iff some support
/// in `supports` contains both.
pub fn reachable(n_sites: usize, supports: &[&Region], from: &Region) -> Region {
    let mut seen = vec![false; n_sites];
    let mut queue: VecDeque<Site> = VecDeque::new();
    for &x in from.sites() {
        if !seen[x] {
            seen[x] = true;
            queue.push_back(x);
        }
    }
    while let Some(x) = queue.pop_front() {
        for support in supports.iter().filter(|s| s.contains(x)) {
            for &y in support.sites() {
                if !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
    }
    Region((0..n_sites).filter(|&x| seen[x]).collect())
}

/// True when no chain of overlapping supports links `a` to `b`.
pub fn separated(n_sites: usize, supports: &[&Region], a: &Region, b: &Region) -> bool {
    !reachable(n_sites, supports, a).intersects(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_distances() {
        let l = Lattice::chain(20, 2).unwrap();
        let a = l.region([0]).unwrap();
        let b = l.region([19]).unwrap();
        assert_eq!(l.region_distance(&a, &b).unwrap(), 19.0);
        let c = l.region([3]).unwrap();
        assert_eq!(l.region_distance(&c, &c).unwrap(), 0.0);
    }

    #[test]
    fn grid_manhattan() {
        let l = Lattice::grid(&[4, 4], false, 2).unwrap();
        let a = l.region([l.site_at(&[0, 0]).unwrap()]).unwrap();
        let b = l.region([l.site_at(&[3, 3]).unwrap()]).unwrap();
        assert_eq!(l.region_distance(&a, &b).unwrap(), 6.0);
        let x = l.region([l.site_at(&[0, 0]).unwrap(), l.site_at(&[1, 1]).unwrap()]).unwrap();
        assert_eq!(l.diameter(&x).unwrap(), 2.0);
        l.check_metric().unwrap();
    }

    #[test]
    fn periodic_grid_wraps() {
        let l = Lattice::grid(&[6], true, 2).unwrap();
        assert_eq!(l.distance(0, 5), 1.0);
        assert_eq!(l.distance(0, 3), 3.0);
        l.check_metric().unwrap();
    }

    #[test]
    fn diameters() {
        let l = Lattice::chain(10, 2).unwrap();
        assert_eq!(l.diameter(&Region::single(4)).unwrap(), 0.0);
        assert_eq!(l.diameter(&l.region([2, 3, 4]).unwrap()).unwrap(), 2.0);
    }

    #[test]
    fn empty_region_errors() {
        let l = Lattice::chain(4, 2).unwrap();
        assert!(matches!(l.diameter(&Region::empty()), Err(Error::EmptyRegion)));
        assert!(matches!(
            l.region_distance(&Region::empty(), &Region::single(0)),
            Err(Error::EmptyRegion)
        ));
    }

    #[test]
    fn unknown_site_rejected() {
        let l = Lattice::chain(4, 2).unwrap();
        assert!(matches!(l.region([1, 7]), Err(Error::UnknownSite { site: 7, .. })));
    }

    #[test]
    fn membranes_on_chain() {
        let l = Lattice::chain(20, 2).unwrap();
        let a = Region::single(0);
        let b = Region::single(19);
        assert_eq!(l.build_membranes(&a, &b, 1.0).unwrap(), Region::new([8, 9, 10, 11]));
        assert_eq!(
            l.build_membranes(&a, &b, 2.0).unwrap(),
            Region::new([6, 7, 8, 9, 10, 11, 12, 13])
        );
    }

    #[test]
    fn membranes_too_close() {
        let l = Lattice::chain(5, 2).unwrap();
        let err = l
            .build_membranes(&Region::single(0), &Region::single(4), 1.0)
            .unwrap_err();
        assert!(matches!(err, Error::MembraneOverlap { .. }));
    }

    #[test]
    fn membranes_separate_nearest_neighbour_terms() {
        let l = Lattice::chain(20, 2).unwrap();
        let a = Region::single(0);
        let b = Region::single(19);
        let r = l.build_membranes(&a, &b, 1.0).unwrap();
        let supports: Vec<Region> = (0..19)
            .map(|i| Region::new([i, i + 1]))
            .chain((0..20).map(Region::single))
            .collect();
        let surviving: Vec<&Region> = supports.iter().filter(|s| !s.intersects(&r)).collect();
        assert!(separated(20, &surviving, &a, &b));
        let all: Vec<&Region> = supports.iter().collect();
        assert!(!separated(20, &all, &a, &b));
    }

    #[test]
    fn non_metric_table_rejected() {
        let table = vec![
            vec![0.0, 1.0, 5.0],
            vec![1.0, 0.0, 1.0],
            vec![5.0, 1.0, 0.0],
        ];
        assert!(Lattice::from_distances(table, vec![2; 3]).is_err());
    }

    #[test]
    fn bad_site_dim_rejected() {
        assert!(Lattice::from_distances(vec![vec![0.0]], vec![1]).is_err());
    }

    #[test]
    fn region_set_ops() {
        let a = Region::new([3, 1, 2, 2]);
        assert_eq!(a.sites(), &[1, 2, 3]);
        let b = Region::new([2, 5]);
        assert_eq!(a.union(&b).sites(), &[1, 2, 3, 5]);
        assert_eq!(a.intersection(&b).sites(), &[2]);
        assert_eq!(a.difference(&b).sites(), &[1, 3]);
        assert!(Region::new([1, 3]).is_subset(&a));
        assert_eq!(a.shifted(2).unwrap().sites(), &[3, 4, 5]);
        assert!(a.shifted(-2).is_none());
    }
}

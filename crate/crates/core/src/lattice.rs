//! Torus and box geometry, block coarse-graining and the space-time lattice of boxes.

use crate::error::{Error, Result};
use crate::sets::SiteSet;

/// Time-step constant of the space-time coarse graining, `e^{-2 - ln(2d)}`.
pub fn epsilon(d: usize) -> f64 {
    (-2.0 - (2.0 * d as f64).ln()).exp()
}

/// Periodic cube of side `2N` in `d` dimensions.
///
/// Index `u` along an axis stands for the coordinate `u` if `u <= N` and `u - 2N`
/// otherwise, so site 0 is the origin and coordinates live in `(-N, N]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorusGeom {
    d: usize,
    half: usize,
    side: usize,
    n_sites: usize,
    strides: Vec<usize>,
}

impl TorusGeom {
    pub fn new(d: usize, half: usize) -> Result<Self> {
        if d == 0 || half == 0 {
            return Err(Error::Geometry(format!("torus needs d >= 1 and N >= 1, got d={d}, N={half}")));
        }
        let side = 2 * half;
        let n_sites = side
            .checked_pow(d as u32)
            .filter(|&n| n <= 1 << 40)
            .ok_or_else(|| Error::Geometry("torus too large".into()))?;
        let strides = (0..d).map(|a| side.pow(a as u32)).collect();
        Ok(TorusGeom { d, half, side, n_sites, strides })
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn half_side(&self) -> usize {
        self.half
    }
    pub fn side(&self) -> usize {
        self.side
    }
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Per-axis indices in `[0, 2N)`.
    pub fn index_coords(&self, site: usize) -> Vec<usize> {
        (0..self.d).map(|a| site / self.strides[a] % self.side).collect()
    }

    /// Per-axis coordinates in `(-N, N]`.
    pub fn coords(&self, site: usize) -> Vec<i64> {
        self.index_coords(site)
            .into_iter()
            .map(|u| if u <= self.half { u as i64 } else { u as i64 - self.side as i64 })
            .collect()
    }

    /// Site at the given coordinates, wrapped periodically.
    pub fn site_at(&self, x: &[i64]) -> usize {
        x.iter()
            .zip(&self.strides)
            .map(|(&c, &s)| c.rem_euclid(self.side as i64) as usize * s)
            .sum()
    }

    pub fn translate(&self, site: usize, by: &[i64]) -> usize {
        let x: Vec<i64> = self.coords(site).iter().zip(by).map(|(a, b)| a + b).collect();
        self.site_at(&x)
    }

    #[inline]
    pub fn neighbour(&self, site: usize, axis: usize, plus: bool) -> usize {
        let s = self.strides[axis];
        let u = site / s % self.side;
        let v = if plus { (u + 1) % self.side } else { (u + self.side - 1) % self.side };
        site - u * s + v * s
    }

    /// The `2d` neighbours of a site as a multiset, ordered (axis, minus then plus).
    pub fn neighbours(&self, site: usize) -> Vec<usize> {
        (0..self.d).flat_map(|a| [self.neighbour(site, a, false), self.neighbour(site, a, true)]).collect()
    }

    /// Bonds `(i, i + e_a)` for every site and axis.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        (0..self.n_sites).flat_map(|i| (0..self.d).map(move |a| (i, a))).map(|(i, a)| (i, self.neighbour(i, a, true))).collect()
    }

    fn axis_dist(&self, a: usize, b: usize) -> usize {
        let d = a.abs_diff(b);
        d.min(self.side - d)
    }

    /// Periodic sup-norm distance.
    pub fn sup_dist(&self, a: usize, b: usize) -> usize {
        (0..self.d)
            .map(|k| self.axis_dist(a / self.strides[k] % self.side, b / self.strides[k] % self.side))
            .max()
            .unwrap_or(0)
    }

    /// Sites within sup-distance `r` of `center`.
    pub fn ball(&self, center: usize, r: usize) -> SiteSet {
        let mut out = SiteSet::new(self.n_sites);
        let width = (2 * r + 1).min(self.side);
        let start: Vec<i64> = self.coords(center).iter().map(|&c| c - r as i64).collect();
        let mut off = vec![0usize; self.d];
        loop {
            let x: Vec<i64> = start.iter().zip(&off).map(|(&s, &o)| s + o as i64).collect();
            out.insert(self.site_at(&x));
            let mut k = 0;
            while k < self.d {
                off[k] += 1;
                if off[k] < width {
                    break;
                }
                off[k] = 0;
                k += 1;
            }
            if k == self.d {
                return out;
            }
        }
    }

    /// True if the set is connected under nearest-neighbour adjacency.
    pub fn is_connected(&self, set: &SiteSet) -> bool {
        let Some(first) = set.first() else { return true };
        let mut seen = SiteSet::new(self.n_sites);
        seen.insert(first);
        let mut stack = vec![first];
        while let Some(v) = stack.pop() {
            for w in self.neighbours(v) {
                if set.contains(w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen.len() == set.len()
    }
}

/// Boundary condition of a box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    Plus,
    Minus,
    Free,
}

impl BoundaryCondition {
    pub fn spin(self) -> i32 {
        match self {
            BoundaryCondition::Plus => 1,
            BoundaryCondition::Minus => -1,
            BoundaryCondition::Free => 0,
        }
    }
}

/// The box `[-N, N]^d` of side `2N + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoxGeom {
    d: usize,
    half: usize,
    side: usize,
    n_sites: usize,
}

impl BoxGeom {
    pub fn new(d: usize, half: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Geometry("box needs d >= 1".into()));
        }
        let side = 2 * half + 1;
        let n_sites = side.checked_pow(d as u32).ok_or_else(|| Error::Geometry("box too large".into()))?;
        Ok(BoxGeom { d, half, side, n_sites })
    }

    pub fn dim(&self) -> usize {
        self.d
    }
    pub fn half_side(&self) -> usize {
        self.half
    }
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn coords(&self, site: usize) -> Vec<i64> {
        let mut s = site;
        (0..self.d)
            .map(|_| {
                let u = s % self.side;
                s /= self.side;
                u as i64 - self.half as i64
            })
            .collect()
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.iter().all(|c| c.unsigned_abs() as usize <= self.half)
    }

    pub fn site_at(&self, x: &[i64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        Some(x.iter().rev().fold(0, |acc, &c| acc * self.side + (c + self.half as i64) as usize))
    }

    pub fn origin(&self) -> usize {
        self.site_at(&vec![0; self.d]).expect("origin lies in the box")
    }

    /// Neighbours inside the box.
    pub fn neighbours(&self, site: usize) -> Vec<usize> {
        let x = self.coords(site);
        let mut out = Vec::with_capacity(2 * self.d);
        for a in 0..self.d {
            for step in [-1i64, 1] {
                let mut y = x.clone();
                y[a] += step;
                if let Some(j) = self.site_at(&y) {
                    out.push(j);
                }
            }
        }
        out
    }

    /// Number of bonds from `site` to points outside the box.
    pub fn outside_degree(&self, site: usize) -> usize {
        2 * self.d - self.neighbours(site).len()
    }

    /// Internal bonds, each listed once with `i < j`.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        (0..self.n_sites).flat_map(|i| self.neighbours(i).into_iter().filter(move |&j| i < j).map(move |j| (i, j))).collect()
    }

    /// Sites of the box with a neighbour outside it.
    pub fn interior_boundary(&self) -> Vec<usize> {
        (0..self.n_sites).filter(|&i| self.outside_degree(i) > 0).collect()
    }

    /// Points outside the box adjacent to it.
    pub fn exterior_boundary(&self) -> Vec<Vec<i64>> {
        let mut out: Vec<Vec<i64>> = self.edge_boundary().into_iter().map(|(_, y)| y).collect();
        out.sort();
        out.dedup();
        out
    }

    /// Bonds `(i, y)` with `i` inside and `y` outside.
    pub fn edge_boundary(&self) -> Vec<(usize, Vec<i64>)> {
        let mut out = Vec::new();
        for i in 0..self.n_sites {
            let x = self.coords(i);
            for a in 0..self.d {
                for step in [-1i64, 1] {
                    let mut y = x.clone();
                    y[a] += step;
                    if !self.contains(&y) {
                        out.push((i, y));
                    }
                }
            }
        }
        out
    }
}

/// Paving of a torus by blocks `B_L(v)` of side `2L + 1` centred on `((2L+1)Z)^d`.
#[derive(Clone, Debug)]
pub struct CoarseLattice {
    torus: TorusGeom,
    half_block: usize,
    block_side: usize,
    coarse_side: usize,
    n_coarse: usize,
    block_of: Vec<usize>,
    star: Vec<Vec<usize>>,
}

impl CoarseLattice {
    pub fn new(torus: &TorusGeom, half_block: usize) -> Result<Self> {
        let m = 2 * half_block + 1;
        if torus.side() % m != 0 {
            return Err(Error::Divisibility { side: torus.side(), block: m });
        }
        let d = torus.dim();
        let k = torus.side() / m;
        let n_coarse = k.pow(d as u32);
        let mut lat = CoarseLattice {
            torus: torus.clone(),
            half_block,
            block_side: m,
            coarse_side: k,
            n_coarse,
            block_of: Vec::new(),
            star: Vec::new(),
        };
        lat.block_of = (0..torus.n_sites())
            .map(|s| {
                torus
                    .index_coords(s)
                    .iter()
                    .enumerate()
                    .map(|(a, &u)| ((u + half_block) % torus.side() / m) * k.pow(a as u32))
                    .sum()
            })
            .collect();
        lat.star = (0..n_coarse).map(|c| lat.compute_star(c)).collect();
        Ok(lat)
    }

    pub fn torus(&self) -> &TorusGeom {
        &self.torus
    }
    pub fn half_block(&self) -> usize {
        self.half_block
    }
    pub fn block_side(&self) -> usize {
        self.block_side
    }
    pub fn coarse_side(&self) -> usize {
        self.coarse_side
    }
    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }
    pub fn dim(&self) -> usize {
        self.torus.dim()
    }

    /// Coarse index of the block containing `site`.
    pub fn block_of(&self, site: usize) -> usize {
        self.block_of[site]
    }

    pub fn coarse_coords(&self, c: usize) -> Vec<usize> {
        (0..self.dim()).map(|a| c / self.coarse_side.pow(a as u32) % self.coarse_side).collect()
    }

    pub fn coarse_at(&self, x: &[i64]) -> usize {
        x.iter()
            .enumerate()
            .map(|(a, &u)| u.rem_euclid(self.coarse_side as i64) as usize * self.coarse_side.pow(a as u32))
            .sum()
    }

    /// Torus site at the centre of block `c`.
    pub fn center(&self, c: usize) -> usize {
        let x: Vec<i64> = self.coarse_coords(c).iter().map(|&u| (u * self.block_side) as i64).collect();
        self.torus.site_at(&x)
    }

    pub fn block_sites(&self, c: usize) -> SiteSet {
        self.torus.ball(self.center(c), self.half_block)
    }

    /// `[delta]_L`: centres of the blocks meeting `delta`.
    pub fn coarsen(&self, delta: &SiteSet) -> SiteSet {
        SiteSet::from_iter(self.n_coarse, delta.iter().map(|s| self.block_of[s]))
    }

    /// Union of the blocks of a coarse set, as torus sites.
    pub fn expand(&self, coarse: &SiteSet) -> SiteSet {
        let mut out = SiteSet::new(self.torus.n_sites());
        for c in coarse.iter() {
            out.union_with(&self.block_sites(c));
        }
        out
    }

    /// Distinct coarse sites at periodic sup-distance exactly 1.
    pub fn star_neighbours(&self, c: usize) -> &[usize] {
        &self.star[c]
    }

    fn compute_star(&self, c: usize) -> Vec<usize> {
        let d = self.dim();
        let x: Vec<i64> = self.coarse_coords(c).iter().map(|&u| u as i64).collect();
        let mut out = Vec::new();
        for code in 0..3usize.pow(d as u32) {
            let mut y = x.clone();
            let mut t = code;
            for yi in y.iter_mut() {
                *yi += (t % 3) as i64 - 1;
                t /= 3;
            }
            let w = self.coarse_at(&y);
            if w != c && !out.contains(&w) {
                out.push(w);
            }
        }
        out.sort_unstable();
        out
    }

    /// Periodic sup-distance between coarse sites.
    pub fn coarse_dist(&self, a: usize, b: usize) -> usize {
        let (xa, xb) = (self.coarse_coords(a), self.coarse_coords(b));
        xa.iter()
            .zip(&xb)
            .map(|(&u, &v)| {
                let d = u.abs_diff(v);
                d.min(self.coarse_side - d)
            })
            .max()
            .unwrap_or(0)
    }

    /// Coarse *-connectivity of a coarse set.
    pub fn is_star_connected(&self, set: &SiteSet) -> bool {
        let Some(first) = set.first() else { return true };
        let mut seen = SiteSet::new(self.n_coarse);
        seen.insert(first);
        let mut stack = vec![first];
        while let Some(v) = stack.pop() {
            for &w in &self.star[v] {
                if set.contains(w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen.len() == set.len()
    }
}

/// Shorthand for `CoarseLattice::new(geom, l)?.coarsen(delta)`.
pub fn coarsen(geom: &TorusGeom, l: usize, delta: &SiteSet) -> Result<SiteSet> {
    Ok(CoarseLattice::new(geom, l)?.coarsen(delta))
}

/// Finite window of the half-lattice of space-time boxes, layers `0..horizon`.
///
/// Vertex `(c, k)` has index `k * n_coarse + c` and stands for the box centred at
/// block `c` and depth `k * eps * L`.
#[derive(Clone, Debug)]
pub struct SpaceTimeGraph {
    coarse: CoarseLattice,
    horizon: usize,
    eps: f64,
}

impl SpaceTimeGraph {
    pub fn new(coarse: &CoarseLattice, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Geometry("space-time window needs at least one layer".into()));
        }
        Ok(SpaceTimeGraph { coarse: coarse.clone(), horizon, eps: epsilon(coarse.dim()) })
    }

    pub fn coarse(&self) -> &CoarseLattice {
        &self.coarse
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn eps(&self) -> f64 {
        self.eps
    }
    pub fn n_vertices(&self) -> usize {
        self.horizon * self.coarse.n_coarse()
    }

    /// Depth separating consecutive layers, `eps * L`.
    pub fn time_step(&self) -> f64 {
        self.eps * self.coarse.half_block() as f64
    }

    pub fn vertex(&self, c: usize, layer: usize) -> usize {
        layer * self.coarse.n_coarse() + c
    }

    pub fn split(&self, v: usize) -> (usize, usize) {
        (v % self.coarse.n_coarse(), v / self.coarse.n_coarse())
    }

    pub fn neighbours(&self, v: usize) -> Vec<usize> {
        let (c, k) = self.split(v);
        let star = self.coarse.star_neighbours(c);
        let mut out: Vec<usize> = star.iter().map(|&w| self.vertex(w, k)).collect();
        for layer in [k.wrapping_sub(1), k + 1] {
            if layer < self.horizon {
                out.push(self.vertex(c, layer));
                out.extend(star.iter().map(|&w| self.vertex(w, layer)));
            }
        }
        out
    }

    pub fn max_degree_bound(&self) -> usize {
        3usize.pow(self.coarse.dim() as u32 + 1) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_rejects_degenerate() {
        assert!(TorusGeom::new(0, 2).is_err());
        assert!(TorusGeom::new(2, 0).is_err());
    }

    #[test]
    fn small_tori_sizes_and_degrees() {
        let t = TorusGeom::new(1, 2).unwrap();
        assert_eq!(t.n_sites(), 4);
        assert_eq!(t.neighbours(0), vec![3, 1]);
        let t = TorusGeom::new(2, 2).unwrap();
        assert_eq!(t.n_sites(), 16);
        assert!((0..16).all(|s| t.neighbours(s).len() == 4));
    }

    #[test]
    fn cube_2x2x2_neighbour_multiset() {
        let t = TorusGeom::new(3, 1).unwrap();
        assert_eq!(t.n_sites(), 8);
        for s in 0..8usize {
            let mut got = t.neighbours(s);
            got.sort();
            let mut want: Vec<usize> = (0..3).flat_map(|a| [s ^ (1 << a), s ^ (1 << a)]).collect();
            want.sort();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn coordinates_round_trip() {
        let t = TorusGeom::new(2, 3).unwrap();
        assert_eq!(t.coords(0), vec![0, 0]);
        for s in 0..t.n_sites() {
            let x = t.coords(s);
            assert!(x.iter().all(|&c| c > -3 && c <= 3));
            assert_eq!(t.site_at(&x), s);
        }
    }

    #[test]
    fn box_boundaries() {
        let b = BoxGeom::new(2, 1).unwrap();
        assert_eq!(b.n_sites(), 9);
        assert_eq!(b.interior_boundary().len(), 8);
        assert_eq!(b.exterior_boundary().len(), 12);
        assert_eq!(b.edge_boundary().len(), 12);
        for (i, y) in b.edge_boundary() {
            assert!(b.contains(&b.coords(i)) && !b.contains(&y));
        }
        let single = BoxGeom::new(2, 0).unwrap();
        assert_eq!(single.outside_degree(0), 4);
    }

    #[test]
    fn coarse_partition() {
        let t = TorusGeom::new(2, 3).unwrap();
        let c = CoarseLattice::new(&t, 1).unwrap();
        assert_eq!(c.n_coarse(), 4);
        let mut count = vec![0; t.n_sites()];
        for v in 0..c.n_coarse() {
            for s in c.block_sites(v).iter() {
                count[s] += 1;
                assert_eq!(c.block_of(s), v);
            }
        }
        assert!(count.iter().all(|&k| k == 1));
        assert!(CoarseLattice::new(&t, 2).is_err());
    }

    #[test]
    fn coarsen_examples() {
        let t = TorusGeom::new(1, 3).unwrap();
        let c = CoarseLattice::new(&t, 1).unwrap();
        assert!(c.coarsen(&SiteSet::new(6)).is_empty());
        assert_eq!(c.coarsen(&c.block_sites(1)).to_vec(), vec![1]);
        // sites 1 and 2 lie in the blocks centred at 0 and 3
        assert_eq!(c.coarsen(&SiteSet::from_iter(6, [1, 2])).to_vec(), vec![0, 1]);
    }

    #[test]
    fn gamma_degrees() {
        let t = TorusGeom::new(1, 9).unwrap();
        let c = CoarseLattice::new(&t, 1).unwrap();
        assert_eq!(c.coarse_side(), 6);
        let g = SpaceTimeGraph::new(&c, 3).unwrap();
        assert_eq!(g.neighbours(g.vertex(2, 1)).len(), 8);
        assert_eq!(g.neighbours(g.vertex(2, 0)).len(), 8 - 3);
        assert_eq!(g.max_degree_bound(), 8);
        // sup distance 2 blocks apart on the same layer
        assert!(!g.neighbours(g.vertex(0, 0)).contains(&g.vertex(2, 0)));
    }
}

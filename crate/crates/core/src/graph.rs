//! Spin graphs: neighbour lists plus a fixed boundary field per site.

use crate::lattice::{BoundaryCondition, BoxGeom, TorusGeom};

/// Finite multigraph on which the Ising model and its dynamics live.
///
/// `boundary[v]` is the sum of frozen boundary spins adjacent to `v`; it enters
/// the local field exactly like an extra neighbour.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinGraph {
    offsets: Vec<usize>,
    nbrs: Vec<usize>,
    boundary: Vec<i32>,
}

impl SpinGraph {
    /// Builds from an edge list; repeated edges are kept as parallel bonds.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut lists = vec![Vec::new(); n];
        for &(i, j) in edges {
            assert!(i != j && i < n && j < n, "bad edge ({i},{j})");
            lists[i].push(j);
            lists[j].push(i);
        }
        Self::from_lists(lists, vec![0; n])
    }

    fn from_lists(lists: Vec<Vec<usize>>, boundary: Vec<i32>) -> Self {
        let mut offsets = vec![0];
        let mut nbrs = Vec::new();
        for l in lists {
            nbrs.extend(l);
            offsets.push(nbrs.len());
        }
        SpinGraph { offsets, nbrs, boundary }
    }

    pub fn torus(t: &TorusGeom) -> Self {
        let lists = (0..t.n_sites()).map(|s| t.neighbours(s)).collect();
        Self::from_lists(lists, vec![0; t.n_sites()])
    }

    pub fn boxed(b: &BoxGeom, bc: BoundaryCondition) -> Self {
        let lists = (0..b.n_sites()).map(|s| b.neighbours(s)).collect();
        let boundary = (0..b.n_sites()).map(|s| bc.spin() * b.outside_degree(s) as i32).collect();
        Self::from_lists(lists, boundary)
    }

    /// Same graph with a replaced boundary field.
    pub fn with_boundary(&self, boundary: Vec<i32>) -> Self {
        assert_eq!(boundary.len(), self.n_sites());
        SpinGraph { boundary, ..self.clone() }
    }

    pub fn n_sites(&self) -> usize {
        self.boundary.len()
    }

    #[inline]
    pub fn neighbours(&self, v: usize) -> &[usize] {
        &self.nbrs[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn boundary_field(&self, v: usize) -> i32 {
        self.boundary[v]
    }

    /// Largest possible |local field| over sites.
    pub fn max_field(&self) -> i32 {
        (0..self.n_sites()).map(|v| self.neighbours(v).len() as i32 + self.boundary[v].abs()).max().unwrap_or(0)
    }

    /// Each bond once, as `(i, j)` with `i < j`; parallel bonds repeat.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n_sites()).flat_map(|i| self.neighbours(i).iter().filter(move |&&j| i < j).map(move |&j| (i, j))).collect()
    }

    /// Local field `sum of neighbour spins + boundary` at `v`.
    #[inline]
    pub fn local_field(&self, spins: &[i8], v: usize) -> i32 {
        self.neighbours(v).iter().map(|&j| spins[j] as i32).sum::<i32>() + self.boundary[v]
    }

    /// `sum_{i~j} s_i s_j + sum_i b_i s_i`.
    pub fn bond_sum(&self, spins: &[i8]) -> i64 {
        let inner: i64 = self.edges().iter().map(|&(i, j)| (spins[i] * spins[j]) as i64).sum();
        inner + (0..self.n_sites()).map(|i| (self.boundary[i] * spins[i] as i32) as i64).sum::<i64>()
    }
}

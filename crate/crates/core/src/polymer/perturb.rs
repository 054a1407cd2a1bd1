//! Monte Carlo polymer weights for the coarse-grained dependency encoding and the
//! resulting perturbation series for the pressure and for correlations.
//!
//! A sample is a perfect sample `sigma` of the torus measure together with the
//! coarse sets `X(v) = [KUPD(B_L(v))]_L`, all read off one graphical construction.

use std::collections::HashMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{for_each_cluster, PolymerModel, CLUSTER_CAP};
use crate::animals::for_each_connected_set;
use crate::error::{invalid, Error, Result};
use crate::glauber::{ModelParams, UpdateRealization};
use crate::graph::SpinGraph;
use crate::infoperc::{Coupling, Explorer};
use crate::lattice::{CoarseLattice, TorusGeom};
use crate::sets::SiteSet;
use crate::stats::{mean_se, replica_seed};

/// Coupling searches give up beyond this depth; such replicas are censored.
pub const DEFAULT_T_MAX: f64 = 1e3;

/// Largest polymer gas handed to the cluster expansion.
pub const MAX_POLYMERS: usize = 4000;

/// Splitting of the bond sum into intra-block terms `f_v` and cross-block terms `f_vw`.
#[derive(Clone, Debug)]
pub struct BlockEnergyDecomposition {
    coarse: CoarseLattice,
    block_bonds: Vec<Vec<(usize, usize)>>,
    pairs: Vec<(usize, usize)>,
    pair_bonds: Vec<Vec<(usize, usize)>>,
}

impl BlockEnergyDecomposition {
    pub fn new(coarse: &CoarseLattice) -> Self {
        let mut block_bonds = vec![Vec::new(); coarse.n_coarse()];
        let mut by_pair: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
        for (i, j) in coarse.torus().bonds() {
            let (a, b) = (coarse.block_of(i), coarse.block_of(j));
            if a == b {
                block_bonds[a].push((i, j));
            } else {
                by_pair.entry((a.min(b), a.max(b))).or_default().push((i, j));
            }
        }
        let mut pairs: Vec<(usize, usize)> = by_pair.keys().copied().collect();
        pairs.sort_unstable();
        let pair_bonds = pairs.iter().map(|p| by_pair[p].clone()).collect();
        BlockEnergyDecomposition { coarse: coarse.clone(), block_bonds, pairs, pair_bonds }
    }

    pub fn coarse(&self) -> &CoarseLattice {
        &self.coarse
    }

    /// Coarse pairs `v < w` joined by at least one bond.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn block_term(&self, spins: &[i8], v: usize) -> i64 {
        bond_sum(spins, &self.block_bonds[v])
    }

    pub fn pair_term(&self, spins: &[i8], k: usize) -> i64 {
        bond_sum(spins, &self.pair_bonds[k])
    }

    /// `sum_{i in B_L(v)} sigma_i`.
    pub fn field_term(&self, spins: &[i8], v: usize) -> i64 {
        self.coarse.block_sites(v).iter().map(|i| spins[i] as i64).sum()
    }

    /// `2d (2L+1)^d`.
    pub fn term_bound(&self) -> i64 {
        let d = self.coarse.dim() as u32;
        2 * d as i64 * (self.coarse.block_side() as i64).pow(d)
    }

    /// All terms with their coarse supports: blocks first, then pairs.
    pub fn terms(&self, spins: &[i8]) -> Vec<(Vec<usize>, i64)> {
        let blocks = (0..self.coarse.n_coarse()).map(|v| (vec![v], self.block_term(spins, v)));
        let pairs = self.pairs.iter().enumerate().map(|(k, &(v, w))| (vec![v, w], self.pair_term(spins, k)));
        blocks.chain(pairs).collect()
    }
}

fn bond_sum(spins: &[i8], bonds: &[(usize, usize)]) -> i64 {
    bonds.iter().map(|&(i, j)| (spins[i] * spins[j]) as i64).sum()
}

/// Spins at time 0 and the coarse dependency sets of every block.
#[derive(Clone, Debug)]
pub struct BlockSample {
    pub spins: Vec<i8>,
    pub sets: Vec<SiteSet>,
}

/// Draws [`BlockSample`]s on a torus.
#[derive(Clone, Debug)]
pub struct BlockSampler {
    coarse: CoarseLattice,
    graph: SpinGraph,
    params: ModelParams,
    t_max: f64,
}

impl BlockSampler {
    pub fn new(coarse: &CoarseLattice, params: &ModelParams, t_max: f64) -> Self {
        BlockSampler { coarse: coarse.clone(), graph: SpinGraph::torus(coarse.torus()), params: *params, t_max }
    }

    pub fn coarse(&self) -> &CoarseLattice {
        &self.coarse
    }

    /// One sample, or `None` when some coupling search exceeds `t_max`.
    pub fn sample(&self, ex: &mut Explorer, seed: u64) -> Result<Option<BlockSample>> {
        let n = self.graph.n_sites();
        let mut real = UpdateRealization::sample(n, 0.0, seed)?;
        let all: Vec<usize> = (0..n).collect();
        let spins = match ex.coupling_time(&mut real, &self.graph, &self.params, &all, 0.0, self.t_max)? {
            Coupling::Coupled(c) => c.restriction,
            Coupling::NotCoupled { .. } => return Ok(None),
        };
        let mut sets = Vec::with_capacity(self.coarse.n_coarse());
        for v in 0..self.coarse.n_coarse() {
            let block = self.coarse.block_sites(v).to_vec();
            match ex.coupling_time(&mut real, &self.graph, &self.params, &block, 0.0, self.t_max)? {
                Coupling::Coupled(c) => sets.push(self.coarse.coarsen(&c.kupd)),
                Coupling::NotCoupled { .. } => return Ok(None),
            }
        }
        Ok(Some(BlockSample { spins, sets }))
    }

    /// Samples for replicas `0..replicas` in parallel; returns the coupled ones and
    /// the number censored.
    pub fn sample_many(&self, replicas: usize, seed: u64) -> Result<(Vec<BlockSample>, usize)> {
        let n = self.graph.n_sites();
        let out: Vec<Option<BlockSample>> = (0..replicas)
            .into_par_iter()
            .map_init(|| Explorer::new(n), |ex, r| self.sample(ex, replica_seed(seed, r as u64)))
            .collect::<Result<_>>()?;
        let censored = out.iter().filter(|s| s.is_none()).count();
        Ok((out.into_iter().flatten().collect(), censored))
    }
}

/// Sums `prod_{b in H} g_b` over overlap-connected `H` with `|H| <= max_h`, keyed by
/// `C = union of X_b`. Items are (coarse support, `g_b`); `keep` filters items by `X_b`.
fn polymer_terms(
    items: &[(Vec<usize>, Complex64)],
    sets: &[SiteSet],
    max_h: usize,
    keep: impl Fn(&SiteSet) -> bool,
) -> HashMap<SiteSet, Complex64> {
    let universe = sets.first().map_or(0, SiteSet::universe);
    let mut xs = Vec::new();
    let mut vals = Vec::new();
    for (support, g) in items {
        if *g == Complex64::new(0.0, 0.0) {
            continue;
        }
        let mut x = SiteSet::new(universe);
        for &v in support {
            x.union_with(&sets[v]);
        }
        if keep(&x) {
            xs.push(x);
            vals.push(*g);
        }
    }
    let k = xs.len();
    let adj: Vec<Vec<usize>> = (0..k).map(|i| (0..k).filter(|&j| j != i && xs[i].intersects(&xs[j])).collect()).collect();
    let mut out: HashMap<SiteSet, Complex64> = HashMap::new();
    for root in 0..k {
        for_each_connected_set(&adj, root, max_h, |u| u > root, |h| {
            let mut c = xs[h[0]].clone();
            let mut term = vals[h[0]];
            for &b in &h[1..] {
                c.union_with(&xs[b]);
                term *= vals[b];
            }
            *out.entry(c).or_default() += term;
            true
        });
    }
    out
}

fn bond_items(dec: &BlockEnergyDecomposition, spins: &[i8], z: Complex64) -> Vec<(Vec<usize>, Complex64)> {
    dec.terms(spins).into_iter().map(|(s, f)| (s, (z * f as f64).exp() - 1.0)).collect()
}

fn complex_se(xs: &[Complex64]) -> (Complex64, f64) {
    let re: Vec<f64> = xs.iter().map(|c| c.re).collect();
    let im: Vec<f64> = xs.iter().map(|c| c.im).collect();
    let (mr, sr) = mean_se(&re);
    let (mi, si) = mean_se(&im);
    (Complex64::new(mr, mi), sr.hypot(si))
}

fn check_z(z: Complex64) -> Result<()> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        invalid("perturbation parameter must be finite")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightEstimate {
    pub value: Complex64,
    pub se: f64,
    pub replicas: usize,
    pub censored: usize,
}

/// Largest coarse set accepted by [`estimate_weight`].
pub const WEIGHT_SET_CAP: usize = 4;

/// Estimate of `w(C) = sum_H Phi(prod_{b in H} (e^{z f_b} - 1) 1[A(C, H)])` for the
/// coupling perturbation, `H` ranging over blocks and block pairs inside `C`.
pub fn estimate_weight(
    c: &SiteSet,
    params: &ModelParams,
    z: Complex64,
    torus: &TorusGeom,
    l: usize,
    replicas: usize,
    seed: u64,
) -> Result<WeightEstimate> {
    check_z(z)?;
    let coarse = CoarseLattice::new(torus, l)?;
    if c.universe() != coarse.n_coarse() || c.is_empty() {
        return invalid("C must be a nonempty set of coarse sites");
    }
    if c.len() > WEIGHT_SET_CAP {
        return Err(Error::SizeCap { what: "coarse set", size: c.len(), cap: WEIGHT_SET_CAP });
    }
    let zero = WeightEstimate { value: Complex64::new(0.0, 0.0), se: 0.0, replicas, censored: 0 };
    if z == Complex64::new(0.0, 0.0) || !coarse.is_star_connected(c) {
        return Ok(zero);
    }
    let dec = BlockEnergyDecomposition::new(&coarse);
    let (samples, censored) = BlockSampler::new(&coarse, params, DEFAULT_T_MAX).sample_many(replicas, seed)?;
    let per: Vec<Complex64> = samples
        .par_iter()
        .map(|s| {
            let items: Vec<_> = bond_items(&dec, &s.spins, z).into_iter().filter(|(sup, _)| sup.iter().all(|&v| c.contains(v))).collect();
            let terms = polymer_terms(&items, &s.sets, usize::MAX, |x| x.is_subset(c));
            terms.get(c).copied().unwrap_or_default()
        })
        .collect();
    let (value, se) = complex_se(&per);
    Ok(WeightEstimate { value, se, replicas, censored })
}

/// Coarse translation classes of polymers and per-sample sums over each class.
struct ClassTable {
    shifts: Vec<Vec<usize>>,
    index: HashMap<SiteSet, usize>,
    orbits: Vec<Vec<SiteSet>>,
}

impl ClassTable {
    fn new(coarse: &CoarseLattice) -> Self {
        let n = coarse.n_coarse();
        let k = coarse.coarse_side();
        let shifts = (0..n)
            .map(|t| {
                let tc = coarse.coarse_coords(t);
                (0..n)
                    .map(|c| {
                        coarse.coarse_coords(c).iter().zip(&tc).enumerate().map(|(a, (&x, &y))| ((x + y) % k) * k.pow(a as u32)).sum()
                    })
                    .collect()
            })
            .collect();
        ClassTable { shifts, index: HashMap::new(), orbits: Vec::new() }
    }

    fn class_of(&mut self, c: &SiteSet) -> usize {
        if let Some(&k) = self.index.get(c) {
            return k;
        }
        let mut orbit: Vec<SiteSet> =
            self.shifts.iter().map(|sh| SiteSet::from_iter(c.universe(), c.iter().map(|v| sh[v]))).collect();
        orbit.sort();
        orbit.dedup();
        let k = self.orbits.len();
        for s in &orbit {
            self.index.insert(s.clone(), k);
        }
        self.orbits.push(orbit);
        k
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PressureEstimate {
    pub z: f64,
    /// Truncated series for `psi(beta + z, h) - psi(beta, h)`, per site.
    pub value: f64,
    pub se: f64,
    /// Contribution of clusters of each order `1..=max_order`, per site.
    pub per_order: Vec<f64>,
    pub last_order_magnitude: f64,
    /// Monte Carlo estimate of `<sum sigma_i sigma_j> / |T|`.
    pub first_order_coefficient: f64,
    pub first_order_se: f64,
    pub polymer_classes: usize,
    pub polymers: usize,
    pub replicas: usize,
    pub censored: usize,
}

/// Per-sample class sums `Y_k(s)` for the coupling perturbation.
fn class_sums(
    samples: &[BlockSample],
    dec: &BlockEnergyDecomposition,
    z: Complex64,
    max_h: usize,
    table: &mut ClassTable,
) -> Vec<Vec<(usize, Complex64)>> {
    let raw: Vec<HashMap<SiteSet, Complex64>> =
        samples.par_iter().map(|s| polymer_terms(&bond_items(dec, &s.spins, z), &s.sets, max_h, |_| true)).collect();
    raw.into_iter()
        .map(|m| {
            let mut acc: HashMap<usize, Complex64> = HashMap::new();
            for (c, t) in m {
                *acc.entry(table.class_of(&c)).or_default() += t;
            }
            acc.into_iter().collect()
        })
        .collect()
}

/// Truncated cluster expansion of `(1/|T|) log <exp(z sum sigma_i sigma_j)>`, which
/// equals `psi(beta + z, h) - psi(beta, h)` on the torus.
pub fn pressure_perturbation(
    params: &ModelParams,
    z: f64,
    torus: &TorusGeom,
    l: usize,
    max_order: usize,
    replicas: usize,
    seed: u64,
) -> Result<PressureEstimate> {
    if !z.is_finite() || max_order == 0 || replicas < 2 {
        return invalid("need finite z, max_order >= 1 and at least 2 replicas");
    }
    let coarse = CoarseLattice::new(torus, l)?;
    let dec = BlockEnergyDecomposition::new(&coarse);
    let (samples, censored) = BlockSampler::new(&coarse, params, DEFAULT_T_MAX).sample_many(replicas, seed)?;
    if samples.len() < 2 {
        return invalid("fewer than 2 coupled replicas");
    }
    let volume = torus.n_sites() as f64;
    let graph = SpinGraph::torus(torus);
    let energies: Vec<f64> = samples.iter().map(|s| graph.bond_sum(&s.spins) as f64 / volume).collect();
    let (first_order_coefficient, first_order_se) = mean_se(&energies);
    let zc = Complex64::new(z, 0.0);
    let mut table = ClassTable::new(&coarse);
    let per_sample = class_sums(&samples, &dec, zc, max_order, &mut table);
    let r = samples.len() as f64;
    let n_classes = table.orbits.len();
    let mut w_hat = vec![Complex64::new(0.0, 0.0); n_classes];
    for ys in &per_sample {
        for &(k, y) in ys {
            w_hat[k] += y / (r * table.orbits[k].len() as f64);
        }
    }
    let polymers: usize = table.orbits.iter().map(Vec::len).sum();
    let mut per_order = vec![Complex64::new(0.0, 0.0); max_order];
    let mut grad = vec![Complex64::new(0.0, 0.0); n_classes];
    if max_order == 1 {
        for k in 0..n_classes {
            let o = table.orbits[k].len() as f64;
            per_order[0] += w_hat[k] * o;
            grad[k] = Complex64::new(o, 0.0);
        }
    } else {
        if polymers > MAX_POLYMERS {
            return Err(Error::SizeCap { what: "polymers", size: polymers, cap: MAX_POLYMERS });
        }
        let (supports, class): (Vec<Vec<usize>>, Vec<usize>) =
            table.orbits.iter().enumerate().flat_map(|(k, o)| o.iter().map(move |s| (s.to_vec(), k))).unzip();
        let model = PolymerModel::hard_core(&supports, class.iter().map(|&k| w_hat[k]).collect())?;
        for_each_cluster(&model, max_order, CLUSTER_CAP, |cl, coef| {
            let order: u32 = cl.iter().map(|&(_, m)| m).sum();
            let ws: Vec<Complex64> = cl.iter().map(|&(i, m)| model.weight(i).powu(m)).collect();
            per_order[order as usize - 1] += ws.iter().product::<Complex64>() * coef;
            for (a, &(i, m)) in cl.iter().enumerate() {
                let others: Complex64 = ws.iter().enumerate().filter(|&(b, _)| b != a).map(|(_, w)| *w).product();
                grad[class[i]] += others * model.weight(i).powu(m - 1) * (m as f64 * coef);
            }
        })?;
    }
    let lin: Vec<Complex64> = per_sample
        .iter()
        .map(|ys| ys.iter().map(|&(k, y)| grad[k] * y / (table.orbits[k].len() as f64 * volume)).sum())
        .collect();
    let (_, se) = complex_se(&lin);
    let per_order: Vec<f64> = per_order.iter().map(|c| c.re / volume).collect();
    Ok(PressureEstimate {
        z,
        value: per_order.iter().sum(),
        se,
        last_order_magnitude: per_order.last().map_or(0.0, |x| x.abs()),
        per_order,
        first_order_coefficient,
        first_order_se,
        polymer_classes: n_classes,
        polymers,
        replicas,
        censored,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrelationEstimate {
    /// Estimate of `<sigma_A>` at field `h + z`.
    pub value: Complex64,
    pub se: f64,
    /// `log Z^A - log Z`, truncated, by cluster order.
    pub per_order: Vec<Complex64>,
    pub last_order_magnitude: f64,
    pub polymers: usize,
    pub replicas: usize,
    pub censored: usize,
}

/// `<sigma_A>` at field `h + z` as `exp(log Z^A - log Z)`, both cluster sums truncated
/// at `max_order`. `Z` is the gas for `<exp(z sum sigma_i)>`, `Z^A` the one for
/// `<sigma_A exp(z sum sigma_i)>`; their weights agree on polymers away from `[A]_L`.
#[allow(clippy::too_many_arguments)]
pub fn correlation_perturbation(
    a: &[usize],
    params: &ModelParams,
    z: Complex64,
    torus: &TorusGeom,
    l: usize,
    max_order: usize,
    replicas: usize,
    seed: u64,
) -> Result<CorrelationEstimate> {
    check_z(z)?;
    if max_order == 0 || replicas < 2 {
        return invalid("need max_order >= 1 and at least 2 replicas");
    }
    if a.iter().any(|&i| i >= torus.n_sites()) {
        return invalid("site outside the torus");
    }
    if a.is_empty() {
        return Ok(CorrelationEstimate {
            value: Complex64::new(1.0, 0.0),
            se: 0.0,
            per_order: vec![Complex64::new(0.0, 0.0); max_order],
            last_order_magnitude: 0.0,
            polymers: 0,
            replicas,
            censored: 0,
        });
    }
    let coarse = CoarseLattice::new(torus, l)?;
    let dec = BlockEnergyDecomposition::new(&coarse);
    let n_c = coarse.n_coarse();
    // sigma_A restricted to each block; sites repeated in A cancel
    let mut a_sites = SiteSet::new(torus.n_sites());
    for &i in a {
        if !a_sites.insert(i) {
            a_sites.remove(i);
        }
    }
    let a_blocks = coarse.coarsen(&a_sites);
    let (samples, censored) = BlockSampler::new(&coarse, params, DEFAULT_T_MAX).sample_many(replicas, seed)?;
    if samples.len() < 2 {
        return invalid("fewer than 2 coupled replicas");
    }
    let maps: Vec<(HashMap<SiteSet, Complex64>, HashMap<SiteSet, Complex64>)> = samples
        .par_iter()
        .map(|s| {
            let base: Vec<(Vec<usize>, Complex64)> =
                (0..n_c).map(|v| (vec![v], (z * dec.field_term(&s.spins, v) as f64).exp() - 1.0)).collect();
            let with_a: Vec<(Vec<usize>, Complex64)> = (0..n_c)
                .map(|v| {
                    let e = (z * dec.field_term(&s.spins, v) as f64).exp();
                    let sign: i8 = coarse.block_sites(v).iter().filter(|&i| a_sites.contains(i)).map(|i| s.spins[i]).product();
                    (vec![v], e * sign as f64 - 1.0)
                })
                .collect();
            (polymer_terms(&base, &s.sets, max_order, |_| true), polymer_terms(&with_a, &s.sets, max_order, |_| true))
        })
        .collect();
    // term-by-term cancellation away from [A]_L
    for (base, with_a) in &maps {
        for (c, t) in with_a.iter().filter(|(c, _)| !c.intersects(&a_blocks)) {
            let b = base.get(c).copied().unwrap_or_default();
            if (b - t).norm() > 1e-12 * (1.0 + t.norm()) {
                return Err(Error::Invariant(format!("w and w^A differ on a polymer away from [A]_L: {b} vs {t}")));
            }
        }
        if base.iter().any(|(c, t)| !c.intersects(&a_blocks) && !with_a.contains_key(c) && t.norm() > 1e-12) {
            return Err(Error::Invariant("polymer away from [A]_L missing from the A-gas".into()));
        }
    }
    let mut table = ClassTable::new(&coarse);
    let mut a_index: HashMap<SiteSet, usize> = HashMap::new();
    let mut per_sample: Vec<(Vec<(usize, Complex64)>, Vec<(usize, Complex64)>)> = Vec::with_capacity(maps.len());
    for (base, with_a) in maps {
        let mut yb: HashMap<usize, Complex64> = HashMap::new();
        for (c, t) in base {
            *yb.entry(table.class_of(&c)).or_default() += t;
        }
        let mut ya = Vec::new();
        for (c, t) in with_a.into_iter().filter(|(c, _)| c.intersects(&a_blocks)) {
            table.class_of(&c);
            let next = a_index.len();
            ya.push((*a_index.entry(c).or_insert(next), t));
        }
        per_sample.push((yb.into_iter().collect(), ya));
    }
    let r = per_sample.len() as f64;
    let n_classes = table.orbits.len();
    let mut w_hat = vec![Complex64::new(0.0, 0.0); n_classes];
    let mut wa_hat = vec![Complex64::new(0.0, 0.0); a_index.len()];
    for (yb, ya) in &per_sample {
        for &(k, y) in yb {
            w_hat[k] += y / (r * table.orbits[k].len() as f64);
        }
        for &(j, y) in ya {
            wa_hat[j] += y / r;
        }
    }
    // polymers: all translates of every class; A-slot is the class itself away from [A]_L
    let mut supports = Vec::new();
    let mut slots: Vec<(usize, Option<usize>)> = Vec::new();
    for (k, orbit) in table.orbits.iter().enumerate() {
        for s in orbit {
            supports.push(s.to_vec());
            slots.push((k, if s.intersects(&a_blocks) { Some(a_index.get(s).copied().unwrap_or(usize::MAX)) } else { None }));
        }
    }
    if supports.len() > MAX_POLYMERS {
        return Err(Error::SizeCap { what: "polymers", size: supports.len(), cap: MAX_POLYMERS });
    }
    let wa_of = |i: usize| match slots[i].1 {
        None => w_hat[slots[i].0],
        Some(usize::MAX) => Complex64::new(0.0, 0.0),
        Some(j) => wa_hat[j],
    };
    let model = PolymerModel::hard_core(&supports, (0..supports.len()).map(|i| w_hat[slots[i].0]).collect())?;
    let mut per_order = vec![Complex64::new(0.0, 0.0); max_order];
    let mut grad_b = vec![Complex64::new(0.0, 0.0); n_classes];
    let mut grad_a = vec![Complex64::new(0.0, 0.0); wa_hat.len()];
    let mut stray = 0.0f64;
    for_each_cluster(&model, max_order, CLUSTER_CAP, |cl, coef| {
        let order: u32 = cl.iter().map(|&(_, m)| m).sum();
        let wb: Vec<Complex64> = cl.iter().map(|&(i, m)| model.weight(i).powu(m)).collect();
        let wa: Vec<Complex64> = cl.iter().map(|&(i, m)| wa_of(i).powu(m)).collect();
        let diff = (wa.iter().product::<Complex64>() - wb.iter().product::<Complex64>()) * coef;
        if cl.iter().all(|&(i, _)| slots[i].1.is_none()) {
            stray = stray.max(diff.norm());
            return;
        }
        per_order[order as usize - 1] += diff;
        for (x, &(i, m)) in cl.iter().enumerate() {
            let ob: Complex64 = wb.iter().enumerate().filter(|&(y, _)| y != x).map(|(_, w)| *w).product();
            let oa: Complex64 = wa.iter().enumerate().filter(|&(y, _)| y != x).map(|(_, w)| *w).product();
            let db = ob * model.weight(i).powu(m - 1) * (m as f64 * coef);
            let da = oa * wa_of(i).powu(m - 1) * (m as f64 * coef);
            grad_b[slots[i].0] -= db;
            match slots[i].1 {
                None => grad_b[slots[i].0] += da,
                Some(usize::MAX) => {}
                Some(j) => grad_a[j] += da,
            }
        }
    })?;
    if stray != 0.0 {
        return Err(Error::Invariant(format!("cluster away from [A]_L changed the sum by {stray}")));
    }
    let log_ratio: Complex64 = per_order.iter().sum();
    let value = log_ratio.exp();
    let lin: Vec<Complex64> = per_sample
        .iter()
        .map(|(yb, ya)| {
            let b: Complex64 = yb.iter().map(|&(k, y)| grad_b[k] * y / table.orbits[k].len() as f64).sum();
            let a: Complex64 = ya.iter().map(|&(j, y)| grad_a[j] * y).sum();
            (a + b) * value
        })
        .collect();
    let (_, se) = complex_se(&lin);
    Ok(CorrelationEstimate {
        value,
        se,
        last_order_magnitude: per_order.last().map_or(0.0, |c| c.norm()),
        per_order,
        polymers: supports.len(),
        replicas,
        censored,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn decomposition_reproduces_bond_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (d, half, l) in [(2, 3, 1), (1, 6, 1), (2, 2, 0), (3, 3, 1)] {
            let t = TorusGeom::new(d, half).unwrap();
            let coarse = CoarseLattice::new(&t, l).unwrap();
            let dec = BlockEnergyDecomposition::new(&coarse);
            let g = SpinGraph::torus(&t);
            for _ in 0..200 {
                let s: Vec<i8> = (0..t.n_sites()).map(|_| if rng.gen() { 1 } else { -1 }).collect();
                let terms = dec.terms(&s);
                assert_eq!(terms.iter().map(|t| t.1).sum::<i64>(), g.bond_sum(&s));
                assert!(terms.iter().all(|t| t.1.abs() <= dec.term_bound()));
            }
        }
    }

    #[test]
    fn zero_perturbation_is_exact() {
        let t = TorusGeom::new(1, 4).unwrap();
        let p = ModelParams::new(0.3, 0.1).unwrap();
        let c = SiteSet::from_iter(8, [0, 1]);
        let w = estimate_weight(&c, &p, Complex64::new(0.0, 0.0), &t, 0, 50, 1).unwrap();
        assert_eq!(w.value, Complex64::new(0.0, 0.0));
        let pr = pressure_perturbation(&p, 0.0, &t, 0, 3, 50, 1).unwrap();
        assert_eq!(pr.value, 0.0);
        let far = SiteSet::from_iter(8, [0, 4]);
        let w = estimate_weight(&far, &p, Complex64::new(0.1, 0.0), &t, 0, 50, 1).unwrap();
        assert_eq!(w.value, Complex64::new(0.0, 0.0));
        let e = correlation_perturbation(&[], &p, Complex64::new(0.1, 0.0), &t, 0, 3, 10, 1).unwrap();
        assert_eq!(e.value, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn sample_sets_contain_their_block() {
        let t = TorusGeom::new(2, 3).unwrap();
        let coarse = CoarseLattice::new(&t, 1).unwrap();
        let p = ModelParams::new(0.2, 0.0).unwrap();
        let (samples, censored) = BlockSampler::new(&coarse, &p, DEFAULT_T_MAX).sample_many(20, 5).unwrap();
        assert_eq!(censored, 0);
        for s in &samples {
            for (v, x) in s.sets.iter().enumerate() {
                assert!(x.contains(v));
                assert!(coarse.is_star_connected(x));
            }
        }
    }

    #[test]
    fn first_order_series_matches_coefficient() {
        let t = TorusGeom::new(1, 4).unwrap();
        let p = ModelParams::new(0.3, 0.0).unwrap();
        let z = 1e-4;
        let pr = pressure_perturbation(&p, z, &t, 0, 1, 200, 9).unwrap();
        assert!((pr.value / z - pr.first_order_coefficient).abs() < 1e-3);
    }
}

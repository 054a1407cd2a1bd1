//! Good and bad space-time boxes, the induced site percolation on the box lattice
//! and the cluster bounds on killed update sets.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::animals::for_each_connected_set;
use crate::error::{invalid, Error, Result};
use crate::glauber::{ModelParams, UpdateRealization};
use crate::graph::SpinGraph;
use crate::infoperc::{fit_survival, BlockEventChecker, DecayFit, Explorer};
use crate::lattice::{CoarseLattice, SpaceTimeGraph, TorusGeom};
use crate::sets::SiteSet;
use crate::stats::{proportion, replica_seed};
use crate::union_find::UnionFind;

/// Open (bad) / closed (good) state of every vertex of a finite box window.
#[derive(Clone, Debug)]
pub struct PercolationConfig {
    gamma: SpaceTimeGraph,
    open: Vec<bool>,
}

impl PercolationConfig {
    pub fn new(gamma: &SpaceTimeGraph, open: Vec<bool>) -> Result<Self> {
        if open.len() != gamma.n_vertices() {
            return invalid("one state per vertex required");
        }
        Ok(PercolationConfig { gamma: gamma.clone(), open })
    }

    pub fn gamma(&self) -> &SpaceTimeGraph {
        &self.gamma
    }
    pub fn open(&self) -> &[bool] {
        &self.open
    }
    pub fn is_open(&self, v: usize) -> bool {
        self.open[v]
    }
    pub fn bad_fraction(&self) -> f64 {
        self.open.iter().filter(|&&o| o).count() as f64 / self.open.len() as f64
    }
}

fn check_half_block(coarse: &CoarseLattice) -> Result<()> {
    if coarse.half_block() == 0 {
        return invalid("boxes need L >= 1");
    }
    Ok(())
}

/// Depth the realization must reach to classify every layer below `layers`.
pub fn painting_depth(gamma: &SpaceTimeGraph, layers: usize) -> f64 {
    let step = gamma.time_step();
    (layers.max(1) - 1) as f64 * step + 1.5 * step
}

/// Classifies every box of the window: open iff `A_L(w, t)` fails.
pub fn paint_boxes(real: &UpdateRealization, params: &ModelParams, gamma: &SpaceTimeGraph) -> Result<PercolationConfig> {
    let coarse = gamma.coarse();
    check_half_block(coarse)?;
    let need = painting_depth(gamma, gamma.horizon());
    if real.window() < need {
        return Err(Error::WindowTooShort { window: real.window(), needed: need });
    }
    let graph = SpinGraph::torus(coarse.torus());
    let mut checker = BlockEventChecker::new(&graph, coarse.torus(), params);
    let l = coarse.half_block();
    let open = (0..gamma.n_vertices())
        .map(|v| {
            let (c, k) = gamma.split(v);
            Ok(!checker.check(real, coarse.center(c), k as f64 * gamma.time_step(), l)?)
        })
        .collect::<Result<_>>()?;
    PercolationConfig::new(gamma, open)
}

/// Fresh realization from `seed`, painted.
pub fn paint_boxes_seeded(seed: u64, params: &ModelParams, gamma: &SpaceTimeGraph) -> Result<PercolationConfig> {
    let n = gamma.coarse().torus().n_sites();
    let real = UpdateRealization::sample(n, painting_depth(gamma, gamma.horizon()), seed)?;
    paint_boxes(&real, params, gamma)
}

/// Cluster of a seed set with its outer boundary and spatial projections.
#[derive(Clone, Debug)]
pub struct ClusterSet {
    pub seeds: Vec<usize>,
    /// `C_V`: open vertices joined to `V` by open paths.
    pub cluster: SiteSet,
    /// `dC_V`, including every closed seed.
    pub boundary: SiteSet,
    /// `Proj(C_V u dC_V)`.
    pub projection: SiteSet,
    /// Projection of the distance-1 neighbourhood of `C_V u dC_V`.
    pub neighbourhood_projection: SiteSet,
    /// Whether `C_V` reaches the deepest layer of the window.
    pub truncated: bool,
}

fn project(gamma: &SpaceTimeGraph, set: &SiteSet) -> SiteSet {
    SiteSet::from_iter(gamma.coarse().n_coarse(), set.iter().map(|v| gamma.split(v).0))
}

fn star_closure(coarse: &CoarseLattice, set: &SiteSet) -> SiteSet {
    let mut out = set.clone();
    for c in set.iter() {
        for &w in coarse.star_neighbours(c) {
            out.insert(w);
        }
    }
    out
}

/// Union-find clusters of the open vertices and the cluster of `seeds`.
pub fn clusters(omega: &PercolationConfig, seeds: &[usize]) -> Result<ClusterSet> {
    let gamma = &omega.gamma;
    let n = gamma.n_vertices();
    if seeds.iter().any(|&z| z >= n) {
        return invalid("seed outside the window");
    }
    let mut uf = UnionFind::new(n);
    for v in (0..n).filter(|&v| omega.open[v]) {
        for w in gamma.neighbours(v) {
            if w > v && omega.open[w] {
                uf.union(v, w);
            }
        }
    }
    let roots: Vec<usize> = seeds.iter().filter(|&&z| omega.open[z]).map(|&z| uf.find(z)).collect();
    let mut cluster = SiteSet::new(n);
    for v in (0..n).filter(|&v| omega.open[v]) {
        let r = uf.find(v);
        if roots.contains(&r) {
            cluster.insert(v);
        }
    }
    let mut boundary = SiteSet::from_iter(n, seeds.iter().copied().filter(|&z| !omega.open[z]));
    for v in cluster.iter() {
        for w in gamma.neighbours(v) {
            if !omega.open[w] {
                boundary.insert(w);
            }
        }
    }
    let mut both = cluster.clone();
    both.union_with(&boundary);
    let projection = project(gamma, &both);
    let neighbourhood_projection = star_closure(gamma.coarse(), &projection);
    let last = gamma.horizon() - 1;
    let truncated = cluster.iter().any(|v| gamma.split(v).1 == last);
    Ok(ClusterSet { seeds: seeds.to_vec(), cluster, boundary, projection, neighbourhood_projection, truncated })
}

/// Largest animal size accepted by [`count_lattice_animals`].
pub const ANIMAL_CAP: usize = 12;

/// Number of connected vertex sets of exactly `k` vertices containing `root`.
pub fn count_lattice_animals(adj: &[Vec<usize>], root: usize, k: usize) -> Result<u64> {
    if k > ANIMAL_CAP {
        return Err(Error::SizeCap { what: "animal size", size: k, cap: ANIMAL_CAP });
    }
    if root >= adj.len() {
        return invalid("root outside the graph");
    }
    let mut count = 0u64;
    for_each_connected_set(adj, root, k, |_| true, |s| {
        if s.len() == k {
            count += 1;
        }
        true
    });
    Ok(count)
}

fn cluster_size(adj: &[Vec<usize>], open: &[bool], seeds: &[usize], seen: &mut Vec<bool>, queue: &mut VecDeque<usize>) -> usize {
    seen.iter_mut().for_each(|s| *s = false);
    queue.clear();
    let mut size = 0;
    for &z in seeds {
        if open[z] && !seen[z] {
            seen[z] = true;
            queue.push_back(z);
        }
    }
    while let Some(v) = queue.pop_front() {
        size += 1;
        for &w in &adj[v] {
            if open[w] && !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    size
}

/// Windows up to this many vertices also get the exact tail.
pub const EXACT_TAIL_CAP: usize = 20;

#[derive(Clone, Debug, Serialize)]
pub struct BernoulliTail {
    pub p: f64,
    pub m: usize,
    pub estimate: f64,
    pub se: f64,
    pub exact: Option<f64>,
}

/// `P_p(|C_V| >= M)` for Bernoulli site percolation on the graph `adj`.
pub fn bernoulli_cluster_tail(p: f64, adj: &[Vec<usize>], seeds: &[usize], m: usize, replicas: usize, seed: u64) -> Result<BernoulliTail> {
    if !(0.0..=1.0).contains(&p) {
        return invalid("p must lie in [0, 1]");
    }
    let n = adj.len();
    if seeds.iter().any(|&z| z >= n) {
        return invalid("seed outside the graph");
    }
    let hits: usize = (0..replicas)
        .into_par_iter()
        .map_init(
            || (vec![false; n], vec![false; n], VecDeque::new()),
            |(open, seen, queue), r| {
                let mut rng = ChaCha8Rng::seed_from_u64(replica_seed(seed, r as u64));
                open.iter_mut().for_each(|o| *o = rng.gen_bool(p));
                usize::from(cluster_size(adj, open, seeds, seen, queue) >= m)
            },
        )
        .sum();
    let (estimate, se) = proportion(hits, replicas);
    let exact = (n <= EXACT_TAIL_CAP).then(|| {
        let mut open = vec![false; n];
        let mut seen = vec![false; n];
        let mut queue = VecDeque::new();
        let mut total = 0.0;
        for bits in 0u32..1 << n {
            for (i, o) in open.iter_mut().enumerate() {
                *o = bits >> i & 1 == 1;
            }
            if cluster_size(adj, &open, seeds, &mut seen, &mut queue) >= m {
                let k = bits.count_ones() as i32;
                total += p.powi(k) * (1.0 - p).powi(n as i32 - k);
            }
        }
        total
    });
    Ok(BernoulliTail { p, m, estimate, se, exact })
}

/// Adjacency lists of a box window.
pub fn gamma_adjacency(gamma: &SpaceTimeGraph) -> Vec<Vec<usize>> {
    (0..gamma.n_vertices()).map(|v| gamma.neighbours(v)).collect()
}

/// Tail of a size distribution with an exponential fit in `M`.
#[derive(Clone, Debug, Serialize)]
pub struct TailEstimate {
    pub thresholds: Vec<usize>,
    pub survival: Vec<f64>,
    pub se: Vec<f64>,
    /// Fit of `log P(size >= M)` against `M`.
    pub fit: DecayFit,
    /// Fitted rate divided by `L`.
    pub rate_per_l: f64,
}

impl TailEstimate {
    pub fn from_sizes(sizes: &[usize], thresholds: &[usize], l: usize) -> Self {
        let lags: Vec<f64> = thresholds.iter().map(|&m| m as f64 - 0.5).collect();
        let surv: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
        let fit = fit_survival(&lags, &surv);
        TailEstimate {
            thresholds: thresholds.to_vec(),
            survival: fit.p_hat.clone(),
            se: fit.se.clone(),
            rate_per_l: fit.rate / l.max(1) as f64,
            fit,
        }
    }
}

/// `V-bar`: all torus sites of the blocks of `v`.
fn v_bar(coarse: &CoarseLattice, v: &SiteSet) -> Vec<usize> {
    coarse.expand(v).to_vec()
}

fn check_coarse_set(coarse: &CoarseLattice, v: &SiteSet) -> Result<()> {
    if v.universe() != coarse.n_coarse() || v.is_empty() {
        return invalid("V must be a nonempty set of coarse sites");
    }
    Ok(())
}

/// Sizes `|[KUPD(V-bar)]_L|` over replicas; `None` for censored replicas.
pub fn kupd_coarse_sizes(
    params: &ModelParams,
    coarse: &CoarseLattice,
    v: &SiteSet,
    replicas: usize,
    seed: u64,
    t_max: f64,
) -> Result<Vec<Option<usize>>> {
    check_coarse_set(coarse, v)?;
    let graph = SpinGraph::torus(coarse.torus());
    let n = graph.n_sites();
    let targets = v_bar(coarse, v);
    (0..replicas)
        .into_par_iter()
        .map_init(
            || Explorer::new(n),
            |ex, r| {
                let mut real = UpdateRealization::sample(n, 0.0, replica_seed(seed, r as u64))?;
                let c = ex.coupling_time(&mut real, &graph, params, &targets, 0.0, t_max)?.coupled();
                Ok(c.map(|c| coarse.coarsen(&c.kupd).len()))
            },
        )
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct KupdTail {
    pub replicas: usize,
    pub censored: usize,
    pub tail: TailEstimate,
}

/// Tail of `|[KUPD(V-bar)]_L|` at thresholds `M`.
pub fn kupd_tail(
    params: &ModelParams,
    coarse: &CoarseLattice,
    v: &SiteSet,
    thresholds: &[usize],
    replicas: usize,
    seed: u64,
    t_max: f64,
) -> Result<KupdTail> {
    let sizes = kupd_coarse_sizes(params, coarse, v, replicas, seed, t_max)?;
    let kept: Vec<usize> = sizes.iter().flatten().copied().collect();
    Ok(KupdTail { replicas, censored: replicas - kept.len(), tail: TailEstimate::from_sizes(&kept, thresholds, coarse.half_block()) })
}

/// Outcome of one containment replica.
#[derive(Clone, Debug, Serialize)]
pub struct ContainmentSample {
    pub kupd_size: usize,
    pub coarse_size: usize,
    pub cluster_size: usize,
    pub projection_size: usize,
    /// `KUPD(V-bar)` inside the union of `B_{3L/2}(w)` over the projection.
    pub fine_inclusion: bool,
    /// `[KUPD(V-bar)]_L` inside the projected distance-1 neighbourhood.
    pub coarse_inclusion: bool,
    /// `|Proj| <= 5^d (|C_V| + |V|)`.
    pub cardinality_ok: bool,
    /// The cluster search hit the layer cap before deciding.
    pub truncated: bool,
    /// The search stopped once the projection covered the torus.
    pub stopped_early: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContainmentReport {
    pub replicas: usize,
    pub censored: usize,
    pub truncated: usize,
    pub stopped_early: usize,
    pub fine_violations: usize,
    pub coarse_violations: usize,
    pub cardinality_flags: usize,
    pub max_cluster: usize,
    pub tail: TailEstimate,
}

/// Lazily painted half-infinite box lattice on one realization.
struct LazyBoxes<'a> {
    coarse: &'a CoarseLattice,
    checker: BlockEventChecker<'a>,
    step: f64,
    cache: HashMap<(usize, usize), bool>,
}

impl<'a> LazyBoxes<'a> {
    fn open(&mut self, real: &mut UpdateRealization, c: usize, layer: usize) -> Result<bool> {
        if let Some(&o) = self.cache.get(&(c, layer)) {
            return Ok(o);
        }
        let t0 = layer as f64 * self.step;
        let l = self.coarse.half_block();
        real.ensure_window(self.checker.reach_depth(t0, l))?;
        let o = !self.checker.check(real, self.coarse.center(c), t0, l)?;
        self.cache.insert((c, layer), o);
        Ok(o)
    }
}

fn gamma_neighbours(coarse: &CoarseLattice, c: usize, k: usize) -> Vec<(usize, usize)> {
    let star = coarse.star_neighbours(c);
    let mut out: Vec<(usize, usize)> = star.iter().map(|&w| (w, k)).collect();
    let below = k.checked_sub(1);
    for layer in below.into_iter().chain(std::iter::once(k + 1)) {
        out.push((c, layer));
        out.extend(star.iter().map(|&w| (w, layer)));
    }
    out
}

/// One containment replica: KUPD of `V-bar` against the painted cluster of `V`.
fn containment_replica(
    real: &mut UpdateRealization,
    ex: &mut Explorer,
    graph: &SpinGraph,
    params: &ModelParams,
    coarse: &CoarseLattice,
    v: &SiteSet,
    max_layers: usize,
    t_max: f64,
) -> Result<Option<ContainmentSample>> {
    let targets = v_bar(coarse, v);
    let Some(c) = ex.coupling_time(real, graph, params, &targets, 0.0, t_max)?.coupled() else {
        return Ok(None);
    };
    let kupd = c.kupd;
    let k_coarse = coarse.coarsen(&kupd);
    let torus = coarse.torus();
    let l = coarse.half_block();
    let nc = coarse.n_coarse();
    let d = coarse.dim() as u32;
    let mut boxes = LazyBoxes {
        coarse,
        checker: BlockEventChecker::new(graph, torus, params),
        step: crate::lattice::epsilon(torus.dim()) * l as f64,
        cache: HashMap::new(),
    };
    let mut in_cluster: HashMap<(usize, usize), ()> = HashMap::new();
    let mut in_boundary: HashMap<(usize, usize), ()> = HashMap::new();
    let mut proj = SiteSet::new(nc);
    let mut queue = VecDeque::new();
    for c in v.iter() {
        if boxes.open(real, c, 0)? {
            in_cluster.insert((c, 0), ());
            queue.push_back((c, 0));
        } else {
            in_boundary.insert((c, 0), ());
        }
        proj.insert(c);
    }
    let bound = |cluster: usize| 5usize.pow(d) * (cluster + v.len());
    let (mut truncated, mut stopped_early) = (false, false);
    while let Some((c, k)) = queue.pop_front() {
        if proj.len() == nc && proj.len() <= bound(in_cluster.len()) {
            stopped_early = true;
            break;
        }
        for (w, layer) in gamma_neighbours(coarse, c, k) {
            if in_cluster.contains_key(&(w, layer)) || in_boundary.contains_key(&(w, layer)) {
                continue;
            }
            if layer >= max_layers {
                truncated = true;
                continue;
            }
            proj.insert(w);
            if boxes.open(real, w, layer)? {
                in_cluster.insert((w, layer), ());
                queue.push_back((w, layer));
            } else {
                in_boundary.insert((w, layer), ());
            }
        }
    }
    let mut cover = SiteSet::new(torus.n_sites());
    for w in proj.iter() {
        cover.union_with(&torus.ball(coarse.center(w), 3 * l / 2));
    }
    let neighbourhood = star_closure(coarse, &proj);
    Ok(Some(ContainmentSample {
        kupd_size: kupd.len(),
        coarse_size: k_coarse.len(),
        cluster_size: in_cluster.len(),
        projection_size: proj.len(),
        fine_inclusion: kupd.is_subset(&cover),
        coarse_inclusion: k_coarse.is_subset(&neighbourhood),
        cardinality_ok: proj.len() <= bound(in_cluster.len()),
        truncated: truncated && !stopped_early,
        stopped_early,
    }))
}

/// Checks `KUPD(V-bar) ⊆ union of B_{3L/2}(w)` over `Proj(C_V u dC_V)` and the
/// cardinality bound on independent replicas, and estimates the size tail.
#[allow(clippy::too_many_arguments)]
pub fn kupd_coarse_containment(
    params: &ModelParams,
    coarse: &CoarseLattice,
    v: &SiteSet,
    thresholds: &[usize],
    replicas: usize,
    seed: u64,
    max_layers: usize,
    t_max: f64,
) -> Result<ContainmentReport> {
    check_half_block(coarse)?;
    check_coarse_set(coarse, v)?;
    let graph = SpinGraph::torus(coarse.torus());
    let n = graph.n_sites();
    let samples: Vec<Option<ContainmentSample>> = (0..replicas)
        .into_par_iter()
        .map_init(
            || Explorer::new(n),
            |ex, r| {
                let mut real = UpdateRealization::sample(n, 0.0, replica_seed(seed, r as u64))?;
                containment_replica(&mut real, ex, &graph, params, coarse, v, max_layers, t_max)
            },
        )
        .collect::<Result<_>>()?;
    let done: Vec<&ContainmentSample> = samples.iter().flatten().collect();
    // a truncated search can only certify inclusion, never refute it
    let decided = |s: &&&ContainmentSample| !s.truncated;
    let sizes: Vec<usize> = done.iter().map(|s| s.coarse_size).collect();
    Ok(ContainmentReport {
        replicas,
        censored: replicas - done.len(),
        truncated: done.iter().filter(|s| s.truncated).count(),
        stopped_early: done.iter().filter(|s| s.stopped_early).count(),
        fine_violations: done.iter().filter(decided).filter(|s| !s.fine_inclusion).count(),
        coarse_violations: done.iter().filter(decided).filter(|s| !s.coarse_inclusion).count(),
        cardinality_flags: done.iter().filter(decided).filter(|s| !s.cardinality_ok).count(),
        max_cluster: done.iter().map(|s| s.cluster_size).max().unwrap_or(0),
        tail: TailEstimate::from_sizes(&sizes, thresholds, coarse.half_block()),
    })
}

/// Bad-box frequency in one conditioning class.
#[derive(Clone, Debug, Serialize)]
pub struct ConditioningClass {
    /// Shell size and number of open vertices at distance exactly 2.
    pub shell: usize,
    pub open_in_shell: usize,
    pub count: usize,
    pub bad: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DominationReport {
    pub replicas: usize,
    pub unconditional_bad: f64,
    pub unconditional_se: f64,
    /// Largest conditional bad frequency over classes with enough samples.
    pub p_hat: f64,
    pub classes: Vec<ConditioningClass>,
    /// Classes seen fewer than [`MIN_CLASS_COUNT`] times.
    pub sparse_classes: usize,
    pub thresholds: Vec<usize>,
    pub painted_tail: Vec<(f64, f64)>,
    pub bernoulli_tail: Vec<(f64, f64)>,
    pub pass: bool,
}

pub const MIN_CLASS_COUNT: usize = 50;

fn shell_at_two(adj: &[Vec<usize>], v: usize) -> Vec<usize> {
    let mut near: Vec<usize> = adj[v].clone();
    near.push(v);
    let mut shell: Vec<usize> = adj[v].iter().flat_map(|&w| adj[w].iter().copied()).filter(|u| !near.contains(u)).collect();
    shell.sort_unstable();
    shell.dedup();
    shell
}

/// Empirical domination parameter of the painted percolation and comparison of
/// the cluster tail of vertex `(0, 0)` with Bernoulli(`p_hat`).
pub fn domination_check(params: &ModelParams, gamma: &SpaceTimeGraph, replicas: usize, seed: u64) -> Result<DominationReport> {
    check_half_block(gamma.coarse())?;
    let n = gamma.n_vertices();
    let adj = gamma_adjacency(gamma);
    let shells: Vec<Vec<usize>> = (0..n).map(|v| shell_at_two(&adj, v)).collect();
    let configs: Vec<Vec<bool>> = (0..replicas)
        .into_par_iter()
        .map(|r| paint_boxes_seeded(replica_seed(seed, r as u64), params, gamma).map(|c| c.open))
        .collect::<Result<_>>()?;
    let mut table: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
    let mut bad_total = 0usize;
    for open in &configs {
        for v in 0..n {
            let k = shells[v].iter().filter(|&&u| open[u]).count();
            let e = table.entry((shells[v].len(), k)).or_default();
            e.0 += 1;
            e.1 += usize::from(open[v]);
            bad_total += usize::from(open[v]);
        }
    }
    let (unconditional_bad, unconditional_se) = proportion(bad_total, replicas * n);
    let mut classes: Vec<ConditioningClass> =
        table.into_iter().map(|((shell, open_in_shell), (count, bad))| ConditioningClass { shell, open_in_shell, count, bad }).collect();
    classes.sort_by_key(|c| (c.shell, c.open_in_shell));
    let p_hat = classes
        .iter()
        .filter(|c| c.count >= MIN_CLASS_COUNT)
        .map(|c| c.bad as f64 / c.count as f64)
        .fold(unconditional_bad, f64::max);
    let sparse_classes = classes.iter().filter(|c| c.count < MIN_CLASS_COUNT).count();
    let root = [gamma.vertex(0, 0)];
    let thresholds: Vec<usize> = (1..=n).collect();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    let sizes: Vec<usize> = configs.iter().map(|o| cluster_size(&adj, o, &root, &mut seen, &mut queue)).collect();
    let mut painted_tail = Vec::new();
    let mut bernoulli_tail = Vec::new();
    let mut pass = true;
    for &m in &thresholds {
        let pt = proportion(sizes.iter().filter(|&&s| s >= m).count(), replicas);
        let bt = bernoulli_cluster_tail(p_hat, &adj, &root, m, replicas, seed ^ 0x5eed)?;
        if pt.0 > bt.estimate + 3.0 * pt.1.hypot(bt.se) {
            pass = false;
        }
        painted_tail.push(pt);
        bernoulli_tail.push((bt.estimate, bt.se));
    }
    Ok(DominationReport {
        replicas,
        unconditional_bad,
        unconditional_se,
        p_hat,
        classes,
        sparse_classes,
        thresholds,
        painted_tail,
        bernoulli_tail,
        pass,
    })
}

/// Bad-box frequency of a single box over replicas.
pub fn bad_fraction(params: &ModelParams, torus: &TorusGeom, l: usize, replicas: usize, seed: u64) -> Result<(f64, f64)> {
    let coarse = CoarseLattice::new(torus, l)?;
    check_half_block(&coarse)?;
    let graph = SpinGraph::torus(torus);
    let gamma = SpaceTimeGraph::new(&coarse, 1)?;
    let depth = painting_depth(&gamma, 1);
    let w = coarse.center(0);
    let bad: usize = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let real = UpdateRealization::sample(torus.n_sites(), depth, replica_seed(seed, r as u64))?;
            let mut ch = BlockEventChecker::new(&graph, torus, params);
            Ok(usize::from(!ch.check(&real, w, 0.0, l)?))
        })
        .sum::<Result<usize>>()?;
    Ok(proportion(bad, replicas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::animals::hypercubic_window;

    fn bfs_cluster(omega: &PercolationConfig, seeds: &[usize]) -> SiteSet {
        let g = omega.gamma();
        let mut out = SiteSet::new(g.n_vertices());
        let mut stack: Vec<usize> = seeds.iter().copied().filter(|&z| omega.is_open(z)).collect();
        while let Some(v) = stack.pop() {
            if out.insert(v) {
                stack.extend(g.neighbours(v).into_iter().filter(|&w| omega.is_open(w)));
            }
        }
        out
    }

    fn small_gamma() -> SpaceTimeGraph {
        let t = TorusGeom::new(2, 6).unwrap();
        SpaceTimeGraph::new(&CoarseLattice::new(&t, 1).unwrap(), 3).unwrap()
    }

    #[test]
    fn convention_and_extremes() {
        let g = small_gamma();
        let n = g.n_vertices();
        let closed = PercolationConfig::new(&g, vec![false; n]).unwrap();
        let v = [g.vertex(1, 0), g.vertex(2, 0)];
        let c = clusters(&closed, &v).unwrap();
        assert!(c.cluster.is_empty());
        assert_eq!(c.boundary.to_vec(), vec![v[0], v[1]]);
        assert_eq!(c.projection.to_vec(), vec![1, 2]);
        let open = PercolationConfig::new(&g, vec![true; n]).unwrap();
        let c = clusters(&open, &v).unwrap();
        assert_eq!(c.cluster.len(), n);
        assert!(c.boundary.is_empty() && c.truncated);
    }

    #[test]
    fn union_find_matches_bfs() {
        let g = small_gamma();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let p = rng.gen::<f64>();
            let open: Vec<bool> = (0..g.n_vertices()).map(|_| rng.gen_bool(p)).collect();
            let omega = PercolationConfig::new(&g, open).unwrap();
            let seeds: Vec<usize> = (0..3).map(|_| rng.gen_range(0..g.n_vertices())).collect();
            assert_eq!(clusters(&omega, &seeds).unwrap().cluster, bfs_cluster(&omega, &seeds));
        }
    }

    #[test]
    fn animal_counts() {
        let (adj, o) = hypercubic_window(2, 4);
        let counts: Vec<u64> = (1..=4).map(|k| count_lattice_animals(&adj, o, k).unwrap()).collect();
        assert_eq!(counts, vec![1, 4, 18, 76]);
        assert!(count_lattice_animals(&adj, o, 13).is_err());
    }

    #[test]
    fn bernoulli_tail_extremes_and_exact() {
        let t = TorusGeom::new(1, 3).unwrap();
        let g = SpaceTimeGraph::new(&CoarseLattice::new(&t, 1).unwrap(), 5).unwrap();
        assert_eq!(g.n_vertices(), 10);
        let adj = gamma_adjacency(&g);
        assert_eq!(bernoulli_cluster_tail(0.0, &adj, &[0], 1, 100, 1).unwrap().estimate, 0.0);
        assert_eq!(bernoulli_cluster_tail(1.0, &adj, &[0], 10, 100, 1).unwrap().estimate, 1.0);
        let b = bernoulli_cluster_tail(0.3, &adj, &[0], 3, 20000, 2).unwrap();
        let exact = b.exact.unwrap();
        assert!((b.estimate - exact).abs() < 3.0 * b.se, "{b:?}");
    }

    #[test]
    fn painting_is_local() {
        let t = TorusGeom::new(1, 15).unwrap();
        let coarse = CoarseLattice::new(&t, 2).unwrap();
        let gamma = SpaceTimeGraph::new(&coarse, 3).unwrap();
        let p = ModelParams::new(0.3, 0.0).unwrap();
        let depth = painting_depth(&gamma, 3);
        let step = gamma.time_step();
        let graph = SpinGraph::torus(&t);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for trial in 0..1000u64 {
            let real = UpdateRealization::sample(t.n_sites(), depth, trial).unwrap();
            let (c, k) = (rng.gen_range(0..coarse.n_coarse()), rng.gen_range(0..3));
            let w = coarse.center(c);
            let t0 = k as f64 * step;
            let region = t.ball(w, 3 * 2);
            let mut events: Vec<(usize, f64, f64)> = Vec::new();
            for s in 0..t.n_sites() {
                for e in real.events(s) {
                    let inside = region.contains(s) && e.depth >= t0 - 1.5 * step && e.depth <= t0 + 1.5 * step;
                    if inside {
                        events.push((s, e.depth, e.mark));
                    }
                }
                if !region.contains(s) {
                    for _ in 0..rng.gen_range(0..4) {
                        events.push((s, rng.gen_range(0.0..depth), rng.gen()));
                    }
                }
            }
            let other = UpdateRealization::from_events(t.n_sites(), depth, &events).unwrap();
            let mut a = BlockEventChecker::new(&graph, &t, &p);
            let mut b = BlockEventChecker::new(&graph, &t, &p);
            assert_eq!(a.check(&real, w, t0, 2).unwrap(), b.check(&other, w, t0, 2).unwrap(), "trial {trial}");
        }
    }

    #[test]
    fn containment_holds() {
        let t = TorusGeom::new(1, 15).unwrap();
        let coarse = CoarseLattice::new(&t, 2).unwrap();
        let p = ModelParams::new(0.2, 0.0).unwrap();
        let v = SiteSet::from_iter(coarse.n_coarse(), [0]);
        let rep = kupd_coarse_containment(&p, &coarse, &v, &[1, 2, 3, 4], 200, 3, 1000, 1e3).unwrap();
        assert_eq!(rep.censored, 0);
        assert_eq!(rep.fine_violations + rep.coarse_violations, 0, "{rep:?}");
        assert!(rep.tail.survival[0] == 1.0);
    }

    #[test]
    fn window_too_short() {
        let g = small_gamma();
        let real = UpdateRealization::sample(g.coarse().torus().n_sites(), 0.01, 1).unwrap();
        assert!(matches!(paint_boxes(&real, &ModelParams::new(0.1, 0.0).unwrap(), &g), Err(Error::WindowTooShort { .. })));
    }
}

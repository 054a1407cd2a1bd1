//! Information percolation: backward exploration of the update sequence, support
//! emptiness, update sets, coupling times and the killed update set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::glauber::{HeatBath, ModelParams, UpdateRealization};
use crate::graph::SpinGraph;
use crate::lattice::{epsilon, TorusGeom};
use crate::sets::SiteSet;
use crate::stats::{proportion, replica_seed, t_quantile, weighted_line, jackknife_se};

/// An update met by the backward exploration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActiveUpdate {
    pub depth: f64,
    pub site: usize,
    pub mark: f64,
}

#[derive(PartialEq)]
struct Pending(f64, usize, f64);

impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // min-heap on (depth, site)
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Reusable scratch space for explorations on a fixed number of sites.
///
/// An exploration walks the update sequence backward from `start` to `limit`.
/// A site is active while its value at the current depth is still needed; the
/// first event of an active site is an active update, after which the site is
/// released and its neighbours become active and reached.
pub struct Explorer {
    stamp: u32,
    reach_stamp: Vec<u32>,
    reach_depth: Vec<f64>,
    active_stamp: Vec<u32>,
    reached: Vec<usize>,
    updates: Vec<ActiveUpdate>,
    heap: BinaryHeap<Pending>,
    chain_stamp: u32,
    value_stamp: Vec<u32>,
    top: Vec<i8>,
    bottom: Vec<i8>,
}

impl Explorer {
    pub fn new(n_sites: usize) -> Self {
        Explorer {
            stamp: 0,
            reach_stamp: vec![0; n_sites],
            reach_depth: vec![0.0; n_sites],
            active_stamp: vec![0; n_sites],
            reached: Vec::new(),
            updates: Vec::new(),
            heap: BinaryHeap::new(),
            chain_stamp: 0,
            value_stamp: vec![0; n_sites],
            top: vec![0; n_sites],
            bottom: vec![0; n_sites],
        }
    }

    fn bump(stamp: &mut u32, arrays: &mut [&mut Vec<u32>]) {
        if *stamp == u32::MAX {
            for a in arrays.iter_mut() {
                a.iter_mut().for_each(|x| *x = 0);
            }
            *stamp = 0;
        }
        *stamp += 1;
    }

    fn reach(&mut self, v: usize, depth: f64) -> bool {
        if self.reach_stamp[v] == self.stamp {
            return false;
        }
        self.reach_stamp[v] = self.stamp;
        self.reach_depth[v] = depth;
        self.reached.push(v);
        true
    }

    fn activate(&mut self, real: &UpdateRealization, v: usize, after: f64, strict: bool) {
        if self.active_stamp[v] == self.stamp {
            return;
        }
        self.active_stamp[v] = self.stamp;
        if let Some(e) = real.next_event(v, after, strict) {
            self.heap.push(Pending(e.depth, v, e.mark));
        }
    }

    /// Explores from `targets` observed at depth `start` down to depth `limit`.
    ///
    /// Returns the index of the first update that reached a site outside `region`,
    /// if any; exploration stops there.
    pub fn explore(
        &mut self,
        real: &UpdateRealization,
        graph: &SpinGraph,
        targets: &[usize],
        start: f64,
        limit: f64,
        region: Option<&SiteSet>,
    ) -> Option<usize> {
        Self::bump(&mut self.stamp, &mut [&mut self.reach_stamp, &mut self.active_stamp]);
        self.reached.clear();
        self.updates.clear();
        self.heap.clear();
        for &a in targets {
            self.reach(a, start);
            self.activate(real, a, start, false);
        }
        while let Some(Pending(depth, site, mark)) = self.heap.pop() {
            if depth > limit {
                break;
            }
            self.updates.push(ActiveUpdate { depth, site, mark });
            self.active_stamp[site] = 0;
            for &y in graph.neighbours(site) {
                if self.reach(y, depth) && region.is_some_and(|r| !r.contains(y)) {
                    self.heap.clear();
                    return Some(self.updates.len() - 1);
                }
                self.activate(real, y, depth, true);
            }
        }
        None
    }

    /// Active updates of the last exploration in increasing depth.
    pub fn updates(&self) -> &[ActiveUpdate] {
        &self.updates
    }

    /// Sites reached by the last exploration at depth `<= depth`.
    pub fn reached_by(&self, depth: f64, n_sites: usize) -> SiteSet {
        SiteSet::from_iter(n_sites, self.reached.iter().copied().filter(|&v| self.reach_depth[v] <= depth))
    }

    /// Runs the two extremal chains over the `k` shallowest active updates and
    /// reports whether they agree on `targets`.
    pub fn chains_agree(&mut self, graph: &SpinGraph, hb: &HeatBath, k: usize, targets: &[usize]) -> bool {
        let s = &mut self.chain_stamp;
        Self::bump(s, &mut [&mut self.value_stamp]);
        let stamp = self.chain_stamp;
        for u in self.updates[..k].iter().rev() {
            let (mut at, mut ab) = (graph.boundary_field(u.site), graph.boundary_field(u.site));
            for &j in graph.neighbours(u.site) {
                if self.value_stamp[j] == stamp {
                    at += self.top[j] as i32;
                    ab += self.bottom[j] as i32;
                } else {
                    at += 1;
                    ab -= 1;
                }
            }
            self.top[u.site] = hb.spin(at, u.mark);
            self.bottom[u.site] = hb.spin(ab, u.mark);
            self.value_stamp[u.site] = stamp;
        }
        targets.iter().all(|&a| self.value_stamp[a] == stamp && self.top[a] == self.bottom[a])
    }

    /// Top-chain values on `targets` after the last `chains_agree` call.
    pub fn chain_values(&self, targets: &[usize]) -> Vec<i8> {
        targets.iter().map(|&a| if self.value_stamp[a] == self.chain_stamp { self.top[a] } else { 1 }).collect()
    }

    /// Coupling time of `targets` observed at `t_obs`, searching up to `t_max`.
    pub fn coupling_time(
        &mut self,
        real: &mut UpdateRealization,
        graph: &SpinGraph,
        params: &ModelParams,
        targets: &[usize],
        t_obs: f64,
        t_max: f64,
    ) -> Result<Coupling> {
        if !(t_obs >= 0.0) || !(t_max >= t_obs) {
            return invalid(format!("need 0 <= t_obs <= t_max, got {t_obs}, {t_max}"));
        }
        let n = graph.n_sites();
        if targets.is_empty() {
            return Ok(Coupling::Coupled(CouplingResult {
                targets: Vec::new(),
                t_obs,
                tau: t_obs,
                window: t_obs,
                restriction: Vec::new(),
                kupd: SiteSet::new(n),
            }));
        }
        let hb = HeatBath::for_graph(params, graph);
        let mut span = 1.0;
        loop {
            let window = (t_obs + span).min(t_max);
            real.ensure_window(window)?;
            self.explore(real, graph, targets, t_obs, window, None);
            let total = self.updates.len();
            if total > 0 && self.chains_agree(graph, &hb, total, targets) {
                let (mut lo, mut hi) = (1, total);
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    if self.chains_agree(graph, &hb, mid, targets) {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                self.chains_agree(graph, &hb, lo, targets);
                let tau = self.updates[lo - 1].depth;
                return Ok(Coupling::Coupled(CouplingResult {
                    targets: targets.to_vec(),
                    t_obs,
                    tau,
                    window,
                    restriction: self.chain_values(targets),
                    kupd: self.reached_by(tau, n),
                }));
            }
            if window >= t_max {
                return Ok(Coupling::NotCoupled { t_obs, t_max });
            }
            span *= 2.0;
        }
    }
}

/// Outcome of a coupling search.
#[derive(Clone, Debug)]
pub struct CouplingResult {
    pub targets: Vec<usize>,
    pub t_obs: f64,
    /// First depth at which the extremal chains agree on the targets.
    pub tau: f64,
    /// Doubling window that certified the coupling.
    pub window: f64,
    /// Spins on the targets at depth `t_obs`, in target order.
    pub restriction: Vec<i8>,
    /// Update set at the coupling time.
    pub kupd: SiteSet,
}

#[derive(Clone, Debug)]
pub enum Coupling {
    Coupled(CouplingResult),
    NotCoupled { t_obs: f64, t_max: f64 },
}

impl Coupling {
    pub fn coupled(self) -> Option<CouplingResult> {
        match self {
            Coupling::Coupled(c) => Some(c),
            Coupling::NotCoupled { .. } => None,
        }
    }
}

/// True iff the chains started at depth `t` from all-plus and all-minus agree on
/// `a` at depth `t_obs`.
pub fn sup_empty(real: &UpdateRealization, graph: &SpinGraph, params: &ModelParams, t: f64, t_obs: f64, a: &[usize]) -> Result<bool> {
    real.check_window(t)?;
    if t < t_obs {
        return invalid("need t >= t_obs");
    }
    if a.is_empty() {
        return Ok(true);
    }
    let mut ex = Explorer::new(graph.n_sites());
    ex.explore(real, graph, a, t_obs, t, None);
    let k = ex.updates().len();
    Ok(ex.chains_agree(graph, &HeatBath::for_graph(params, graph), k, a))
}

/// Sites reached from `a` at depth `t_obs` by backward update paths down to depth `t`.
pub fn upd(real: &UpdateRealization, graph: &SpinGraph, t: f64, t_obs: f64, a: &[usize]) -> Result<SiteSet> {
    real.check_window(t)?;
    if t < t_obs {
        return invalid("need t >= t_obs");
    }
    let mut ex = Explorer::new(graph.n_sites());
    ex.explore(real, graph, a, t_obs, t, None);
    Ok(ex.reached_by(t, graph.n_sites()))
}

pub fn coupling_time(
    real: &mut UpdateRealization,
    graph: &SpinGraph,
    params: &ModelParams,
    a: &[usize],
    t_obs: f64,
    t_max: f64,
) -> Result<Coupling> {
    Explorer::new(graph.n_sites()).coupling_time(real, graph, params, a, t_obs, t_max)
}

/// Killed update set; `None` when the targets do not couple by `t_max`.
pub fn kupd(
    real: &mut UpdateRealization,
    graph: &SpinGraph,
    params: &ModelParams,
    a: &[usize],
    t_obs: f64,
    t_max: f64,
) -> Result<Option<SiteSet>> {
    Ok(coupling_time(real, graph, params, a, t_obs, t_max)?.coupled().map(|c| c.kupd))
}

/// Coupling times `tau_v(0) ` of one site over independent replicas; `None` if above `t_max`.
pub fn sample_coupling_times(
    graph: &SpinGraph,
    params: &ModelParams,
    site: usize,
    replicas: usize,
    seed: u64,
    t_max: f64,
) -> Result<Vec<Option<f64>>> {
    let n = graph.n_sites();
    (0..replicas)
        .into_par_iter()
        .map_init(
            || Explorer::new(n),
            |ex, r| {
                let mut real = UpdateRealization::sample(n, 0.0, replica_seed(seed, r as u64))?;
                Ok(ex.coupling_time(&mut real, graph, params, &[site], 0.0, t_max)?.coupled().map(|c| c.tau))
            },
        )
        .collect()
}

/// Estimated decay of `P(SUP(t + lag, t, v) != empty)` with an exponential fit.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub lags: Vec<f64>,
    pub n_replicas: usize,
    pub n_nonempty: Vec<usize>,
    pub p_hat: Vec<f64>,
    pub se: Vec<f64>,
    /// Decay rate per unit time; `+inf` when fewer than two lags are usable.
    pub rate: f64,
    pub rate_se: f64,
    pub rate_ci: (f64, f64),
    pub prefactor: f64,
    pub fit_lags: Vec<f64>,
}

const JACKKNIFE_GROUPS: usize = 20;

/// Fits `log p = log C - rate * lag` over lags with more than five nonempty replicas.
///
/// `survival[r]` is the largest lag for which replica `r` is still nonempty, as a
/// threshold: replica `r` is nonempty at lag `l` iff `l < survival[r]`.
pub fn fit_survival(lags: &[f64], survival: &[f64]) -> DecayFit {
    let n = survival.len();
    let count = |rs: &mut dyn Iterator<Item = &f64>, l: f64| rs.filter(|&&s| l < s).count();
    let n_nonempty: Vec<usize> = lags.iter().map(|&l| count(&mut survival.iter(), l)).collect();
    let (p_hat, se): (Vec<f64>, Vec<f64>) = n_nonempty.iter().map(|&k| proportion(k, n)).unzip();
    let usable: Vec<usize> = (0..lags.len()).filter(|&i| n_nonempty[i] > 5 && n_nonempty[i] < n).collect();
    let fit_lags: Vec<f64> = usable.iter().map(|&i| lags[i]).collect();
    let fit = |counts: &dyn Fn(usize) -> (f64, f64)| {
        let (mut x, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for &i in &usable {
            let (k, m) = counts(i);
            let p = (k.max(0.5)) / m;
            x.push(lags[i]);
            y.push(p.ln());
            w.push(m * p / (1.0 - p).max(1.0 / m));
        }
        weighted_line(&x, &y, &w)
    };
    let full = fit(&|i| (n_nonempty[i] as f64, n as f64));
    let mut out = DecayFit {
        lags: lags.to_vec(),
        n_replicas: n,
        n_nonempty: n_nonempty.clone(),
        p_hat,
        se,
        rate: f64::INFINITY,
        rate_se: f64::NAN,
        rate_ci: (f64::INFINITY, f64::INFINITY),
        prefactor: f64::NAN,
        fit_lags,
    };
    let Some(full) = full else { return out };
    let groups = JACKKNIFE_GROUPS.min(n);
    let mut loo = Vec::with_capacity(groups);
    for g in 0..groups {
        let range = g * n / groups..(g + 1) * n / groups;
        let held = &survival[range.clone()];
        let f = fit(&|i| {
            let k = n_nonempty[i] - count(&mut held.iter(), lags[i]);
            (k as f64, (n - range.len()) as f64)
        });
        if let Some(f) = f {
            loo.push(-f.slope);
        }
    }
    let rate_se = jackknife_se(&loo);
    let tq = t_quantile(loo.len() as f64 - 1.0, 0.95);
    out.rate = -full.slope;
    out.rate_se = rate_se;
    out.rate_ci = (out.rate - tq * rate_se, out.rate + tq * rate_se);
    out.prefactor = full.intercept.exp();
    out
}

/// Monte Carlo decay of the support of one site, from the coupling time of site 0.
///
/// `SUP(t + lag, t, v)` is nonempty iff `tau_v(t) - t > lag`, so one coupling
/// search per replica serves every lag.
pub fn estimate_sup_decay(graph: &SpinGraph, params: &ModelParams, lags: &[f64], replicas: usize, seed: u64) -> Result<DecayFit> {
    if lags.iter().any(|&l| !(l >= 0.0)) || lags.is_empty() {
        return invalid("lags must be nonnegative and nonempty");
    }
    let t_max = lags.iter().cloned().fold(0.0, f64::max) + 1e-9;
    let taus = sample_coupling_times(graph, params, 0, replicas, seed, t_max)?;
    let survival: Vec<f64> = taus.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect();
    Ok(fit_survival(lags, &survival))
}

/// Event `A_l(w, t0)`: every site of `B_l(w)`, observed at any depth in
/// `[t0, t0 + eps l]`, couples by depth `t0 + 1.5 eps l` with its killed update set
/// inside `B_{3l/2}(w)`.
pub struct BlockEventChecker<'a> {
    graph: &'a SpinGraph,
    torus: &'a TorusGeom,
    hb: HeatBath,
    explorer: Explorer,
    eps: f64,
}

impl<'a> BlockEventChecker<'a> {
    pub fn new(graph: &'a SpinGraph, torus: &'a TorusGeom, params: &ModelParams) -> Self {
        BlockEventChecker {
            graph,
            torus,
            hb: HeatBath::for_graph(params, graph),
            explorer: Explorer::new(graph.n_sites()),
            eps: epsilon(torus.dim()),
        }
    }

    /// Deepest depth the check at `t0` may touch.
    pub fn reach_depth(&self, t0: f64, l: usize) -> f64 {
        t0 + 1.5 * self.eps * l as f64
    }

    pub fn check(&mut self, real: &UpdateRealization, w: usize, t0: f64, l: usize) -> Result<bool> {
        let deadline = self.reach_depth(t0, l);
        real.check_window(deadline)?;
        let region = self.torus.ball(w, 3 * l / 2);
        let last_start = t0 + self.eps * l as f64;
        for v in self.torus.ball(w, l).iter() {
            let starts = std::iter::once(t0)
                .chain(real.events(v).iter().map(|e| e.depth).filter(|&d| d > t0 && d <= last_start));
            for s in starts {
                let exit = self.explorer.explore(real, self.graph, &[v], s, deadline, Some(&region));
                let k = exit.unwrap_or(self.explorer.updates().len());
                if !self.explorer.chains_agree(self.graph, &self.hb, k, &[v]) {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

pub fn check_block_event(
    real: &UpdateRealization,
    graph: &SpinGraph,
    torus: &TorusGeom,
    params: &ModelParams,
    w: usize,
    t0: f64,
    l: usize,
) -> Result<bool> {
    BlockEventChecker::new(graph, torus, params).check(real, w, t0, l)
}

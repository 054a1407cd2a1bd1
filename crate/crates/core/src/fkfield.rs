//! Random-cluster representation of the Ising model with a field, its boundary
//! vertex construction, and the magnetization and crossing experiments built on it.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::glauber::{ModelParams, UpdateRealization};
use crate::graph::SpinGraph;
use crate::infoperc::{Coupling, Explorer};
use crate::lattice::{BoundaryCondition, BoxGeom};
use crate::oracle;
use crate::stats::{mean_se, ordinary_line, replica_seed, t_quantile, LineFit};
use crate::union_find::UnionFind;

/// Finite multigraph without loops, optionally with a boundary vertex.
#[derive(Clone, Debug)]
pub struct FkGraph {
    n_vertices: usize,
    edges: Vec<(usize, usize)>,
    boundary: Option<usize>,
}

impl FkGraph {
    pub fn new(n_vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if edges.iter().any(|&(a, b)| a == b || a >= n_vertices || b >= n_vertices) {
            return invalid("edges must join two distinct vertices of the graph");
        }
        Ok(FkGraph { n_vertices, edges, boundary: None })
    }

    /// Box with free boundary: only the inner bonds.
    pub fn box_free(b: &BoxGeom) -> Self {
        FkGraph { n_vertices: b.n_sites(), edges: b.bonds(), boundary: None }
    }

    /// `Lambda_partial`: the box plus a vertex `partial` (index `n`) joined to every
    /// inner site once per bond leaving the box.
    pub fn box_with_boundary(b: &BoxGeom) -> Self {
        let n = b.n_sites();
        let mut edges = b.bonds();
        edges.extend(b.edge_boundary().into_iter().map(|(i, _)| (i, n)));
        FkGraph { n_vertices: n + 1, edges, boundary: Some(n) }
    }

    /// Loads `n` followed by one `a b` pair per line; `#` starts a comment.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut nums = text.lines().map(|l| l.split('#').next().unwrap_or("")).flat_map(str::split_whitespace).map(|t| {
            t.parse::<usize>().map_err(|e| Error::InvalidArgument(format!("bad edge-list token {t:?}: {e}")))
        });
        let n = nums.next().ok_or_else(|| Error::InvalidArgument("empty edge list".into()))??;
        let rest: Vec<usize> = nums.collect::<Result<_>>()?;
        if rest.len() % 2 != 0 {
            return invalid("edge list has an odd number of endpoints");
        }
        Self::new(n, rest.chunks(2).map(|c| (c[0], c[1])).collect())
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }
    pub fn boundary(&self) -> Option<usize> {
        self.boundary
    }

    pub fn spin_graph(&self) -> SpinGraph {
        SpinGraph::from_edges(self.n_vertices, &self.edges)
    }

    /// Component labels and sizes of the open subgraph.
    pub fn clusters(&self, omega: &[bool]) -> (Vec<usize>, Vec<usize>) {
        let mut uf = UnionFind::new(self.n_vertices);
        for (k, &(a, b)) in self.edges.iter().enumerate() {
            if omega[k] {
                uf.union(a, b);
            }
        }
        let labels = uf.labels();
        let mut sizes = vec![0; labels.iter().max().map_or(0, |m| m + 1)];
        labels.iter().for_each(|&l| sizes[l] += 1);
        (labels, sizes)
    }
}

/// Open edges, their clusters and optionally one colour per cluster.
#[derive(Clone, Debug)]
pub struct FkState {
    pub omega: Vec<bool>,
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
    pub colors: Option<Vec<i8>>,
}

impl FkState {
    pub fn new(g: &FkGraph, omega: Vec<bool>) -> Result<Self> {
        if omega.len() != g.edges.len() {
            return invalid("one state per edge required");
        }
        let (labels, sizes) = g.clusters(&omega);
        Ok(FkState { omega, labels, sizes, colors: None })
    }

    /// Colours every cluster `C` with `+1` w.p. `e^{h|C|} / (e^{h|C|} + e^{-h|C|})`.
    pub fn color<R: Rng>(&mut self, params: &ModelParams, rng: &mut R) {
        self.colors = Some(self.sizes.iter().map(|&s| if rng.gen::<f64>() < plus_color(params.h, s) { 1 } else { -1 }).collect());
    }

    pub fn spins(&self) -> Option<Vec<i8>> {
        self.colors.as_ref().map(|c| self.labels.iter().map(|&l| c[l]).collect())
    }

    pub fn cluster_of(&self, v: usize) -> usize {
        self.labels[v]
    }
}

fn plus_color(h: f64, size: usize) -> f64 {
    1.0 / (1.0 + (-2.0 * h * size as f64).exp())
}

/// `log(e^{a} + e^{-a})`.
fn log_2cosh(a: f64) -> f64 {
    a.abs() + (-2.0 * a.abs()).exp().ln_1p()
}

/// `log[(e^{2 beta} - 1)^{|omega|} prod_C (e^{h|C|} + e^{-h|C|})]`; `-inf` when `beta = 0`
/// and some edge is open.
pub fn fk_log_weight(g: &FkGraph, omega: &[bool], params: &ModelParams) -> Result<f64> {
    if omega.len() != g.edges.len() {
        return invalid("one state per edge required");
    }
    let open = omega.iter().filter(|&&o| o).count();
    let edge_part = if open == 0 { 0.0 } else { open as f64 * (2.0 * params.beta).exp_m1().ln() };
    let (_, sizes) = g.clusters(omega);
    Ok(edge_part + sizes.iter().map(|&s| log_2cosh(params.h * s as f64)).sum::<f64>())
}

pub fn fk_weight(g: &FkGraph, omega: &[bool], params: &ModelParams) -> Result<f64> {
    Ok(fk_log_weight(g, omega, params)?.exp())
}

/// Largest edge count for exhaustive enumeration.
pub const FK_EDGE_CAP: usize = 20;

/// Exact law of the open edges, indexed by bitmask (bit `k` set means edge `k` open).
#[derive(Clone, Debug)]
pub struct FkDistribution {
    pub graph: FkGraph,
    pub probs: Vec<f64>,
}

fn omega_of(bits: usize, m: usize) -> Vec<bool> {
    (0..m).map(|k| bits >> k & 1 == 1).collect()
}

pub fn enumerate_fk(g: &FkGraph, params: &ModelParams) -> Result<FkDistribution> {
    let m = g.edges.len();
    if m > FK_EDGE_CAP {
        return Err(Error::SizeCap { what: "edges", size: m, cap: FK_EDGE_CAP });
    }
    let logs: Vec<f64> = (0..1usize << m).map(|b| fk_log_weight(g, &omega_of(b, m), params)).collect::<Result<_>>()?;
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logs.iter().map(|&l| (l - top).exp()).collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(FkDistribution { graph: g.clone(), probs })
}

impl FkDistribution {
    pub fn expectation(&self, f: impl Fn(&[bool]) -> f64) -> f64 {
        let m = self.graph.edges.len();
        self.probs.iter().enumerate().map(|(b, &p)| if p == 0.0 { 0.0 } else { p * f(&omega_of(b, m)) }).sum()
    }

    /// Law of the coloured spins, indexed by bitmask (bit `i` set means `+1`).
    pub fn spin_marginal(&self, params: &ModelParams) -> Result<Vec<f64>> {
        let n = self.graph.n_vertices;
        if n > 20 {
            return Err(Error::SizeCap { what: "vertices", size: n, cap: 20 });
        }
        let m = self.graph.edges.len();
        let mut out = vec![0.0; 1 << n];
        for (b, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let (labels, sizes) = self.graph.clusters(&omega_of(b, m));
            let k = sizes.len();
            for colors in 0usize..1 << k {
                let mut q = p;
                for (c, &s) in sizes.iter().enumerate() {
                    let plus = plus_color(params.h, s);
                    q *= if colors >> c & 1 == 1 { plus } else { 1.0 - plus };
                }
                let idx = labels.iter().enumerate().fold(0usize, |acc, (i, &l)| acc | ((colors >> l & 1) << i));
                out[idx] += q;
            }
        }
        Ok(out)
    }

    /// `P(omega_e = 1 | omega off e)` for every edge and every configuration off `e`.
    pub fn conditional_open(&self) -> Vec<f64> {
        let m = self.graph.edges.len();
        let mut out = Vec::new();
        for e in 0..m {
            for b in (0usize..1 << m).filter(|b| b >> e & 1 == 0) {
                let (p0, p1) = (self.probs[b], self.probs[b | 1 << e]);
                if p0 + p1 > 0.0 {
                    out.push(p1 / (p0 + p1));
                }
            }
        }
        out
    }
}

/// Terms of `<sigma_0>^- = P(0 !<-> partial, sigma_0 = +) - P(0 !<-> partial, sigma_0 = -)
/// - P(0 <-> partial)`, all conditioned on `sigma_partial = -1`.
#[derive(Clone, Debug, Serialize)]
pub struct MinusDecomposition {
    pub disconnected_plus: f64,
    pub disconnected_minus: f64,
    pub connected: f64,
    /// `E[p]` with `p(omega) = (e^{2h|C_partial|} + 1)^{-1} = P(sigma_partial = -1 | omega)`.
    pub mean_p: f64,
    /// Same magnetization by conditioning the spin law directly.
    pub direct: f64,
}

impl MinusDecomposition {
    pub fn value(&self) -> f64 {
        self.disconnected_plus - self.disconnected_minus - self.connected
    }
}

/// Evaluates the decomposition on a graph with a boundary vertex by enumerating
/// `omega`, and the direct value by enumerating spins.
pub fn minus_decomposition(g: &FkGraph, origin: usize, params: &ModelParams) -> Result<MinusDecomposition> {
    let partial = g.boundary.ok_or_else(|| Error::InvalidArgument("graph has no boundary vertex".into()))?;
    if origin >= g.n_vertices || origin == partial {
        return invalid("origin must be an inner vertex");
    }
    let fk = enumerate_fk(g, params)?;
    let m = g.edges.len();
    let (mut dp, mut dm, mut conn, mut mean_p) = (0.0, 0.0, 0.0, 0.0);
    for (b, &q) in fk.probs.iter().enumerate() {
        if q == 0.0 {
            continue;
        }
        let (labels, sizes) = g.clusters(&omega_of(b, m));
        let p = 1.0 / ((2.0 * params.h * sizes[labels[partial]] as f64).exp() + 1.0);
        mean_p += q * p;
        if labels[origin] == labels[partial] {
            conn += q * p;
        } else {
            let plus = plus_color(params.h, sizes[labels[origin]]);
            dp += q * p * plus;
            dm += q * p * (1.0 - plus);
        }
    }
    let spins = oracle::exact_distribution(&g.spin_graph(), params)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (idx, &w) in spins.iter().enumerate() {
        if idx >> partial & 1 == 0 {
            den += w;
            num += w * if idx >> origin & 1 == 1 { 1.0 } else { -1.0 };
        }
    }
    Ok(MinusDecomposition {
        disconnected_plus: dp / mean_p,
        disconnected_minus: dm / mean_p,
        connected: conn / mean_p,
        mean_p,
        direct: num / den,
    })
}

/// Opens every edge with equal end spins independently w.p. `1 - e^{-2 beta}`.
pub fn edwards_sokal<R: Rng>(g: &FkGraph, spins: &[i8], params: &ModelParams, rng: &mut R) -> Result<FkState> {
    if spins.len() != g.n_vertices {
        return invalid("one spin per vertex required");
    }
    let p_open = -(-2.0 * params.beta).exp_m1();
    let omega = g.edges.iter().map(|&(a, b)| spins[a] == spins[b] && rng.gen::<f64>() < p_open).collect();
    let mut st = FkState::new(g, omega)?;
    let mut colors = vec![0i8; st.sizes.len()];
    for (v, &l) in st.labels.iter().enumerate() {
        colors[l] = spins[v];
    }
    st.colors = Some(colors);
    Ok(st)
}

pub fn edwards_sokal_sample(g: &FkGraph, spins: &[i8], params: &ModelParams, seed: u64) -> Result<FkState> {
    edwards_sokal(g, spins, params, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Exact sample of the Ising measure on `g` by coupling from the past.
pub fn perfect_spins(graph: &SpinGraph, params: &ModelParams, ex: &mut Explorer, seed: u64, t_max: f64) -> Result<Option<Vec<i8>>> {
    let n = graph.n_sites();
    let mut real = UpdateRealization::sample(n, 0.0, seed)?;
    let all: Vec<usize> = (0..n).collect();
    Ok(match ex.coupling_time(&mut real, graph, params, &all, 0.0, t_max)? {
        Coupling::Coupled(c) => Some(c.restriction),
        Coupling::NotCoupled { .. } => None,
    })
}

/// Sites allowed in [`magnetization_bc`] enumeration.
pub const MAGNETIZATION_ENUM_CAP: usize = 25;

/// Exact `<sigma_0>` in `Lambda_N = [-N, N]^d` with boundary condition `bc`.
///
/// Plus and minus fix the spin of the boundary vertex of `Lambda_partial`; free
/// deletes it. `d = 1` uses transfer messages for any `N`, larger `d` enumerates.
pub fn magnetization_bc(d: usize, n: usize, params: &ModelParams, bc: BoundaryCondition) -> Result<f64> {
    if d == 1 {
        return Ok(chain_magnetization(n, params, bc));
    }
    magnetization_enumerated(d, n, params, bc)
}

/// Enumeration over `Lambda_N` with the boundary vertex's spin fixed.
pub fn magnetization_enumerated(d: usize, n: usize, params: &ModelParams, bc: BoundaryCondition) -> Result<f64> {
    let b = BoxGeom::new(d, n)?;
    if b.n_sites() > MAGNETIZATION_ENUM_CAP {
        return Err(Error::SizeCap { what: "box sites", size: b.n_sites(), cap: MAGNETIZATION_ENUM_CAP });
    }
    let g = FkGraph::box_with_boundary(&b);
    let partial = g.boundary.expect("boundary vertex");
    let mut field = vec![0i32; b.n_sites()];
    if bc != BoundaryCondition::Free {
        for &(i, j) in &g.edges {
            if j == partial {
                field[i] += bc.spin();
            }
        }
    }
    let inner: Vec<(usize, usize)> = g.edges.iter().copied().filter(|&(_, j)| j != partial).collect();
    let sg = SpinGraph::from_edges(b.n_sites(), &inner).with_boundary(field);
    oracle::correlation(&sg, params, &[b.origin()])
}

/// `<sigma_0>` on the chain `-N..=N` by transfer messages from both ends.
pub fn chain_magnetization(n: usize, params: &ModelParams, bc: BoundaryCondition) -> f64 {
    let (beta, h) = (params.beta, params.h);
    let s = [-1.0f64, 1.0];
    // message[k]: weight of the outer part given the current site's spin s[k], normalised
    let mut msg = match bc {
        BoundaryCondition::Free => [1.0, 1.0],
        _ => {
            let b = bc.spin() as f64;
            [(beta * b * s[0]).exp(), (beta * b * s[1]).exp()]
        }
    };
    for _ in 0..n {
        let mut next = [0.0; 2];
        for (k, nk) in next.iter_mut().enumerate() {
            *nk = (0..2).map(|j| msg[j] * (h * s[j]).exp() * (beta * s[j] * s[k]).exp()).sum();
        }
        let z = next[0] + next[1];
        msg = [next[0] / z, next[1] / z];
    }
    let w: Vec<f64> = (0..2).map(|k| msg[k] * msg[k] * (h * s[k]).exp()).collect();
    (w[1] - w[0]) / (w[0] + w[1])
}

#[derive(Clone, Debug, Serialize)]
pub struct GapRow {
    pub n: usize,
    pub plus: f64,
    pub free: f64,
    pub minus: f64,
}

impl GapRow {
    pub fn plus_minus(&self) -> f64 {
        self.plus - self.minus
    }
    pub fn plus_free(&self) -> f64 {
        self.plus - self.free
    }
    pub fn free_minus(&self) -> f64 {
        self.free - self.minus
    }
}

/// Exponential fit `log gap = a - nu N`.
#[derive(Clone, Debug, Serialize)]
pub struct GapFit {
    pub nu: f64,
    pub nu_se: f64,
    pub nu_ci: (f64, f64),
    pub points: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RelaxTable {
    pub d: usize,
    pub params: ModelParams,
    pub rows: Vec<GapRow>,
    pub plus_minus: Option<GapFit>,
    pub plus_free: Option<GapFit>,
    pub free_minus: Option<GapFit>,
}

/// Gaps below this are treated as rounding noise and left out of fits.
pub const GAP_FLOOR: f64 = 1e-13;

fn fit_gap(rows: &[GapRow], gap: impl Fn(&GapRow) -> f64) -> Option<GapFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| gap(r) > GAP_FLOOR).map(|r| (r.n as f64, gap(r).ln())).unzip();
    let f: LineFit = ordinary_line(&x, &y)?;
    if !f.slope_se.is_finite() {
        return None;
    }
    let tq = t_quantile(f.n_points as f64 - 2.0, 0.95);
    let nu = -f.slope;
    Some(GapFit { nu, nu_se: f.slope_se, nu_ci: (nu - tq * f.slope_se, nu + tq * f.slope_se), points: f.n_points })
}

/// Exact `<sigma_0>` under the three boundary conditions over a grid of `N`, with
/// exponential fits of the gaps. Fails hard if the FKG ordering is violated.
pub fn relax_gap(d: usize, ns: &[usize], params: &ModelParams) -> Result<RelaxTable> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let row = GapRow {
            n,
            plus: magnetization_bc(d, n, params, BoundaryCondition::Plus)?,
            free: magnetization_bc(d, n, params, BoundaryCondition::Free)?,
            minus: magnetization_bc(d, n, params, BoundaryCondition::Minus)?,
        };
        let tol = 1e-12;
        if row.minus > row.free + tol || row.free > row.plus + tol || (params.h >= 0.0 && row.free < -tol) {
            return Err(Error::Invariant(format!("boundary-condition ordering violated at N = {n}: {row:?}")));
        }
        rows.push(row);
    }
    Ok(RelaxTable {
        d,
        params: *params,
        plus_minus: fit_gap(&rows, GapRow::plus_minus),
        plus_free: fit_gap(&rows, GapRow::plus_free),
        free_minus: fit_gap(&rows, GapRow::free_minus),
        rows,
    })
}

/// Crossing estimates from exact samples on `Lambda_partial`.
#[derive(Clone, Debug, Serialize)]
pub struct CrossingEstimate {
    pub n: usize,
    pub k: usize,
    pub replicas: usize,
    pub censored: usize,
    /// Samples with `sigma_partial = -1`.
    pub accepted: usize,
    pub rejection: f64,
    pub rejection_se: f64,
    pub reweighted: f64,
    pub reweighted_se: f64,
    /// Fewer than [`MIN_ACCEPTED`] samples had `sigma_partial = -1`; the rejection
    /// estimate is then `NaN`.
    pub rejection_collapsed: bool,
    /// Whether the two estimators agree within 3 combined standard errors (vacuous
    /// after a collapse).
    pub agree: bool,
    /// Mean number of edge-disjoint open paths from `partial` to the inner box.
    pub mean_disjoint_paths: f64,
}

/// Fewest accepted samples for a usable rejection estimate.
pub const MIN_ACCEPTED: usize = 30;

/// `P(partial <-> Lambda_{N/K} | sigma_partial = -1)` in `d` dimensions.
pub fn crossing_prob(d: usize, n: usize, k: usize, params: &ModelParams, replicas: usize, seed: u64, t_max: f64) -> Result<CrossingEstimate> {
    if k == 0 || n % k != 0 {
        return invalid("K must divide N");
    }
    if replicas < 2 {
        return invalid("need at least 2 replicas");
    }
    let b = BoxGeom::new(d, n)?;
    let g = FkGraph::box_with_boundary(&b);
    let partial = g.boundary.expect("boundary vertex");
    let inner: Vec<bool> = (0..b.n_sites()).map(|i| b.coords(i).iter().all(|&x| x.unsigned_abs() as usize <= n / k)).collect();
    let sg = g.spin_graph();
    let nv = g.n_vertices;
    // per replica: (sigma_partial, crossing, |C_partial|, disjoint paths)
    let out: Vec<Option<(i8, bool, usize, usize)>> = (0..replicas)
        .into_par_iter()
        .map_init(
            || Explorer::new(nv),
            |ex, r| {
                let s = replica_seed(seed, r as u64);
                let Some(spins) = perfect_spins(&sg, params, ex, s, t_max)? else { return Ok(None) };
                let st = edwards_sokal_sample(&g, &spins, params, s ^ 0xe5)?;
                let lp = st.labels[partial];
                let crossing = (0..b.n_sites()).any(|i| inner[i] && st.labels[i] == lp);
                let paths = if crossing { disjoint_paths(&g, &st.omega, partial, &inner) } else { 0 };
                Ok(Some((spins[partial], crossing, st.sizes[lp], paths)))
            },
        )
        .collect::<Result<_>>()?;
    let done: Vec<(i8, bool, usize, usize)> = out.iter().flatten().copied().collect();
    let accepted: Vec<f64> = done.iter().filter(|x| x.0 < 0).map(|x| f64::from(u8::from(x.1))).collect();
    if done.len() < 2 {
        return Err(Error::Invariant(format!("only {} of {replicas} samples coupled before t_max", done.len())));
    }
    let rejection_collapsed = accepted.len() < MIN_ACCEPTED;
    let (rejection, rejection_se) = if rejection_collapsed { (f64::NAN, f64::NAN) } else { mean_se(&accepted) };
    // ratio estimator E[p 1_A] / E[p] with p = (e^{2h|C_partial|} + 1)^{-1}
    let p: Vec<f64> = done.iter().map(|x| 1.0 / ((2.0 * params.h * x.2 as f64).exp() + 1.0)).collect();
    let a: Vec<f64> = done.iter().zip(&p).map(|(x, &q)| if x.1 { q } else { 0.0 }).collect();
    let (ma, _) = mean_se(&a);
    let (mp, _) = mean_se(&p);
    let reweighted = ma / mp;
    let lin: Vec<f64> = a.iter().zip(&p).map(|(&ai, &pi)| (ai - reweighted * pi) / mp).collect();
    let (_, reweighted_se) = mean_se(&lin);
    let agree = rejection_collapsed || (rejection - reweighted).abs() <= 3.0 * rejection_se.hypot(reweighted_se) + 1e-12;
    let crossings: Vec<&(i8, bool, usize, usize)> = done.iter().filter(|x| x.1).collect();
    let mean_disjoint_paths =
        if crossings.is_empty() { 0.0 } else { crossings.iter().map(|x| x.3 as f64).sum::<f64>() / crossings.len() as f64 };
    Ok(CrossingEstimate {
        n,
        k,
        replicas,
        censored: replicas - done.len(),
        accepted: accepted.len(),
        rejection,
        rejection_se,
        rejection_collapsed,
        reweighted,
        reweighted_se,
        agree,
        mean_disjoint_paths,
    })
}

/// Maximum number of edge-disjoint open paths from `source` to the `target` sites
/// (unit capacities, augmenting paths).
pub fn disjoint_paths(g: &FkGraph, omega: &[bool], source: usize, target: &[bool]) -> usize {
    let n = g.n_vertices;
    let sink = n;
    // arcs in both directions for undirected open edges, plus target -> sink
    let mut head = Vec::new();
    let mut cap = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    let mut add = |a: usize, b: usize, c: i32, head: &mut Vec<usize>, cap: &mut Vec<i32>| {
        adj[a].push(head.len());
        head.push(b);
        cap.push(c);
        adj[b].push(head.len());
        head.push(a);
        cap.push(0);
    };
    for (k, &(a, b)) in g.edges.iter().enumerate() {
        if omega[k] {
            add(a, b, 1, &mut head, &mut cap);
            add(b, a, 1, &mut head, &mut cap);
        }
    }
    for (v, &t) in target.iter().enumerate() {
        if t && v != source {
            add(v, sink, i32::MAX / 2, &mut head, &mut cap);
        }
    }
    let mut flow = 0;
    loop {
        let mut prev = vec![usize::MAX; n + 1];
        let mut seen = vec![false; n + 1];
        seen[source] = true;
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            for &arc in &adj[v] {
                let w = head[arc];
                if cap[arc] > 0 && !seen[w] {
                    seen[w] = true;
                    prev[w] = arc;
                    queue.push_back(w);
                }
            }
        }
        if !seen[sink] {
            return flow;
        }
        let mut v = sink;
        while v != source {
            let arc = prev[v];
            cap[arc] -= 1;
            cap[arc ^ 1] += 1;
            v = head[arc ^ 1];
        }
        flow += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(beta: f64, h: f64) -> ModelParams {
        ModelParams::new(beta, h).unwrap()
    }

    #[test]
    fn weight_formulas() {
        let iso = FkGraph::new(3, vec![]).unwrap();
        assert!((fk_weight(&iso, &[], &p(0.4, 0.0)).unwrap() - 8.0).abs() < 1e-12);
        let e = FkGraph::new(2, vec![(0, 1)]).unwrap();
        let (b, h) = (0.3f64, 0.2f64);
        let want = ((2.0 * b).exp() - 1.0) * ((2.0 * h).exp() + (-2.0 * h).exp());
        assert!((fk_weight(&e, &[true], &p(b, h)).unwrap() - want).abs() < 1e-12);
        assert_eq!(fk_weight(&e, &[true], &p(0.0, h)).unwrap(), 0.0);
    }

    #[test]
    fn triangle_and_grid_coloring() {
        for (g, n) in [(FkGraph::new(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap(), 3), (FkGraph::box_free(&BoxGeom::new(2, 1).unwrap()), 9)] {
            for pr in [p(0.4, 0.0), p(0.3, 0.25), p(0.8, -0.1)] {
                let fk = enumerate_fk(&g, &pr).unwrap();
                let spins = fk.spin_marginal(&pr).unwrap();
                let want = oracle::exact_distribution(&g.spin_graph(), &pr).unwrap();
                assert_eq!(spins.len(), 1 << n);
                for (a, b) in spins.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn single_vertex_coloring() {
        let g = FkGraph::new(1, vec![]).unwrap();
        let fk = enumerate_fk(&g, &p(0.5, 0.3)).unwrap();
        let s = fk.spin_marginal(&p(0.5, 0.3)).unwrap();
        assert!((s[1] - 0.3f64.exp() / (2.0 * 0.3f64.cosh())).abs() < 1e-15);
    }

    #[test]
    fn es_never_opens_unequal_edges() {
        let g = FkGraph::box_free(&BoxGeom::new(2, 2).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let s: Vec<i8> = (0..25).map(|_| if rng.gen() { 1 } else { -1 }).collect();
            let st = edwards_sokal(&g, &s, &p(0.7, 0.1), &mut rng).unwrap();
            for (k, &(a, b)) in g.edges().iter().enumerate() {
                assert!(!st.omega[k] || s[a] == s[b]);
            }
            assert_eq!(st.spins().unwrap(), s);
        }
        let st = edwards_sokal(&g, &[1; 25], &p(0.0, 0.1), &mut rng).unwrap();
        assert!(st.omega.iter().all(|&o| !o));
    }

    #[test]
    fn magnetization_methods_agree() {
        let pr = p(0.5, 0.3);
        for bc in [BoundaryCondition::Plus, BoundaryCondition::Minus, BoundaryCondition::Free] {
            for n in 0..=3 {
                let a = chain_magnetization(n, &pr, bc);
                let b = magnetization_enumerated(1, n, &pr, bc).unwrap();
                assert!((a - b).abs() < 1e-12, "{bc:?} {n}: {a} {b}");
            }
        }
        assert!((magnetization_bc(1, 0, &pr, BoundaryCondition::Free).unwrap() - 0.3f64.tanh()).abs() < 1e-15);
        let z = p(0.4, 0.0);
        let plus = magnetization_bc(2, 1, &z, BoundaryCondition::Plus).unwrap();
        let minus = magnetization_bc(2, 1, &z, BoundaryCondition::Minus).unwrap();
        assert!((plus + minus).abs() < 1e-13 && plus > 0.0);
    }

    #[test]
    fn relax_gap_one_dimension() {
        let ns: Vec<usize> = (1..=30).collect();
        let t = relax_gap(1, &ns, &p(0.5, 0.2)).unwrap();
        let f = t.plus_minus.unwrap();
        assert!(f.nu > 0.0 && f.nu_ci.0 > 0.0, "{f:?}");
    }

    #[test]
    fn minus_decomposition_matches_direct() {
        for n in 1..=4 {
            let g = FkGraph::box_with_boundary(&BoxGeom::new(1, n).unwrap());
            let b = BoxGeom::new(1, n).unwrap();
            for pr in [p(0.5, 0.2), p(0.8, 0.05)] {
                let dec = minus_decomposition(&g, b.origin(), &pr).unwrap();
                assert!((dec.value() - dec.direct).abs() < 1e-12);
                let via_bc = magnetization_bc(1, n, &pr, BoundaryCondition::Minus).unwrap();
                assert!((dec.direct - via_bc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn disjoint_paths_on_a_ladder() {
        // partial = 0 joined to 1 and 2, both joined to target 3
        let g = FkGraph::new(4, vec![(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        let target = [false, false, false, true];
        assert_eq!(disjoint_paths(&g, &[true; 4], 0, &target), 2);
        assert_eq!(disjoint_paths(&g, &[true, false, true, true], 0, &target), 1);
        assert_eq!(disjoint_paths(&g, &[false; 4], 0, &target), 0);
    }

    #[test]
    fn edge_list_parsing() {
        let g = FkGraph::from_edge_list("3 # triangle\n0 1\n1 2\n2 0\n").unwrap();
        assert_eq!(g.edges().len(), 3);
        assert!(FkGraph::from_edge_list("2\n0 0").is_err());
        assert!(FkGraph::from_edge_list("2\n0").is_err());
    }
}

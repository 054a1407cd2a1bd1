//! Abstract polymer models: Ursell functions, the convergence criterion, exact
//! partition functions and truncated cluster expansions.

mod encoding;
mod perturb;

pub use encoding::{verify_polymer_identity, DependencyEncoding, EncodingAtom, LocalFunction};
pub use perturb::{
    correlation_perturbation, estimate_weight, pressure_perturbation, BlockEnergyDecomposition, BlockSample, BlockSampler,
    CorrelationEstimate, PressureEstimate, WeightEstimate, DEFAULT_T_MAX, MAX_POLYMERS, WEIGHT_SET_CAP,
};

use std::collections::HashMap;

use num_complex::Complex64;
use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::animals::for_each_connected_set;
use crate::error::{invalid, Error, Result};

/// Finite polymer gas with pair compatibilities `delta` in `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct PolymerModel {
    weights: Vec<Complex64>,
    delta: Vec<Vec<f64>>,
    sizes: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    polymers: Vec<Vec<usize>>,
    weights: Vec<(f64, f64)>,
    #[serde(default)]
    sizes: Option<Vec<f64>>,
}

impl PolymerModel {
    pub fn new(weights: Vec<Complex64>, delta: Vec<Vec<f64>>, sizes: Vec<f64>) -> Result<Self> {
        let n = weights.len();
        if delta.len() != n || delta.iter().any(|r| r.len() != n) || sizes.len() != n {
            return invalid("weights, delta and sizes must have matching dimensions");
        }
        for i in 0..n {
            if !weights[i].re.is_finite() || !weights[i].im.is_finite() {
                return invalid(format!("weight {i} is not finite"));
            }
            for j in 0..n {
                let d = delta[i][j];
                if !(-1.0..=1.0).contains(&d) || d != delta[j][i] {
                    return invalid(format!("delta[{i}][{j}] must be symmetric and in [-1, 1]"));
                }
            }
        }
        let adj = (0..n).map(|i| (0..n).filter(|&j| j != i && delta[i][j] != 1.0).collect()).collect();
        Ok(PolymerModel { weights, delta, sizes, adj })
    }

    /// Hard-core gas: polymers are finite sets, compatible iff disjoint.
    pub fn hard_core(supports: &[Vec<usize>], weights: Vec<Complex64>) -> Result<Self> {
        let n = supports.len();
        let delta = (0..n)
            .map(|i| (0..n).map(|j| if supports[i].iter().any(|x| supports[j].contains(x)) { 0.0 } else { 1.0 }).collect())
            .collect();
        let sizes = supports.iter().map(|s| s.len() as f64).collect();
        Self::new(weights, delta, sizes)
    }

    /// Loads `{"polymers": [[..], ..], "weights": [[re, im], ..], "sizes": [..]?}`.
    pub fn from_json(s: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(s)?;
        if f.weights.len() != f.polymers.len() {
            return invalid("one weight per polymer required");
        }
        let mut m = Self::hard_core(&f.polymers, f.weights.iter().map(|&(a, b)| Complex64::new(a, b)).collect())?;
        if let Some(sz) = f.sizes {
            if sz.len() != m.len() {
                return invalid("one size per polymer required");
            }
            m.sizes = sz;
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn weight(&self, i: usize) -> Complex64 {
        self.weights[i]
    }
    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }
    pub fn delta(&self, i: usize, j: usize) -> f64 {
        self.delta[i][j]
    }
    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    /// Same compatibilities with new weights.
    pub fn with_weights(&self, weights: Vec<Complex64>) -> Self {
        assert_eq!(weights.len(), self.len());
        PolymerModel { weights, ..self.clone() }
    }

    /// Polymers `j != i` with `delta(i, j) != 1`.
    pub fn incompatible(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }
}

/// Largest collection the Ursell function accepts.
pub const URSELL_CAP: usize = 10;

/// Sum over connected spanning subgraphs of `K_n` of `prod (delta - 1)`, divided by `n!`.
///
/// Generic over exact rationals and floats. Uses the recursion over the
/// component containing the first vertex instead of listing graphs.
pub fn ursell<T: Num + Clone + FromPrimitive>(delta: &[Vec<T>]) -> Result<T> {
    let n = delta.len();
    if n == 0 || n > URSELL_CAP {
        return Err(Error::SizeCap { what: "Ursell collection", size: n, cap: URSELL_CAP });
    }
    let conn = connected_sums(delta);
    let fact = (1..=n).fold(T::one(), |acc, k| acc * T::from_usize(k).expect("factorial fits"));
    Ok(conn[(1 << n) - 1].clone() / fact)
}

/// `C(S)` for every subset `S`: signed count of connected graphs on `S`.
fn connected_sums<T: Num + Clone>(delta: &[Vec<T>]) -> Vec<T> {
    let n = delta.len();
    let full = 1usize << n;
    // F(S) = prod over pairs in S of delta
    let mut f = vec![T::one(); full];
    for s in 1..full {
        let top = usize::BITS as usize - 1 - s.leading_zeros() as usize;
        let rest = s & !(1 << top);
        let mut v = f[rest].clone();
        for j in 0..top {
            if rest >> j & 1 == 1 {
                v = v * delta[top][j].clone();
            }
        }
        f[s] = v;
    }
    let mut c = vec![T::zero(); full];
    for s in 1..full {
        let low = s & s.wrapping_neg();
        let others = s & !low;
        let mut acc = f[s].clone();
        // proper subsets T of s containing the lowest element
        let mut sub = others;
        loop {
            let t = sub | low;
            if t != s {
                acc = acc - c[t].clone() * f[s & !t].clone();
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & others;
        }
        c[s] = acc;
    }
    c
}

/// Largest polymer set `polymer_z_exact` accepts.
pub const EXACT_Z_CAP: usize = 22;

/// `Z = sum over subsets H of prod_{g in H} w(g) prod_{pairs in H} delta`.
pub fn polymer_z_exact(model: &PolymerModel) -> Result<Complex64> {
    let n = model.len();
    if n > EXACT_Z_CAP {
        return Err(Error::SizeCap { what: "polymers for exact Z", size: n, cap: EXACT_Z_CAP });
    }
    fn rec(m: &PolymerModel, start: usize, chosen: &mut Vec<usize>, prod: Complex64) -> Complex64 {
        let mut total = Complex64::new(0.0, 0.0);
        for j in start..m.len() {
            let pair: f64 = chosen.iter().map(|&k| m.delta(j, k)).product();
            if pair == 0.0 {
                continue;
            }
            let p = prod * m.weight(j) * pair;
            chosen.push(j);
            total += p + rec(m, j + 1, chosen, p);
            chosen.pop();
        }
        total
    }
    Ok(Complex64::new(1.0, 0.0) + rec(model, 0, &mut Vec::new(), Complex64::new(1.0, 0.0)))
}

#[derive(Clone, Debug, Serialize)]
pub struct KpReport {
    pub pass: bool,
    /// `g(g') - sum_g e^{g(g)} |w(g)| |delta(g, g') - 1|` per polymer.
    pub margins: Vec<f64>,
    pub min_slack: f64,
    pub total_mass: f64,
}

/// Checks the sufficient condition for convergence of the cluster expansion.
pub fn kp_check(model: &PolymerModel, g: &[f64]) -> Result<KpReport> {
    if g.len() != model.len() || g.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return invalid("g must be strictly positive, one value per polymer");
    }
    let n = model.len();
    let mass: Vec<f64> = (0..n).map(|i| g[i].exp() * model.weight(i).norm()).collect();
    let margins: Vec<f64> =
        (0..n).map(|j| g[j] - (0..n).map(|i| mass[i] * (model.delta(i, j) - 1.0).abs()).sum::<f64>()).collect();
    let total_mass: f64 = mass.iter().sum();
    let min_slack = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(KpReport { pass: margins.iter().all(|&m| m >= 0.0) && total_mass.is_finite(), margins, min_slack, total_mass })
}

/// A cluster: a connected multiset of polymers, given as `(polymer, multiplicity)`
/// with increasing polymer index.
pub type Cluster<'a> = &'a [(usize, u32)];

/// Default cap on visited clusters.
pub const CLUSTER_CAP: usize = 20_000_000;

/// Visits every cluster of total multiplicity at most `max_order` with its
/// coefficient `(sum over connected graphs of prod(delta - 1)) / prod m!`.
///
/// The cluster's contribution to `log Z` is `coefficient * prod w^m`.
pub fn for_each_cluster(
    model: &PolymerModel,
    max_order: usize,
    cap: usize,
    mut visit: impl FnMut(Cluster<'_>, f64),
) -> Result<usize> {
    let n = model.len();
    let mut memo: HashMap<(Vec<u64>, Vec<u32>), f64> = HashMap::new();
    let mut visited = 0usize;
    let mut overflow = false;
    let adj: Vec<Vec<usize>> = (0..n).map(|i| model.incompatible(i).to_vec()).collect();
    for root in 0..n {
        for_each_connected_set(&adj, root, max_order, |u| u > root, |support| {
            if overflow {
                return false;
            }
            let mut sorted = support.to_vec();
            sorted.sort_unstable();
            let s = sorted.len();
            let dsub: Vec<Vec<f64>> = sorted.iter().map(|&i| sorted.iter().map(|&j| model.delta(i, j)).collect()).collect();
            let key_delta: Vec<u64> = dsub.iter().flatten().map(|x| x.to_bits()).collect();
            let mut mult = vec![1u32; s];
            loop {
                let total: u32 = mult.iter().sum();
                if total as usize <= max_order && is_connected_multiset(&dsub, &mult) {
                    let key = (key_delta.clone(), mult.clone());
                    let coef = match memo.get(&key) {
                        Some(&c) => c,
                        None => {
                            let c = multiset_connected(&dsub, &mult) / mult.iter().map(|&m| factorial(m)).product::<f64>();
                            memo.insert(key, c);
                            c
                        }
                    };
                    let cluster: Vec<(usize, u32)> = sorted.iter().copied().zip(mult.iter().copied()).collect();
                    visited += 1;
                    if visited > cap {
                        overflow = true;
                        return false;
                    }
                    if coef != 0.0 {
                        visit(&cluster, coef);
                    }
                }
                // next multiplicity vector with total <= max_order
                let mut k = 0;
                loop {
                    if k == s {
                        return true;
                    }
                    mult[k] += 1;
                    if mult.iter().sum::<u32>() as usize <= max_order {
                        break;
                    }
                    mult[k] = 1;
                    k += 1;
                }
            }
        });
        if overflow {
            return Err(Error::SizeCap { what: "clusters", size: visited, cap });
        }
    }
    Ok(visited)
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(|k| k as f64).product()
}

fn is_connected_multiset(d: &[Vec<f64>], mult: &[u32]) -> bool {
    d.len() > 1 || mult[0] == 1 || d[0][0] != 1.0
}

/// Signed sum over connected graphs on the labelled multiset with the given type
/// counts, each edge weighted `delta - 1`.
fn multiset_connected(d: &[Vec<f64>], mult: &[u32]) -> f64 {
    let mut memo: HashMap<Vec<u32>, f64> = HashMap::new();
    multiset_c(d, mult, &mut memo)
}

fn all_graphs(d: &[Vec<f64>], m: &[u32]) -> f64 {
    let mut f = 1.0;
    for a in 0..m.len() {
        let ma = m[a] as i32;
        f *= d[a][a].powi(ma * (ma - 1) / 2);
        for b in a + 1..m.len() {
            f *= d[a][b].powi(ma * m[b] as i32);
        }
    }
    f
}

fn binom(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn multiset_c(d: &[Vec<f64>], m: &[u32], memo: &mut HashMap<Vec<u32>, f64>) -> f64 {
    let total: u32 = m.iter().sum();
    if total <= 1 {
        return total as f64;
    }
    if let Some(&c) = memo.get(m) {
        return c;
    }
    let first = m.iter().position(|&x| x > 0).expect("nonempty multiset");
    let mut acc = all_graphs(d, m);
    let mut t = vec![0u32; m.len()];
    t[first] = 1;
    loop {
        if t != m {
            let count = binom(m[first] - 1, t[first] - 1)
                * (0..m.len()).filter(|&g| g != first).map(|g| binom(m[g], t[g])).product::<f64>();
            let rest: Vec<u32> = m.iter().zip(&t).map(|(a, b)| a - b).collect();
            acc -= count * multiset_c(d, &t, memo) * all_graphs(d, &rest);
        }
        // odometer over t with t[first] in 1..=m[first], others 0..=m
        let mut k = 0;
        loop {
            if k == m.len() {
                memo.insert(m.to_vec(), acc);
                return acc;
            }
            let lo = if k == first { 1 } else { 0 };
            if t[k] < m[k] {
                t[k] += 1;
                break;
            }
            t[k] = lo;
            k += 1;
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LogZReport {
    pub value: Complex64,
    /// Contribution of clusters of each total multiplicity `1..=max_order`.
    pub per_order: Vec<Complex64>,
    pub last_order_magnitude: f64,
    /// Whether `kp_check` with `g = size` passed.
    pub certified: bool,
    pub clusters: usize,
}

/// Cluster expansion of `log Z` truncated at total multiplicity `max_order`.
pub fn log_z_truncated(model: &PolymerModel, max_order: usize) -> Result<LogZReport> {
    let mut per_order = vec![Complex64::new(0.0, 0.0); max_order + 1];
    let clusters = for_each_cluster(model, max_order, CLUSTER_CAP, |c, coef| {
        let order: u32 = c.iter().map(|&(_, m)| m).sum();
        let prod: Complex64 = c.iter().map(|&(g, m)| model.weight(g).powu(m)).product();
        per_order[order as usize] += prod * coef;
    })?;
    let per_order = per_order[1..].to_vec();
    let value = per_order.iter().sum();
    let certified = model.sizes().iter().all(|&s| s > 0.0) && kp_check(model, model.sizes())?.pass;
    Ok(LogZReport { value, last_order_magnitude: per_order.last().map_or(0.0, |c| c.norm()), per_order, certified, clusters })
}

/// All intervals of length `1..=max_len` inside `{0, .., n - 1}`.
pub fn intervals(n: usize, max_len: usize) -> Vec<Vec<usize>> {
    (1..=max_len.min(n)).flat_map(|len| (0..=n - len).map(move |a| (a..a + len).collect())).collect()
}

/// Hard-core gas of intervals with weight `lambda^{|C|}`.
pub fn interval_model(n: usize, max_len: usize, lambda: f64) -> Result<PolymerModel> {
    let iv = intervals(n, max_len);
    let w = iv.iter().map(|c| Complex64::new(lambda.powi(c.len() as i32), 0.0)).collect();
    PolymerModel::hard_core(&iv, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Q = Ratio<i64>;

    fn hard(n: usize, overlap: impl Fn(usize, usize) -> bool) -> Vec<Vec<Q>> {
        (0..n).map(|i| (0..n).map(|j| if overlap(i, j) { Q::from(0) } else { Q::from(1) }).collect()).collect()
    }

    /// Connected spanning subgraphs listed edge set by edge set.
    fn ursell_brute(delta: &[Vec<f64>]) -> f64 {
        let n = delta.len();
        let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let mut total = 0.0;
        for mask in 0u32..1 << edges.len() {
            let mut uf = crate::union_find::UnionFind::new(n);
            let mut w = 1.0;
            for (k, &(i, j)) in edges.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    uf.union(i, j);
                    w *= delta[i][j] - 1.0;
                }
            }
            if (0..n).all(|i| uf.same(0, i)) {
                total += w;
            }
        }
        total / (1..=n).map(|k| k as f64).product::<f64>()
    }

    #[test]
    fn ursell_fixtures() {
        assert_eq!(ursell(&hard(1, |_, _| true)).unwrap(), Q::from(1));
        assert_eq!(ursell(&hard(2, |_, _| true)).unwrap(), Q::new(-1, 2));
        assert_eq!(ursell(&hard(3, |_, _| true)).unwrap(), Q::new(1, 3));
        assert!(ursell(&hard(11, |_, _| true)).is_err());
    }

    #[test]
    fn ursell_matches_graph_listing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let n = rng.gen_range(1..=5);
            let mut d = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i + 1..n {
                    d[i][j] = rng.gen_range(-1.0..=1.0);
                    d[j][i] = d[i][j];
                }
            }
            assert!((ursell(&d).unwrap() - ursell_brute(&d)).abs() < 1e-12);
        }
    }

    #[test]
    fn all_subgraphs_give_pair_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let n = rng.gen_range(2..=5);
            let edges: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let d: Vec<f64> = edges.iter().map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let mut total = 0.0;
            for mask in 0u32..1 << edges.len() {
                total += (0..edges.len()).filter(|k| mask >> k & 1 == 1).map(|k| d[k] - 1.0).product::<f64>();
            }
            assert!((total - d.iter().product::<f64>()).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_z_small_cases() {
        let empty = PolymerModel::hard_core(&[], vec![]).unwrap();
        assert_eq!(polymer_z_exact(&empty).unwrap(), Complex64::new(1.0, 0.0));
        let w = Complex64::new(0.3, -0.1);
        let one = PolymerModel::hard_core(&[vec![0]], vec![w]).unwrap();
        assert_eq!(polymer_z_exact(&one).unwrap(), 1.0 + w);
        let (a, b) = (Complex64::new(0.2, 0.0), Complex64::new(0.5, 0.0));
        let two = PolymerModel::hard_core(&[vec![0, 1], vec![1]], vec![a, b]).unwrap();
        assert!((polymer_z_exact(&two).unwrap() - (1.0 + a + b)).norm() < 1e-15);
    }

    #[test]
    fn kp_cases() {
        let zero = interval_model(4, 2, 0.0).unwrap();
        let r = kp_check(&zero, zero.sizes()).unwrap();
        assert!(r.pass && (r.min_slack - 1.0).abs() < 1e-15);
        let free = PolymerModel::new(vec![Complex64::new(0.01, 0.0); 3], vec![vec![1.0; 3]; 3], vec![1.0; 3]).unwrap();
        assert!(kp_check(&free, &[1.0; 3]).unwrap().pass);
        assert!(kp_check(&free, &[0.0; 3]).is_err());
    }

    #[test]
    fn single_polymer_series() {
        let w = Complex64::new(0.2, 0.1);
        let m = PolymerModel::hard_core(&[vec![0]], vec![w]).unwrap();
        let r = log_z_truncated(&m, 3).unwrap();
        let want = w - w * w / 2.0 + w * w * w / 3.0;
        assert!((r.value - want).norm() < 1e-15);
        let z = interval_model(5, 2, 0.0).unwrap();
        assert_eq!(log_z_truncated(&z, 4).unwrap().value, Complex64::new(0.0, 0.0));
    }

    /// `[eps^k] log Z(eps w)` from the subset expansion of `Z`.
    fn log_series(m: &PolymerModel, order: usize) -> Vec<Complex64> {
        let n = m.len();
        let mut z = vec![Complex64::new(0.0, 0.0); order + 1];
        for mask in 0u32..1 << n {
            let members: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
            if members.len() > order {
                continue;
            }
            let pair: f64 = members.iter().flat_map(|&i| members.iter().filter(move |&&j| j > i).map(move |&j| (i, j))).map(|(i, j)| m.delta(i, j)).product();
            z[members.len()] += members.iter().map(|&i| m.weight(i)).product::<Complex64>() * pair;
        }
        let mut l = vec![Complex64::new(0.0, 0.0); order + 1];
        for k in 1..=order {
            let mut acc = z[k] * k as f64;
            for j in 1..k {
                acc -= l[j] * j as f64 * z[k - j];
            }
            l[k] = acc / k as f64;
        }
        l
    }

    #[test]
    fn per_order_matches_power_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let iv = intervals(4, 3);
            let w: Vec<Complex64> = iv.iter().map(|_| Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect();
            let m = PolymerModel::hard_core(&iv, w).unwrap();
            let r = log_z_truncated(&m, 5).unwrap();
            let s = log_series(&m, 5);
            for k in 1..=5 {
                assert!((r.per_order[k - 1] - s[k]).norm() < 1e-12, "order {k}");
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let m = PolymerModel::from_json(r#"{"polymers": [[0, 1], [1, 2], [3]], "weights": [[0.1, 0.0], [0.2, -0.1], [0.05, 0.0]]}"#).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.delta(0, 1), 0.0);
        assert_eq!(m.delta(0, 2), 1.0);
        assert_eq!(m.delta(0, 0), 0.0);
    }
}

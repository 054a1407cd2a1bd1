//! Explicit dependency-encoding measures on small spaces and the exact check of
//! the polymer representation of a product of local functions.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{invalid, Error, Result};

/// One point of the support: spins, the random sets `X_v` as bitmasks, and its mass.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodingAtom {
    pub spins: Vec<u8>,
    pub sets: Vec<u64>,
    pub prob: f64,
}

/// A finitely supported joint law of `(sigma, X)` on a space of at most 6 sites
/// (checked exhaustively) or more (trusted).
#[derive(Clone, Debug)]
pub struct DependencyEncoding {
    n_sites: usize,
    alphabet: usize,
    atoms: Vec<EncodingAtom>,
}

const CHECK_LIMIT: usize = 6;
const TOL: f64 = 1e-12;

impl DependencyEncoding {
    pub fn new(n_sites: usize, alphabet: usize, atoms: Vec<EncodingAtom>) -> Result<Self> {
        if n_sites == 0 || n_sites > 16 || alphabet < 2 {
            return invalid("need 1..=16 sites and an alphabet of at least 2 values");
        }
        let full = (1u64 << n_sites) - 1;
        let mut total = 0.0;
        for a in &atoms {
            if a.spins.len() != n_sites || a.sets.len() != n_sites || !(a.prob >= 0.0) {
                return invalid("atom has wrong shape or negative mass");
            }
            if a.spins.iter().any(|&s| s as usize >= alphabet) {
                return invalid("spin outside the alphabet");
            }
            for (v, &x) in a.sets.iter().enumerate() {
                if x & !full != 0 || x >> v & 1 == 0 {
                    return invalid(format!("X_{v} must lie in the space and contain {v}"));
                }
            }
            total += a.prob;
        }
        if (total - 1.0).abs() > TOL {
            return invalid(format!("masses sum to {total}, not 1"));
        }
        let phi = DependencyEncoding { n_sites, alphabet, atoms };
        if n_sites <= CHECK_LIMIT {
            phi.check_factorization()?;
        }
        Ok(phi)
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }
    pub fn alphabet(&self) -> usize {
        self.alphabet
    }
    pub fn atoms(&self) -> &[EncodingAtom] {
        &self.atoms
    }

    /// Product measure with `X_v = {v}`.
    pub fn independent(marginals: &[Vec<f64>]) -> Result<Self> {
        let n = marginals.len();
        let q = marginals.first().map_or(2, Vec::len);
        let mut atoms = vec![EncodingAtom { spins: vec![], sets: vec![], prob: 1.0 }];
        for (v, m) in marginals.iter().enumerate() {
            if m.len() != q {
                return invalid("all marginals need the same alphabet");
            }
            atoms = atoms
                .into_iter()
                .flat_map(|a| {
                    m.iter().enumerate().map(move |(s, &p)| {
                        let mut b = a.clone();
                        b.spins.push(s as u8);
                        b.sets.push(1 << v);
                        b.prob *= p;
                        b
                    })
                })
                .collect();
        }
        Self::new(n, q, atoms)
    }

    /// Random blocks of 2 or 3 sites with a random joint law of the block spins and
    /// a random extra set, shared by the block, added to every `X_v` in the block.
    pub fn random_blocks<R: Rng>(n_sites: usize, rng: &mut R) -> Result<Self> {
        let mut sites: Vec<usize> = (0..n_sites).collect();
        sites.shuffle(rng);
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut rest = &sites[..];
        while !rest.is_empty() {
            let take = if rest.len() <= 3 { rest.len() } else { rng.gen_range(2..=3).min(rest.len() - 2).max(2) };
            blocks.push(rest[..take].to_vec());
            rest = &rest[take..];
        }
        let full = (1u64 << n_sites) - 1;
        let mut atoms = vec![EncodingAtom { spins: vec![0; n_sites], sets: vec![0; n_sites], prob: 1.0 }];
        for b in &blocks {
            let bmask: u64 = b.iter().map(|&v| 1u64 << v).sum();
            let extras = [0u64, rng.gen::<u64>() & full & !bmask];
            let local: Vec<(u64, u64, f64)> = (0..1u64 << b.len())
                .flat_map(|s| extras.iter().map(move |&e| (s, e)))
                .map(|(s, e)| (s, e, rng.gen::<f64>() + 0.05))
                .collect();
            let z: f64 = local.iter().map(|x| x.2).sum();
            atoms = atoms
                .into_iter()
                .flat_map(|a| {
                    local.iter().map(move |&(s, e, p)| {
                        let mut c = a.clone();
                        for (k, &v) in b.iter().enumerate() {
                            c.spins[v] = (s >> k & 1) as u8;
                            c.sets[v] = bmask | e;
                        }
                        c.prob *= p / z;
                        c
                    })
                })
                .collect();
        }
        Self::new(n_sites, 2, atoms)
    }

    /// `X_D` and `sigma_D` (as a mixed-radix index) for every subset `D`.
    fn subset_views(&self, a: &EncodingAtom) -> Vec<(u64, u64)> {
        let n = self.n_sites;
        let mut out = vec![(0u64, 0u64); 1 << n];
        for d in 1usize..1 << n {
            let low = d.trailing_zeros() as usize;
            let (x, _) = out[d & (d - 1)];
            out[d] = (x | a.sets[low], 0);
        }
        for (d, slot) in out.iter_mut().enumerate() {
            let mut idx = 0u64;
            for v in (0..n).rev() {
                if d >> v & 1 == 1 {
                    idx = idx * self.alphabet as u64 + a.spins[v] as u64;
                }
            }
            slot.1 = idx;
        }
        out
    }

    /// Checks `Phi(f g 1[X_D = C] 1[X_D' = C']) = Phi(f 1[X_D = C]) Phi(g 1[X_D' = C'])`
    /// for all indicator observables and disjoint `C, C'`.
    pub fn check_factorization(&self) -> Result<()> {
        let n = self.n_sites;
        let subsets = 1usize << n;
        let mut marg: Vec<HashMap<(u64, u64), f64>> = vec![HashMap::new(); subsets];
        let mut joint: HashMap<(u32, u32, u64, u64, u64, u64), f64> = HashMap::new();
        for a in &self.atoms {
            let view = self.subset_views(a);
            for d in 1..subsets {
                *marg[d].entry(view[d]).or_default() += a.prob;
            }
            for d in 1..subsets {
                for e in 1..subsets {
                    if view[d].0 & view[e].0 == 0 {
                        *joint.entry((d as u32, e as u32, view[d].0, view[e].0, view[d].1, view[e].1)).or_default() += a.prob;
                    }
                }
            }
        }
        for (&(d, e, c, c2, s, s2), &p) in &joint {
            let q = marg[d as usize][&(c, s)] * marg[e as usize][&(c2, s2)];
            if (p - q).abs() > TOL {
                return Err(Error::Invariant(format!("factorization fails for D={d:b}, D'={e:b}: {p} vs {q}")));
            }
        }
        for d in 1..subsets {
            for e in 1..subsets {
                for (&(c, s), &p) in &marg[d] {
                    for (&(c2, s2), &q) in &marg[e] {
                        if c & c2 == 0 && p * q > TOL && !joint.contains_key(&(d as u32, e as u32, c, c2, s, s2)) {
                            return Err(Error::Invariant(format!("factorization fails for D={d:b}, D'={e:b}: 0 vs {}", p * q)));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// A complex function of the spins on `support`, tabulated in mixed radix with the
/// first support site least significant.
#[derive(Clone, Debug)]
pub struct LocalFunction {
    pub support: Vec<usize>,
    pub table: Vec<Complex64>,
}

impl LocalFunction {
    /// `k` functions on random supports of 1 to 3 sites with complex values.
    pub fn random<R: Rng>(n_sites: usize, alphabet: usize, k: usize, rng: &mut R) -> Vec<LocalFunction> {
        (0..k)
            .map(|_| {
                let size = rng.gen_range(1..=3.min(n_sites));
                let mut s: Vec<usize> = (0..n_sites).collect();
                s.shuffle(rng);
                s.truncate(size);
                let table = (0..alphabet.pow(size as u32))
                    .map(|_| Complex64::new(rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                LocalFunction { support: s, table }
            })
            .collect()
    }

    fn eval(&self, spins: &[u8], q: usize) -> Complex64 {
        let idx = self.support.iter().rev().fold(0usize, |acc, &v| acc * q + spins[v] as usize);
        self.table[idx]
    }
}

/// Largest number of distinct supports accepted.
pub const MAX_FUNCTIONS: usize = 12;

/// Returns `|Phi(prod f) - Z_polymer|` with the polymer weights built from `Phi`.
///
/// Functions sharing a support are multiplied together first.
pub fn verify_polymer_identity(phi: &DependencyEncoding, functions: &[LocalFunction]) -> Result<f64> {
    let (n, q) = (phi.n_sites(), phi.alphabet());
    if n > 12 {
        return Err(Error::SizeCap { what: "sites", size: n, cap: 12 });
    }
    let mut merged: Vec<(u64, Vec<&LocalFunction>)> = Vec::new();
    for f in functions {
        if f.support.is_empty() || f.support.iter().any(|&v| v >= n) || f.table.len() != q.pow(f.support.len() as u32) {
            return invalid("function support must be a nonempty set of sites with a full table");
        }
        let mask: u64 = f.support.iter().map(|&v| 1u64 << v).fold(0, |a, b| a | b);
        if mask.count_ones() as usize != f.support.len() {
            return invalid("function support has repeated sites");
        }
        match merged.iter_mut().find(|(m, _)| *m == mask) {
            Some((_, fs)) => fs.push(f),
            None => merged.push((mask, vec![f])),
        }
    }
    let k = merged.len();
    if k > MAX_FUNCTIONS {
        return Err(Error::SizeCap { what: "distinct supports", size: k, cap: MAX_FUNCTIONS });
    }
    let one = Complex64::new(1.0, 0.0);
    let mut lhs = Complex64::new(0.0, 0.0);
    let mut w = vec![Complex64::new(0.0, 0.0); 1 << n];
    for a in phi.atoms() {
        let vals: Vec<Complex64> = merged.iter().map(|(_, fs)| fs.iter().map(|f| f.eval(&a.spins, q)).product()).collect();
        let xs: Vec<u64> = merged.iter().map(|(m, _)| (0..n).filter(|v| m >> v & 1 == 1).fold(0, |acc, v| acc | a.sets[v])).collect();
        lhs += a.prob * vals.iter().product::<Complex64>();
        for h in 1usize..1 << k {
            let members: Vec<usize> = (0..k).filter(|i| h >> i & 1 == 1).collect();
            if !overlap_connected(&members, &xs) {
                continue;
            }
            let c = members.iter().fold(0u64, |acc, &i| acc | xs[i]);
            let term: Complex64 = members.iter().map(|&i| vals[i] - one).product();
            w[c as usize] += a.prob * term;
        }
    }
    // hard-core gas of subsets of the space: Z(S) = Z(S - min) + sum_{C ∋ min, C ⊆ S} w(C) Z(S - C)
    let mut z = vec![Complex64::new(0.0, 0.0); 1 << n];
    z[0] = one;
    for s in 1usize..1 << n {
        let low = s & s.wrapping_neg();
        let mut acc = z[s & !low];
        let others = s & !low;
        let mut sub = others;
        loop {
            let c = sub | low;
            acc += w[c] * z[s & !c];
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & others;
        }
        z[s] = acc;
    }
    Ok((lhs - z[(1 << n) - 1]).norm())
}

fn overlap_connected(members: &[usize], xs: &[u64]) -> bool {
    let mut reached = 1u64;
    let mut union = xs[members[0]];
    loop {
        let before = reached;
        for (k, &i) in members.iter().enumerate() {
            if reached >> k & 1 == 0 && xs[i] & union != 0 {
                reached |= 1 << k;
                union |= xs[i];
            }
        }
        if reached == before {
            return reached.count_ones() as usize == members.len();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_one_functions() {
        let phi = DependencyEncoding::independent(&[vec![0.3, 0.7], vec![0.5, 0.5]]).unwrap();
        let f = LocalFunction { support: vec![0, 1], table: vec![Complex64::new(1.0, 0.0); 4] };
        assert!(verify_polymer_identity(&phi, &[f]).unwrap() < 1e-15);
    }

    #[test]
    fn product_measure_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m: Vec<Vec<f64>> = (0..5).map(|_| {
            let p = rng.gen::<f64>();
            vec![p, 1.0 - p]
        }).collect();
        let phi = DependencyEncoding::independent(&m).unwrap();
        let fs = LocalFunction::random(5, 2, 6, &mut rng);
        assert!(verify_polymer_identity(&phi, &fs).unwrap() < 1e-12);
    }

    #[test]
    fn block_encodings_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let phi = DependencyEncoding::random_blocks(6, &mut rng).unwrap();
            let fs = LocalFunction::random(6, 2, 6, &mut rng);
            assert!(verify_polymer_identity(&phi, &fs).unwrap() < 1e-10);
        }
    }

    #[test]
    fn non_encoding_rejected() {
        // two perfectly correlated spins with X_v = {v}
        let atoms = vec![
            EncodingAtom { spins: vec![0, 0], sets: vec![1, 2], prob: 0.5 },
            EncodingAtom { spins: vec![1, 1], sets: vec![1, 2], prob: 0.5 },
        ];
        assert!(matches!(DependencyEncoding::new(2, 2, atoms), Err(Error::Invariant(_))));
        let bad = vec![EncodingAtom { spins: vec![0], sets: vec![0], prob: 1.0 }];
        assert!(DependencyEncoding::new(1, 2, bad).is_err());
    }
}

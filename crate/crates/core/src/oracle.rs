//! Exact references: Gray-code enumeration, transfer matrices and Onsager's pressure.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::glauber::ModelParams;
use crate::graph::SpinGraph;
use crate::lattice::{BoundaryCondition, BoxGeom, TorusGeom};
use crate::stats::KahanSum;

/// Largest number of sites the enumerator accepts.
pub const ENUMERATION_CAP: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Enumeration,
    Transfer,
    ClosedForm,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExactResult {
    pub value: f64,
    pub method: Method,
    pub instance: String,
}

/// Graphs the oracle knows how to build.
#[derive(Clone, Debug)]
pub enum Geometry {
    Torus(TorusGeom),
    Box(BoxGeom, BoundaryCondition),
    Graph(SpinGraph),
}

impl Geometry {
    pub fn spin_graph(&self) -> Result<SpinGraph> {
        match self {
            Geometry::Torus(t) => {
                if t.side() < 4 {
                    return Err(Error::Geometry(format!("torus side {} < 4 has doubled bonds", t.side())));
                }
                Ok(SpinGraph::torus(t))
            }
            Geometry::Box(b, bc) => Ok(SpinGraph::boxed(b, *bc)),
            Geometry::Graph(g) => Ok(g.clone()),
        }
    }

    fn describe(&self) -> String {
        match self {
            Geometry::Torus(t) => format!("torus d={} side={}", t.dim(), t.side()),
            Geometry::Box(b, bc) => format!("box d={} N={} bc={bc:?}", b.dim(), b.half_side()),
            Geometry::Graph(g) => format!("graph n={} edges={}", g.n_sites(), g.edges().len()),
        }
    }
}

fn energy(g: &SpinGraph, p: &ModelParams, s: &[i8]) -> f64 {
    p.beta * g.bond_sum(s) as f64 + p.h * s.iter().map(|&x| x as f64).sum::<f64>()
}

fn energy_bound(g: &SpinGraph, p: &ModelParams) -> f64 {
    let b: i64 = (0..g.n_sites()).map(|v| g.boundary_field(v).abs() as i64).sum();
    p.beta * (g.edges().len() as i64 + b) as f64 + p.h.abs() * g.n_sites() as f64
}

fn check_size(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::SizeCap { what: "enumerated sites", size: n, cap });
    }
    Ok(())
}

/// Visits every configuration in Gray-code order with its log weight.
///
/// Configuration bit `i` set means spin `i` is `+1`. The visitor sees `(spins, index, log_weight)`.
pub fn for_each_state(g: &SpinGraph, p: &ModelParams, mut visit: impl FnMut(&[i8], usize, f64)) -> Result<()> {
    let n = g.n_sites();
    check_size(n, ENUMERATION_CAP)?;
    let mut s = vec![-1i8; n];
    let mut e = energy(g, p, &s);
    let mut idx = 0usize;
    visit(&s, idx, e);
    for k in 1usize..(1 << n) {
        let v = k.trailing_zeros() as usize;
        e -= 2.0 * s[v] as f64 * (p.beta * g.local_field(&s, v) as f64 + p.h);
        s[v] = -s[v];
        idx ^= 1 << v;
        visit(&s, idx, e);
    }
    Ok(())
}

/// `(sum w, sum f w)` over configurations with weights scaled by `exp(-bound)`.
fn weighted_sums(g: &SpinGraph, p: &ModelParams, f: Option<&(dyn Fn(&[i8]) -> f64 + Sync)>) -> Result<(f64, f64, f64)> {
    let n = g.n_sites();
    check_size(n, ENUMERATION_CAP)?;
    let shift = energy_bound(g, p);
    let hi = n.min(6);
    let lo = n - hi;
    let parts: Vec<(f64, f64)> = (0..1usize << hi)
        .into_par_iter()
        .map(|prefix| {
            let mut s: Vec<i8> = (0..n).map(|i| if i >= lo && prefix >> (i - lo) & 1 == 1 { 1 } else { -1 }).collect();
            let mut e = energy(g, p, &s);
            let (mut z, mut fz) = (KahanSum::default(), KahanSum::default());
            let mut add = |s: &[i8], e: f64| {
                let w = (e - shift).exp();
                z.add(w);
                if let Some(f) = f {
                    fz.add(w * f(s));
                }
            };
            add(&s, e);
            for k in 1usize..(1 << lo) {
                let v = k.trailing_zeros() as usize;
                e -= 2.0 * s[v] as f64 * (p.beta * g.local_field(&s, v) as f64 + p.h);
                s[v] = -s[v];
                add(&s, e);
            }
            (z.value(), fz.value())
        })
        .collect();
    let (mut z, mut fz) = (KahanSum::default(), KahanSum::default());
    for (a, b) in parts {
        z.add(a);
        fz.add(b);
    }
    Ok((shift, z.value(), fz.value()))
}

pub fn log_partition(g: &SpinGraph, p: &ModelParams) -> Result<f64> {
    let (shift, z, _) = weighted_sums(g, p, None)?;
    Ok(shift + z.ln())
}

/// `log Z` by exhaustive enumeration.
pub fn exact_partition(geom: &Geometry, p: &ModelParams) -> Result<ExactResult> {
    let g = geom.spin_graph()?;
    Ok(ExactResult { value: log_partition(&g, p)?, method: Method::Enumeration, instance: geom.describe() })
}

/// Gibbs expectation of an observable.
pub fn expectation(g: &SpinGraph, p: &ModelParams, f: &(dyn Fn(&[i8]) -> f64 + Sync)) -> Result<f64> {
    let (_, z, fz) = weighted_sums(g, p, Some(f))?;
    Ok(fz / z)
}

pub fn exact_expectation(geom: &Geometry, p: &ModelParams, f: &(dyn Fn(&[i8]) -> f64 + Sync)) -> Result<ExactResult> {
    let g = geom.spin_graph()?;
    Ok(ExactResult { value: expectation(&g, p, f)?, method: Method::Enumeration, instance: geom.describe() })
}

/// `<sigma_A>`.
pub fn correlation(g: &SpinGraph, p: &ModelParams, a: &[usize]) -> Result<f64> {
    expectation(g, p, &|s: &[i8]| a.iter().map(|&i| s[i] as f64).product())
}

/// Gibbs probabilities indexed by configuration bits (bit `i` set means `+1`).
pub fn exact_distribution(g: &SpinGraph, p: &ModelParams) -> Result<Vec<f64>> {
    let n = g.n_sites();
    check_size(n, 20)?;
    let shift = energy_bound(g, p);
    let mut w = vec![0.0; 1 << n];
    for_each_state(g, p, |_, idx, e| w[idx] = (e - shift).exp())?;
    let mut z = KahanSum::default();
    w.iter().for_each(|&x| z.add(x));
    let z = z.value();
    w.iter_mut().for_each(|x| *x /= z);
    Ok(w)
}

/// Eigenvalues of the symmetric 2x2 transfer kernel, larger first.
pub fn transfer_eigenvalues(p: &ModelParams) -> (f64, f64) {
    let a = p.beta.exp() * p.h.cosh();
    let r = ((2.0 * p.beta).exp() * p.h.sinh().powi(2) + (-2.0 * p.beta).exp()).sqrt();
    (a + r, a - r)
}

/// Pressure of the one-dimensional chain, `log lambda_max`.
pub fn transfer_pressure_1d(p: &ModelParams) -> f64 {
    transfer_eigenvalues(p).0.ln()
}

/// `log Z` of a ring of `n >= 3` sites, `log(l1^n + l2^n)`.
pub fn ring_log_partition(n: usize, p: &ModelParams) -> f64 {
    let (l1, l2) = transfer_eigenvalues(p);
    n as f64 * l1.ln() + (1.0 + (l2 / l1).powi(n as i32)).ln()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Option<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Some(left + right + delta / 15.0);
        }
        if depth == 0 {
            return None;
        }
        Some(rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)? + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 48).ok_or_else(|| Error::Invariant("quadrature did not converge".into()))
}

/// Onsager's pressure of the square lattice at zero field.
pub fn onsager_pressure(beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidArgument("beta must be >= 0".into()));
    }
    let k = 2.0 * (2.0 * beta).sinh() / (2.0 * beta).cosh().powi(2);
    let f = move |t: f64| (0.5 * (1.0 + (1.0 - (k * t.sin()).powi(2)).max(0.0).sqrt())).ln();
    let integral = simpson(&f, 0.0, std::f64::consts::FRAC_PI_2, 1e-13)?;
    Ok((2.0 * (2.0 * beta).cosh()).ln() + integral / std::f64::consts::PI)
}

/// Onsager's double-integral form; slow, used to cross-check `onsager_pressure`.
pub fn onsager_pressure_double(beta: f64) -> Result<f64> {
    let (c, s) = ((2.0 * beta).cosh(), (2.0 * beta).sinh());
    let pi = std::f64::consts::PI;
    let inner = |t1: f64| {
        let g = move |t2: f64| (c * c - s * (t1.cos() + t2.cos())).ln();
        simpson(&g, 0.0, pi, 1e-12).unwrap_or(f64::NAN)
    };
    let outer = simpson(&inner, 0.0, pi, 1e-11)?;
    Ok(2f64.ln() + outer / (2.0 * pi * pi))
}

fn column_energy(s: usize, w: usize) -> (i32, i32) {
    let spin = |i: usize| if s >> (i % w) & 1 == 1 { 1 } else { -1 };
    let intra = (0..w).map(|i| spin(i) * spin(i + 1)).sum();
    let mag = (0..w).map(spin).sum();
    (intra, mag)
}

/// Symmetric transfer matrix of a periodic column of `w >= 3` sites.
pub fn strip_transfer_matrix(w: usize, p: &ModelParams) -> Result<Vec<Vec<f64>>> {
    if !(3..=12).contains(&w) {
        return Err(Error::InvalidArgument(format!("strip width {w} outside 3..=12")));
    }
    let m = 1 << w;
    Ok((0..m)
        .map(|a| {
            let (ia, ma) = column_energy(a, w);
            (0..m)
                .map(|b| {
                    let (ib, mb) = column_energy(b, w);
                    let inter = w as i32 - 2 * (a ^ b).count_ones() as i32;
                    (p.beta * (inter as f64 + 0.5 * (ia + ib) as f64) + 0.5 * p.h * (ma + mb) as f64).exp()
                })
                .collect()
        })
        .collect())
}

/// Pressure per site of the infinite cylinder of width `w`, by power iteration.
pub fn cylinder_pressure(w: usize, p: &ModelParams) -> Result<f64> {
    let t = strip_transfer_matrix(w, p)?;
    let m = t.len();
    let mut v = vec![1.0; m];
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let nv: Vec<f64> = t.iter().map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum()).collect();
        let norm = nv.iter().map(|x| x * x).sum::<f64>().sqrt();
        let next = norm / v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = nv.into_iter().map(|x| x / norm).collect();
        if (next - lambda).abs() <= 1e-15 * next {
            return Ok(next.ln() / w as f64);
        }
        lambda = next;
    }
    Err(Error::Invariant("power iteration did not converge".into()))
}

/// `log Z` of the `w x len` torus as `log tr T^len`.
pub fn strip_torus_log_partition(w: usize, len: usize, p: &ModelParams) -> Result<f64> {
    let t = strip_transfer_matrix(w, p)?;
    let m = t.len();
    let mul = |a: &Vec<Vec<f64>>, b: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        (0..m).map(|i| (0..m).map(|j| (0..m).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
    };
    let mut acc = t.clone();
    let mut log_scale = 0.0;
    for _ in 1..len {
        acc = mul(&acc, &t);
        let s = acc.iter().flatten().fold(0.0f64, |x, &y| x.max(y));
        acc.iter_mut().flatten().for_each(|x| *x /= s);
        log_scale += s.ln();
    }
    let trace: f64 = (0..m).map(|i| acc[i][i]).sum();
    Ok(log_scale + trace.ln())
}

/// One exact reference value.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct Fixture {
    pub instance: String,
    pub beta: f64,
    pub h: f64,
    pub quantity: String,
    pub value: f64,
}

/// Reference values shared by the test suites: rings, the 4x4 torus and 3x3 boxes.
pub fn standard_fixtures() -> Result<Vec<Fixture>> {
    let mut out = Vec::new();
    let mut push = |instance: &str, p: &ModelParams, quantity: &str, value: f64| {
        out.push(Fixture { instance: instance.into(), beta: p.beta, h: p.h, quantity: quantity.into(), value })
    };
    for (beta, h) in [(0.0, 0.0), (0.2, 0.0), (0.2, 0.2), (0.35, 0.0), (0.35, 0.2), (0.5, 0.3)] {
        let p = ModelParams::new(beta, h)?;
        for n in [4, 8] {
            let g = SpinGraph::torus(&TorusGeom::new(1, n / 2)?);
            let name = format!("ring-{n}");
            push(&name, &p, "log_z", log_partition(&g, &p)?);
            push(&name, &p, "s0", correlation(&g, &p, &[0])?);
            push(&name, &p, "s0s1", correlation(&g, &p, &[0, 1])?);
        }
        let g = SpinGraph::torus(&TorusGeom::new(2, 2)?);
        push("torus-4x4", &p, "log_z", log_partition(&g, &p)?);
        push("torus-4x4", &p, "s0", correlation(&g, &p, &[0])?);
        push("torus-4x4", &p, "s0s1", correlation(&g, &p, &[0, 1])?);
        for bc in [BoundaryCondition::Plus, BoundaryCondition::Free, BoundaryCondition::Minus] {
            let b = BoxGeom::new(2, 1)?;
            let g = SpinGraph::boxed(&b, bc);
            push(&format!("box-3x3-{bc:?}").to_lowercase(), &p, "s0", correlation(&g, &p, &[b.origin()])?);
        }
        push("chain", &p, "pressure", transfer_pressure_1d(&p));
    }
    Ok(out)
}

/// Looks up a fixture value.
pub fn fixture<'a>(fixtures: &'a [Fixture], instance: &str, beta: f64, h: f64, quantity: &str) -> Option<&'a Fixture> {
    fixtures.iter().find(|f| f.instance == instance && f.beta == beta && f.h == h && f.quantity == quantity)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(beta: f64, h: f64) -> ModelParams {
        ModelParams::new(beta, h).unwrap()
    }

    #[test]
    fn single_site_and_product_measure() {
        let g = SpinGraph::from_edges(1, &[]);
        assert!((log_partition(&g, &p(0.7, 0.3)).unwrap() - (2.0 * 0.3f64.cosh()).ln()).abs() < 1e-14);
        let t = TorusGeom::new(2, 2).unwrap();
        let z = exact_partition(&Geometry::Torus(t), &p(0.0, 0.4)).unwrap();
        assert!((z.value - 16.0 * (2.0 * 0.4f64.cosh()).ln()).abs() < 1e-12);
    }

    #[test]
    fn side_two_torus_rejected() {
        let t = TorusGeom::new(2, 1).unwrap();
        assert!(exact_partition(&Geometry::Torus(t), &p(0.1, 0.0)).is_err());
    }

    #[test]
    fn ring_matches_transfer() {
        for &(b, h) in &[(0.5, 0.0), (0.3, -0.7), (1.1, 0.2)] {
            let t = TorusGeom::new(1, 2).unwrap();
            let z = exact_partition(&Geometry::Torus(t), &p(b, h)).unwrap().value;
            assert!((z - ring_log_partition(4, &p(b, h))).abs() < 1e-12);
        }
    }

    #[test]
    fn transfer_limits() {
        assert!((transfer_pressure_1d(&p(0.0, 0.8)) - (2.0 * 0.8f64.cosh()).ln()).abs() < 1e-14);
        assert!((transfer_pressure_1d(&p(0.6, 0.0)) - (2.0 * 0.6f64.cosh()).ln()).abs() < 1e-14);
        let q = p(0.4, 0.1);
        assert!((ring_log_partition(40, &q) / 40.0 - transfer_pressure_1d(&q)).abs() < 1e-6);
    }

    #[test]
    fn two_site_correlation() {
        let g = SpinGraph::from_edges(2, &[(0, 1)]);
        let c = correlation(&g, &p(0.37, 0.0), &[0, 1]).unwrap();
        assert!((c - 0.37f64.tanh()).abs() < 1e-14);
        assert!(correlation(&g, &p(0.37, 0.0), &[0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn onsager_forms_agree() {
        assert!((onsager_pressure(0.0).unwrap() - 2f64.ln()).abs() < 1e-14);
        for &b in &[0.1, 0.3, 0.6] {
            let a = onsager_pressure(b).unwrap();
            let d = onsager_pressure_double(b).unwrap();
            assert!((a - d).abs() < 1e-8, "{b}: {a} vs {d}");
        }
    }

    #[test]
    fn strip_trace_matches_enumeration() {
        let t = TorusGeom::new(2, 2).unwrap();
        let q = p(0.3, 0.2);
        let z = exact_partition(&Geometry::Torus(t), &q).unwrap().value;
        let w = strip_torus_log_partition(4, 4, &q).unwrap();
        assert!((z - w).abs() < 1e-10, "{z} vs {w}");
    }

    #[test]
    fn distribution_sums_to_one() {
        let g = SpinGraph::from_edges(3, &[(0, 1), (1, 2)]);
        let d = exact_distribution(&g, &p(0.5, 0.1)).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }
}

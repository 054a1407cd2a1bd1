//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the libtest
//! harness so the lines reach the terminal.

use std::time::Instant;

use isingcx::coarsegrain::{kupd_coarse_containment, kupd_tail};
use isingcx::fkfield::{enumerate_fk, perfect_spins, relax_gap, FkGraph};
use isingcx::infoperc::{estimate_sup_decay, sample_coupling_times, Explorer};
use isingcx::oracle;
use isingcx::polymer::{
    interval_model, kp_check, log_z_truncated, polymer_z_exact, pressure_perturbation, ursell, verify_polymer_identity,
    DependencyEncoding, LocalFunction, DEFAULT_T_MAX,
};
use isingcx::stats::{ks_test, mean_se, replica_seed};
use isingcx::{BoxGeom, CoarseLattice, ModelParams, SiteSet, SpinGraph, TorusGeom};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = (bool, String);

fn p(beta: f64, h: f64) -> ModelParams {
    ModelParams::new(beta, h).unwrap()
}

fn polymer_identity() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(replica_seed(2024, i));
        let n = rng.gen_range(2..=6);
        let phi = DependencyEncoding::random_blocks(n, &mut rng).unwrap();
        let k = rng.gen_range(1..=6);
        let fs = LocalFunction::random(n, phi.alphabet(), k, &mut rng);
        worst = worst.max(verify_polymer_identity(&phi, &fs).unwrap());
    }
    (worst < 1e-10, format!("100 encodings, largest residual {worst:.2e}"))
}

const MAX_SEARCH_ORDER: usize = 24;

fn cluster_expansion() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (n, len, lambda) in [(12, 1, 0.1), (6, 2, 0.05), (4, 3, 0.03), (5, 2, 0.1), (8, 1, 0.3)] {
        let model = interval_model(n, len, lambda).unwrap();
        assert!(model.len() <= 12);
        let kp = kp_check(&model, model.sizes()).unwrap();
        if !kp.pass {
            notes.push(format!("[{n},{len},{lambda}] criterion fails, skipped"));
            continue;
        }
        let exact = polymer_z_exact(&model).unwrap();
        let mut reached = None;
        for order in 1..=MAX_SEARCH_ORDER {
            let err = (log_z_truncated(&model, order).unwrap().value.exp() - exact).norm();
            if err < 1e-8 {
                reached = Some((order, err));
                break;
            }
        }
        match reached {
            Some((o, e)) => notes.push(format!("[{} polymers] order {o}: {e:.1e}", model.len())),
            None => {
                ok = false;
                notes.push(format!("[{} polymers] no order <= {MAX_SEARCH_ORDER} reached 1e-8", model.len()));
            }
        }
    }
    (ok, notes.join(", "))
}

fn ursell_fixtures() -> Outcome {
    let q = Ratio::<i64>::from_integer;
    let overlap = |n: usize| vec![vec![q(0); n]; n];
    let u1 = ursell(&overlap(1)).unwrap();
    let u2 = ursell(&overlap(2)).unwrap();
    let u3 = ursell(&overlap(3)).unwrap();
    let ok = u1 == q(1) && u2 == Ratio::new(-1, 2) && u3 == Ratio::new(1, 3);
    (ok, format!("U(1) = {u1}, U(2) = {u2}, U(3) = {u3}"))
}

fn perfect_sampling() -> Outcome {
    let torus = TorusGeom::new(2, 2).unwrap();
    let graph = SpinGraph::torus(&torus);
    let n = graph.n_sites();
    let bonds = graph.edges();
    let mut ok = true;
    let mut notes = Vec::new();
    for (beta, h) in [(0.2, 0.0), (0.2, 0.2), (0.35, 0.0), (0.35, 0.2)] {
        let params = p(beta, h);
        let samples: Vec<Vec<i8>> = (0..100_000u64)
            .into_par_iter()
            .map_init(|| Explorer::new(n), |ex, r| perfect_spins(&graph, &params, ex, replica_seed(7, r), 1e5).unwrap())
            .flatten()
            .collect();
        let mag: Vec<f64> = samples.iter().map(|s| s.iter().map(|&x| x as f64).sum::<f64>() / n as f64).collect();
        let nn: Vec<f64> =
            samples.iter().map(|s| bonds.iter().map(|&(a, b)| (s[a] * s[b]) as f64).sum::<f64>() / bonds.len() as f64).collect();
        let pp: Vec<f64> = samples.iter().map(|s| f64::from(u8::from(s[0] == 1 && s[1] == 1))).collect();
        let exact_mag = oracle::correlation(&graph, &params, &[0]).unwrap();
        let exact_nn = oracle::correlation(&graph, &params, &[0, 1]).unwrap();
        let exact_pp = oracle::expectation(&graph, &params, &|s: &[i8]| f64::from(u8::from(s[0] == 1 && s[1] == 1))).unwrap();
        for (name, xs, exact) in [("<s>", &mag, exact_mag), ("<s s'>", &nn, exact_nn), ("P(++)", &pp, exact_pp)] {
            let (m, se) = mean_se(xs);
            let z = (m - exact).abs() / se;
            ok &= z <= 3.0;
            notes.push(format!("b={beta},h={h} {name} {z:.2}se"));
        }
        ok &= samples.len() == 100_000;
    }
    (ok, notes.join(", "))
}

fn beta_zero() -> Outcome {
    let graph = SpinGraph::torus(&TorusGeom::new(2, 4).unwrap());
    let params = p(0.0, 0.0);
    let lags: Vec<f64> = (0..=8).map(|i| i as f64 * 0.5).collect();
    let replicas = 20_000;
    let fit = estimate_sup_decay(&graph, &params, &lags, replicas, 11).unwrap();
    let mut worst = 0.0f64;
    for (i, &l) in lags.iter().enumerate() {
        let want = (-l).exp();
        let se = (want * (1.0 - want) / replicas as f64).sqrt();
        if se > 0.0 {
            worst = worst.max((fit.p_hat[i] - want).abs() / se);
        } else if fit.p_hat[i] != want {
            worst = f64::INFINITY;
        }
    }
    let taus: Vec<f64> = sample_coupling_times(&graph, &params, 0, 5000, 12, 1e3).unwrap().into_iter().flatten().collect();
    let (d, pval) = ks_test(&taus, |t| 1.0 - (-t).exp());
    (worst <= 3.0 && pval > 0.01 && taus.len() == 5000, format!("largest deviation {worst:.2} se over {} lags; KS D = {d:.4}, p = {pval:.3}", lags.len()))
}

/// Small blocks (every box bad, 10^4 replicas) and large blocks (good boxes common,
/// fewer replicas since each box check couples a few hundred sites).
fn containment() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (half, l, replicas) in [(15usize, 1usize, 10_000usize), (602, 150, 1000)] {
        let coarse = CoarseLattice::new(&TorusGeom::new(1, half).unwrap(), l).unwrap();
        let v = SiteSet::from_iter(coarse.n_coarse(), [0]);
        let rep = kupd_coarse_containment(&p(0.1, 0.0), &coarse, &v, &[1, 2, 3], replicas, 21, 400, DEFAULT_T_MAX).unwrap();
        let decided = rep.replicas - rep.censored - rep.truncated;
        ok &= rep.fine_violations == 0 && rep.coarse_violations == 0 && rep.cardinality_flags == 0 && decided == rep.replicas;
        notes.push(format!(
            "L={l}: {decided}/{} decided, {} covered the torus, largest cluster {}, violations {}/{}/{}",
            rep.replicas, rep.stopped_early, rep.max_cluster, rep.fine_violations, rep.coarse_violations, rep.cardinality_flags
        ));
    }
    (ok, notes.join("; "))
}

fn kupd_tail_rate() -> Outcome {
    let coarse = CoarseLattice::new(&TorusGeom::new(2, 15).unwrap(), 1).unwrap();
    let v = SiteSet::from_iter(coarse.n_coarse(), [0]);
    let th: Vec<usize> = (1..=coarse.n_coarse()).collect();
    let run = kupd_tail(&p(0.2, 0.0), &coarse, &v, &th, 5000, 31, DEFAULT_T_MAX).unwrap();
    let f = &run.tail.fit;
    (f.rate.is_finite() && f.rate > 0.0 && f.rate_ci.0 > 0.0, format!("rate {:.5}, 95% CI ({:.5}, {:.5}), {} censored", f.rate, f.rate_ci.0, f.rate_ci.1, run.censored))
}

fn fixture_graphs() -> Vec<FkGraph> {
    let cycle = |n: usize| FkGraph::new(n, (0..n).map(|i| (i, (i + 1) % n)).collect()).unwrap();
    let complete = |n: usize| FkGraph::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()).unwrap();
    let outer: Vec<(usize, usize)> = (0..5).map(|i| (i, (i + 1) % 5)).collect();
    let inner: Vec<(usize, usize)> = (0..5).map(|i| (5 + i, 5 + (i + 2) % 5)).collect();
    let spokes: Vec<(usize, usize)> = (0..5).map(|i| (i, 5 + i)).collect();
    vec![
        FkGraph::new(1, vec![]).unwrap(),
        FkGraph::new(2, vec![(0, 1)]).unwrap(),
        cycle(3),
        cycle(8),
        complete(4),
        complete(5),
        FkGraph::box_free(&BoxGeom::new(2, 1).unwrap()),
        FkGraph::box_with_boundary(&BoxGeom::new(1, 4).unwrap()),
        FkGraph::new(4, vec![(0, 1), (0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]).unwrap(),
        FkGraph::new(10, [outer, inner, spokes].concat()).unwrap(),
    ]
}

fn fk_coloring() -> Outcome {
    let (mut worst, mut energy_ok) = (0.0f64, true);
    let mut count = 0;
    for g in fixture_graphs() {
        assert!(g.edges().len() <= 20);
        for params in [p(0.0, 0.3), p(0.3, 0.0), p(0.4, 0.15), p(0.9, -0.2)] {
            let fk = enumerate_fk(&g, &params).unwrap();
            let colored = fk.spin_marginal(&params).unwrap();
            let exact = oracle::exact_distribution(&g.spin_graph(), &params).unwrap();
            worst = worst.max(colored.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            if params.beta > 0.0 {
                let e = (2.0 * params.beta).exp();
                let (lo, hi) = ((e - 1.0) / (e + 1.0), 1.0 - 1.0 / e);
                energy_ok &= fk.conditional_open().iter().all(|&c| c >= lo - 1e-12 && c <= hi + 1e-12);
            }
            count += 1;
        }
    }
    let decoupling = decoupling_gap();
    let ok = worst < 1e-12 && energy_ok && decoupling < 1e-12;
    (ok, format!("{count} instances: coloring error {worst:.1e}, finite energy {energy_ok}, decoupling error {decoupling:.1e}"))
}

/// Two triangles joined by the cut `{(2, 3), (1, 4)}`: with the cut closed, the two
/// sides are independent FK measures.
fn decoupling_gap() -> f64 {
    let left = vec![(0, 1), (1, 2), (2, 0)];
    let right = vec![(3, 4), (4, 5), (5, 3)];
    let cut = vec![(2, 3), (1, 4)];
    let g = FkGraph::new(6, [left.clone(), right.clone(), cut].concat()).unwrap();
    let g1 = FkGraph::new(3, left).unwrap();
    let g2 = FkGraph::new(3, right.iter().map(|&(a, b)| (a - 3, b - 3)).collect()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for params in [p(0.4, 0.2), p(0.8, 0.5)] {
        let fk = enumerate_fk(&g, &params).unwrap();
        let (f1, f2) = (enumerate_fk(&g1, &params).unwrap(), enumerate_fk(&g2, &params).unwrap());
        for _ in 0..20 {
            let tf: Vec<f64> = (0..8).map(|_| rng.gen()).collect();
            let tg: Vec<f64> = (0..8).map(|_| rng.gen()).collect();
            let code = |w: &[bool]| w.iter().enumerate().fold(0usize, |a, (i, &o)| a | (usize::from(o) << i));
            let closed = fk.expectation(|w| f64::from(u8::from(!w[6] && !w[7])));
            let joint = fk.expectation(|w| if !w[6] && !w[7] { tf[code(&w[..3])] * tg[code(&w[3..6])] } else { 0.0 }) / closed;
            let product = f1.expectation(|w| tf[code(w)]) * f2.expectation(|w| tg[code(w)]);
            worst = worst.max((joint - product).abs());
        }
    }
    worst
}

fn relaxation() -> Outcome {
    let ns: Vec<usize> = (1..=30).collect();
    match relax_gap(1, &ns, &p(0.5, 0.2)) {
        Ok(t) => match t.plus_minus {
            Some(f) => (f.nu > 0.0 && f.nu_ci.0 > 0.0, format!("nu = {:.4}, 95% CI ({:.4}, {:.4}), ordering holds at all {} sizes", f.nu, f.nu_ci.0, f.nu_ci.1, t.rows.len())),
            None => (false, "no usable gaps".into()),
        },
        Err(e) => (false, e.to_string()),
    }
}

fn pressure_series() -> Outcome {
    let params = p(0.3, 0.1);
    let torus = TorusGeom::new(2, 2).unwrap();
    let graph = SpinGraph::torus(&torus);
    let est = pressure_perturbation(&params, 0.01, &torus, 0, 1, 20_000, 41).unwrap();
    let exact = oracle::expectation(&graph, &params, &|s: &[i8]| graph.bond_sum(s) as f64).unwrap() / graph.n_sites() as f64;
    let z1 = (est.first_order_coefficient - exact).abs() / est.first_order_se;

    let chain = p(0.3, 0.0);
    let ring = TorusGeom::new(1, 6).unwrap();
    let z = 0.02;
    let series = pressure_perturbation(&chain, z, &ring, 1, 2, 8000, 42).unwrap();
    let shifted = p(chain.beta + z, chain.h);
    let tm = oracle::transfer_pressure_1d(&shifted) - oracle::transfer_pressure_1d(&chain);
    let n = ring.n_sites();
    let finite = (oracle::ring_log_partition(n, &shifted) - oracle::ring_log_partition(n, &chain)) / n as f64;
    let tol = 3.0 * series.se + series.last_order_magnitude + (finite - tm).abs();
    let dev = (series.value - tm).abs();
    (
        z1 <= 3.0 && dev <= tol,
        format!(
            "first-order {:.4} vs {exact:.4} ({z1:.2} se); d=1 series {:.6} vs transfer {tm:.6}, |diff| {dev:.1e} <= {tol:.1e}",
            est.first_order_coefficient, series.value
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("polymer identity exactness", polymer_identity),
        ("cluster-expansion convergence", cluster_expansion),
        ("Ursell fixtures", ursell_fixtures),
        ("perfect-sampling exactness", perfect_sampling),
        ("beta = 0 closed forms", beta_zero),
        ("coarse-graining inclusion", containment),
        ("KUPD tail", kupd_tail_rate),
        ("FK coloring exactness", fk_coloring),
        ("magnetization relaxation", relaxation),
        ("pressure-series consistency", pressure_series),
    ];
    // ACCEPTANCE_ONLY=2,6 runs a subset
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let (ok, detail) = f();
        failed += usize::from(!ok);
        println!("criterion {:2} {} {name} [{:.1}s]: {detail}", i + 1, if ok { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64());
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

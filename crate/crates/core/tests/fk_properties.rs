use isingcx::fkfield::{disjoint_paths, edwards_sokal, enumerate_fk, minus_decomposition, FkGraph};
use isingcx::{oracle, BoxGeom, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn p(beta: f64, h: f64) -> ModelParams {
    ModelParams::new(beta, h).unwrap()
}

fn random_graph(rng: &mut ChaCha8Rng) -> FkGraph {
    let n = rng.gen_range(2..=6);
    let m = rng.gen_range(1..=12);
    let edges = (0..m)
        .map(|_| {
            let a = rng.gen_range(0..n);
            let b = (a + rng.gen_range(1..n)) % n;
            (a, b)
        })
        .collect();
    FkGraph::new(n, edges).unwrap()
}

// sum of c_k 1[S_k open] with c_k >= 0 is increasing
fn random_increasing(m: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, Vec<usize>)> {
    (0..rng.gen_range(1..=4))
        .map(|_| (rng.gen::<f64>(), (0..m).filter(|_| rng.gen_bool(0.3)).collect()))
        .collect()
}

fn eval(f: &[(f64, Vec<usize>)], omega: &[bool]) -> f64 {
    f.iter().filter(|(_, s)| s.iter().all(|&e| omega[e])).map(|(c, _)| c).sum()
}

#[test]
fn increasing_events_are_positively_correlated() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let g = random_graph(&mut rng);
        let params = p(rng.gen_range(0.0..1.0), rng.gen_range(-0.5..0.5));
        let fk = enumerate_fk(&g, &params).unwrap();
        let m = g.edges().len();
        let (f, h) = (random_increasing(m, &mut rng), random_increasing(m, &mut rng));
        let ef = fk.expectation(|w| eval(&f, w));
        let eh = fk.expectation(|w| eval(&h, w));
        let efh = fk.expectation(|w| eval(&f, w) * eval(&h, w));
        assert!(efh >= ef * eh - 1e-12, "{efh} < {ef} * {eh}");
    }
}

#[test]
fn edwards_sokal_reproduces_the_fk_law() {
    let g = FkGraph::new(4, vec![(0, 1), (1, 2), (2, 3)]).unwrap();
    let params = p(0.5, 0.2);
    let fk = enumerate_fk(&g, &params).unwrap();
    let ising = oracle::exact_distribution(&g.spin_graph(), &params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let reps = 40_000;
    let mut counts = vec![0usize; fk.probs.len()];
    for _ in 0..reps {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let idx = ising.iter().position(|&q| {
            acc += q;
            u < acc
        });
        let idx = idx.unwrap_or(ising.len() - 1);
        let spins: Vec<i8> = (0..4).map(|i| if idx >> i & 1 == 1 { 1 } else { -1 }).collect();
        let st = edwards_sokal(&g, &spins, &params, &mut rng).unwrap();
        counts[st.omega.iter().enumerate().fold(0, |b, (k, &o)| b | (usize::from(o) << k))] += 1;
    }
    for (c, &q) in counts.iter().zip(&fk.probs) {
        let se = (q * (1.0 - q) / reps as f64).sqrt();
        let hat = *c as f64 / reps as f64;
        assert!((hat - q).abs() <= 3.0 * se + 1e-9, "{hat} vs {q}");
    }
}

#[test]
fn minus_boundary_decomposition_matches_enumeration() {
    for n in 1..=4 {
        let b = BoxGeom::new(1, n).unwrap();
        let g = FkGraph::box_with_boundary(&b);
        let origin = b.origin();
        for params in [p(0.3, 0.0), p(0.4, 0.2), p(0.6, -0.1)] {
            let d = minus_decomposition(&g, origin, &params).unwrap();
            assert!((d.value() - d.direct).abs() < 1e-12);
            assert!(d.value() <= 0.0 || params.h > 0.0);
        }
    }
}

#[test]
fn disjoint_paths_count_edge_cuts() {
    let g = FkGraph::new(4, vec![(0, 1), (0, 2), (1, 3), (2, 3), (0, 3)]).unwrap();
    let target = [false, false, false, true];
    assert_eq!(disjoint_paths(&g, &[true; 5], 0, &target), 3);
    assert_eq!(disjoint_paths(&g, &[true, false, true, true, false], 0, &target), 1);
    assert_eq!(disjoint_paths(&g, &[false; 5], 0, &target), 0);
}

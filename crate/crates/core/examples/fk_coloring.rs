//! Random-cluster measure with a field: exact weights, colouring back to spins, and
//! an Edwards-Sokal sample from a perfect spin sample.

use isingcx::fkfield::{edwards_sokal_sample, enumerate_fk, perfect_spins, FkGraph};
use isingcx::infoperc::Explorer;
use isingcx::{oracle, BoxGeom, ModelParams};

fn main() -> isingcx::Result<()> {
    let p = ModelParams::new(0.4, 0.15)?;
    let g = FkGraph::box_free(&BoxGeom::new(2, 1)?);
    let fk = enumerate_fk(&g, &p)?;
    let colored = fk.spin_marginal(&p)?;
    let exact = oracle::exact_distribution(&g.spin_graph(), &p)?;
    let err = colored.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("3x3 box, {} edges: largest |coloured - Ising| = {err:.2e}", g.edges().len());
    let open = fk.expectation(|w| w.iter().filter(|&&o| o).count() as f64);
    println!("mean open edges {open:.4}");
    let cond = fk.conditional_open();
    let (lo, hi) = cond.iter().fold((1.0f64, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    println!("P(edge open | rest) ranges over [{lo:.4}, {hi:.4}]");

    let b = BoxGeom::new(2, 3)?;
    let gd = FkGraph::box_with_boundary(&b);
    let mut ex = Explorer::new(gd.n_vertices());
    if let Some(spins) = perfect_spins(&gd.spin_graph(), &p, &mut ex, 9, 1e4)? {
        let st = edwards_sokal_sample(&gd, &spins, &p, 10)?;
        let partial = gd.boundary().expect("boundary vertex");
        println!("7x7 box with boundary vertex: {} clusters, |C_partial| = {}", st.sizes.len(), st.sizes[st.cluster_of(partial)]);
    }
    Ok(())
}

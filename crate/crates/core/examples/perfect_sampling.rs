//! Coupling from the past on a 4x4 torus: empirical single-site and nearest-neighbour
//! statistics against exact enumeration.

use isingcx::infoperc::Explorer;
use isingcx::stats::{mean_se, replica_seed};
use isingcx::{oracle, ModelParams, SpinGraph, TorusGeom, UpdateRealization};

fn main() -> isingcx::Result<()> {
    let torus = TorusGeom::new(2, 2)?;
    let graph = SpinGraph::torus(&torus);
    let params = ModelParams::new(0.35, 0.2)?;
    let n = graph.n_sites();
    let all: Vec<usize> = (0..n).collect();
    let mut ex = Explorer::new(n);
    let (mut mag, mut nn, mut taus) = (Vec::new(), Vec::new(), Vec::new());
    for r in 0..20_000u64 {
        let mut real = UpdateRealization::sample(n, 0.0, replica_seed(42, r))?;
        let Some(c) = ex.coupling_time(&mut real, &graph, &params, &all, 0.0, 1e4)?.coupled() else { continue };
        mag.push(c.restriction[0] as f64);
        nn.push((c.restriction[0] * c.restriction[1]) as f64);
        taus.push(c.tau);
    }
    let exact_mag = oracle::correlation(&graph, &params, &[0])?;
    let exact_nn = oracle::correlation(&graph, &params, &[0, 1])?;
    let (m, m_se) = mean_se(&mag);
    let (c, c_se) = mean_se(&nn);
    let (t, t_se) = mean_se(&taus);
    println!("samples {}   mean coupling time {t:.3} +- {t_se:.3}", mag.len());
    println!("<s0>     cftp {m:.4} +- {m_se:.4}   exact {exact_mag:.4}");
    println!("<s0 s1>  cftp {c:.4} +- {c_se:.4}   exact {exact_nn:.4}");
    Ok(())
}

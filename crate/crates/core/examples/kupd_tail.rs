//! Tail of the coarse size of the killed update set of a block on a 30x30 torus.

use isingcx::coarsegrain::kupd_tail;
use isingcx::polymer::DEFAULT_T_MAX;
use isingcx::{CoarseLattice, ModelParams, SiteSet, TorusGeom};

fn main() -> isingcx::Result<()> {
    let coarse = CoarseLattice::new(&TorusGeom::new(2, 15)?, 1)?;
    let v = SiteSet::from_iter(coarse.n_coarse(), [0]);
    let thresholds: Vec<usize> = (1..=coarse.n_coarse()).collect();
    let run = kupd_tail(&ModelParams::new(0.2, 0.0)?, &coarse, &v, &thresholds, 2000, 3, DEFAULT_T_MAX)?;
    let t = &run.tail;
    println!("replicas {} censored {}", run.replicas, run.censored);
    for i in (0..t.thresholds.len()).step_by(10) {
        println!("  M = {:3}  P(|[KUPD]_L| >= M) = {:.4} +- {:.4}", t.thresholds[i], t.survival[i], t.se[i]);
    }
    let f = &t.fit;
    println!("rate per coarse site {:.5}, 95% CI ({:.5}, {:.5})", f.rate, f.rate_ci.0, f.rate_ci.1);
    Ok(())
}

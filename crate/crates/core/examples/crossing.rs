//! Probability that the boundary cluster reaches the inner box under minus boundary
//! condition, by rejection and by reweighting.

use isingcx::fkfield::crossing_prob;
use isingcx::ModelParams;

fn main() -> isingcx::Result<()> {
    let p = ModelParams::new(0.2, 0.05)?;
    for n in [2, 4, 6] {
        let e = crossing_prob(2, n, 2, &p, 4000, n as u64, 1e4)?;
        println!(
            "N = {n}: rejection {:.4} +- {:.4} ({} accepted), reweighted {:.4} +- {:.4}, agree {}, disjoint paths {:.2}",
            e.rejection, e.rejection_se, e.accepted, e.reweighted, e.reweighted_se, e.agree, e.mean_disjoint_paths
        );
    }
    Ok(())
}

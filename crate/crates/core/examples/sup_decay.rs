//! Decay of `P(SUP != empty)` with the lag, at infinite temperature (rate 1) and at
//! a moderate coupling.

use isingcx::infoperc::estimate_sup_decay;
use isingcx::{ModelParams, SpinGraph, TorusGeom};

fn main() -> isingcx::Result<()> {
    let graph = SpinGraph::torus(&TorusGeom::new(2, 4)?);
    let lags: Vec<f64> = (0..=16).map(|i| i as f64 * 0.5).collect();
    for beta in [0.0, 0.2] {
        let fit = estimate_sup_decay(&graph, &ModelParams::new(beta, 0.0)?, &lags, 20_000, 1)?;
        println!("beta = {beta}");
        for (i, l) in lags.iter().enumerate().step_by(2) {
            println!("  t' = {l:4.1}  p = {:.5} +- {:.5}", fit.p_hat[i], fit.se[i]);
        }
        println!("  rate {:.4} +- {:.4}, 95% CI ({:.4}, {:.4})", fit.rate, fit.rate_se, fit.rate_ci.0, fit.rate_ci.1);
    }
    Ok(())
}

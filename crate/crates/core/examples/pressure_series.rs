//! Cluster-expansion estimate of `psi(beta + z) - psi(beta)` built from perfect
//! samples, against transfer-matrix values on a ring.

use isingcx::oracle::{ring_log_partition, transfer_pressure_1d};
use isingcx::polymer::pressure_perturbation;
use isingcx::{ModelParams, TorusGeom};

fn main() -> isingcx::Result<()> {
    let p = ModelParams::new(0.3, 0.0)?;
    let torus = TorusGeom::new(1, 6)?;
    let n = torus.n_sites();
    for z in [0.01, 0.02, 0.04] {
        let est = pressure_perturbation(&p, z, &torus, 1, 2, 4000, 3)?;
        let q = ModelParams::new(p.beta + z, p.h)?;
        let ring = (ring_log_partition(n, &q) - ring_log_partition(n, &p)) / n as f64;
        let tm = transfer_pressure_1d(&q) - transfer_pressure_1d(&p);
        println!(
            "z = {z}: series {:.6} +- {:.6} (last order {:.1e}), ring {ring:.6}, infinite volume {tm:.6}",
            est.value, est.se, est.last_order_magnitude
        );
    }
    let est = pressure_perturbation(&p, 0.01, &torus, 0, 1, 4000, 4)?;
    println!("first-order coefficient {:.4} +- {:.4} vs <s0 s1> = {:.4}", est.first_order_coefficient, est.first_order_se, p.beta.tanh());
    Ok(())
}

//! Exact reference values: rings, tori, boxes and the infinite-volume pressures.
//!
//! `--write-fixtures PATH` also dumps the shared fixture table as JSON.

use isingcx::oracle::{self, Geometry};
use isingcx::{BoundaryCondition, BoxGeom, ModelParams, TorusGeom};

fn main() -> isingcx::Result<()> {
    let p = ModelParams::new(0.4, 0.1)?;
    for n in [4, 8, 12] {
        let t = TorusGeom::new(1, n / 2)?;
        let e = oracle::exact_partition(&Geometry::Torus(t), &p)?;
        println!("ring {n:2}: log Z enumeration {:.12}  transfer {:.12}", e.value, oracle::ring_log_partition(n, &p));
    }
    println!("chain pressure {:.10}", oracle::transfer_pressure_1d(&p));
    let g = Geometry::Torus(TorusGeom::new(2, 2)?).spin_graph()?;
    println!("4x4 torus: log Z {:.10}, <s0 s1> {:.10}", oracle::log_partition(&g, &p)?, oracle::correlation(&g, &p, &[0, 1])?);
    for bc in [BoundaryCondition::Plus, BoundaryCondition::Free, BoundaryCondition::Minus] {
        let e = oracle::exact_expectation(&Geometry::Box(BoxGeom::new(2, 1)?, bc), &p, &|s: &[i8]| s[4] as f64)?;
        println!("3x3 box {bc:?}: <s_center> {:.10}", e.value);
    }
    for beta in [0.3, 0.44, 0.6] {
        println!("square lattice h = 0, beta = {beta}: pressure {:.10}", oracle::onsager_pressure(beta)?);
    }
    let args: Vec<String> = std::env::args().collect();
    if let Some(i) = args.iter().position(|a| a == "--write-fixtures") {
        let path = args.get(i + 1).expect("--write-fixtures needs a path");
        let text = serde_json::to_string_pretty(&oracle::standard_fixtures()?).expect("fixtures serialize");
        std::fs::write(path, text + "\n")?;
        println!("wrote {path}");
    }
    Ok(())
}

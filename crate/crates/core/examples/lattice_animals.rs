//! Rooted lattice animals on Z^2 and on the space-time graph, with the growth ratio.

use isingcx::animals::{count_by_size, hypercubic_window};
use isingcx::coarsegrain::{count_lattice_animals, gamma_adjacency};
use isingcx::{CoarseLattice, SpaceTimeGraph, TorusGeom};

fn main() -> isingcx::Result<()> {
    let (adj, root) = hypercubic_window(2, 9);
    let counts = count_by_size(&adj, root, 9);
    println!("Z^2 rooted animals:");
    for k in 1..counts.len() {
        let ratio = if k > 1 { counts[k] as f64 / counts[k - 1] as f64 } else { f64::NAN };
        println!("  k = {k}  {:8}  ratio {ratio:.3}", counts[k]);
    }
    let coarse = CoarseLattice::new(&TorusGeom::new(1, 15)?, 1)?;
    let gamma = SpaceTimeGraph::new(&coarse, 10)?;
    let adj = gamma_adjacency(&gamma);
    let root = gamma.vertex(0, 5);
    println!("space-time graph (max degree {}):", gamma.max_degree_bound());
    for k in 1..=6 {
        println!("  k = {k}  {}", count_lattice_animals(&adj, root, k)?);
    }
    Ok(())
}

//! Good and bad space-time boxes, the cluster of a block, and the inclusion of the
//! killed update set in the projected cluster neighbourhood.

use isingcx::coarsegrain::{clusters, domination_check, kupd_coarse_containment, paint_boxes_seeded};
use isingcx::polymer::DEFAULT_T_MAX;
use isingcx::{CoarseLattice, ModelParams, SiteSet, SpaceTimeGraph, TorusGeom};

fn draw(omega: &isingcx::coarsegrain::PercolationConfig, gamma: &SpaceTimeGraph, width: usize) {
    for layer in (0..gamma.horizon()).rev() {
        let row: String = (0..width).map(|c| if omega.is_open(gamma.vertex(c, layer)) { '#' } else { '.' }).collect();
        println!("  {row}");
    }
}

fn main() -> isingcx::Result<()> {
    let params = ModelParams::new(0.1, 0.0)?;
    let coarse = CoarseLattice::new(&TorusGeom::new(1, 15)?, 1)?;
    let gamma = SpaceTimeGraph::new(&coarse, 8)?;

    let omega = paint_boxes_seeded(5, &params, &gamma)?;
    println!("L = 1, bad boxes: {:.3} of {}", omega.bad_fraction(), gamma.n_vertices());
    draw(&omega, &gamma, coarse.n_coarse());

    // boxes only start to be good once L is a few hundred
    let wide = CoarseLattice::new(&TorusGeom::new(1, 1604)?, 200)?;
    let wide_gamma = SpaceTimeGraph::new(&wide, 8)?;
    let wide_omega = paint_boxes_seeded(5, &params, &wide_gamma)?;
    println!("L = 200, bad boxes: {:.3} of {}", wide_omega.bad_fraction(), wide_gamma.n_vertices());
    draw(&wide_omega, &wide_gamma, wide.n_coarse());
    let cs = clusters(&omega, &[gamma.vertex(0, 0)])?;
    println!("cluster of block 0: {} boxes, projection {:?}", cs.cluster.len(), cs.projection.to_vec());

    let v = SiteSet::from_iter(coarse.n_coarse(), [0]);
    let rep = kupd_coarse_containment(&params, &coarse, &v, &[1, 2, 3, 4], 2000, 6, 200, DEFAULT_T_MAX)?;
    println!(
        "containment over {} replicas: fine violations {}, coarse violations {}, cardinality flags {}, truncated {}",
        rep.replicas, rep.fine_violations, rep.coarse_violations, rep.cardinality_flags, rep.truncated
    );

    let dom = domination_check(&params, &gamma, 300, 8)?;
    println!("domination: p_hat {:.4}, unconditional {:.4} +- {:.4}, pass {}", dom.p_hat, dom.unconditional_bad, dom.unconditional_se, dom.pass);
    Ok(())
}

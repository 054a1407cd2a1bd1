//! Exact `<s0>` in boxes under plus, free and minus boundary conditions and the
//! exponential decay of the gaps.

use isingcx::fkfield::relax_gap;
use isingcx::ModelParams;

fn main() -> isingcx::Result<()> {
    let ns: Vec<usize> = (1..=30).collect();
    let t = relax_gap(1, &ns, &ModelParams::new(0.5, 0.2)?)?;
    println!("   N        plus        free       minus    plus-minus");
    for r in t.rows.iter().step_by(3) {
        println!("{:4} {:11.8} {:11.8} {:11.8} {:13.4e}", r.n, r.plus, r.free, r.minus, r.plus_minus());
    }
    for (name, fit) in [("plus-minus", &t.plus_minus), ("plus-free", &t.plus_free), ("free-minus", &t.free_minus)] {
        if let Some(f) = fit {
            println!("{name}: nu = {:.4} +- {:.4}, 95% CI ({:.4}, {:.4}) over {} sizes", f.nu, f.nu_se, f.nu_ci.0, f.nu_ci.1, f.points);
        }
    }
    let t2 = relax_gap(2, &[0, 1, 2], &ModelParams::new(0.3, 0.1)?)?;
    for r in &t2.rows {
        println!("d = 2, N = {}: plus {:.6} free {:.6} minus {:.6}", r.n, r.plus, r.free, r.minus);
    }
    Ok(())
}

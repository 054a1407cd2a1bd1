//! Ursell functions, the convergence criterion and the truncated cluster expansion of
//! a gas of intervals, compared with the exact partition function.

use isingcx::polymer::{interval_model, kp_check, log_z_truncated, polymer_z_exact, ursell};
use num_rational::Ratio;

fn main() -> isingcx::Result<()> {
    let q = |x: i64| Ratio::<i64>::from_integer(x);
    for n in 1..=4 {
        // n mutually overlapping polymers
        let delta: Vec<Vec<Ratio<i64>>> = vec![vec![q(0); n]; n];
        println!("U(n = {n}, all overlapping) = {}", ursell(&delta)?);
    }

    let model = interval_model(10, 2, 0.05)?;
    let kp = kp_check(&model, model.sizes())?;
    let exact = polymer_z_exact(&model)?;
    println!("\n{} interval polymers, criterion holds: {} (min slack {:.3})", model.len(), kp.pass, kp.min_slack);
    for order in 1..=8 {
        let rep = log_z_truncated(&model, order)?;
        println!("  order {order}: |exp(log Z_trunc) - Z| = {:.3e}", (rep.value.exp() - exact).norm());
    }
    Ok(())
}

//! The expectation of a product of local functions under a dependency encoding
//! equals the partition function of the induced hard-core polymer gas.

use isingcx::polymer::{verify_polymer_identity, DependencyEncoding, LocalFunction};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> isingcx::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);

    // product measure: every random set is the site itself
    let phi = DependencyEncoding::independent(&[vec![0.2, 0.8], vec![0.5, 0.5], vec![0.9, 0.1]])?;
    let f = LocalFunction { support: vec![0, 2], table: vec![Complex64::new(2.0, 0.0), Complex64::new(0.5, 1.0), Complex64::new(-1.0, 0.0), Complex64::new(1.0, 0.0)] };
    println!("product measure, one function: residual {:.2e}", verify_polymer_identity(&phi, &[f])?);

    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.gen_range(2..=6);
        let phi = DependencyEncoding::random_blocks(n, &mut rng)?;
        let k = rng.gen_range(1..=6);
        let fs = LocalFunction::random(n, phi.alphabet(), k, &mut rng);
        worst = worst.max(verify_polymer_identity(&phi, &fs)?);
    }
    println!("50 random block encodings: largest residual {worst:.2e}");
    Ok(())
}

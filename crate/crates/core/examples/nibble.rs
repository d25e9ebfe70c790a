//! Random greedy line packings of PG(n−1, 2) and their leaves.

use num_rational::BigRational;
use qdesigns::pipeline::greedy_nibble;
use qdesigns::qsystem::SignedQSystem;
use qdesigns::subspace::enumerate_grassmannian;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> qdesigns::Result<()> {
    for n in [4, 6, 8] {
        let points = SignedQSystem::indicator(2, n, 1, &enumerate_grassmannian(n, 1, 2)?);
        let lines = enumerate_grassmannian(n, 2, 2)?;
        let mut total = BigRational::from_integer(0.into());
        for seed in 0..10 {
            let run = greedy_nibble(&points, &lines, None, &mut ChaCha8Rng::seed_from_u64(seed))?;
            assert!(run.is_matching()?);
            total += run.leave_fraction();
        }
        println!("n = {}: mean leave fraction over 10 seeds = {}", n, total / BigRational::from_integer(10.into()));
    }
    Ok(())
}

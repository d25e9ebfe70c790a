//! Gaussian binomials, canonical enumeration of Grassmannians and subspace
//! lattice operations.

use qdesigns::subspace::{enumerate_grassmannian, gaussian_binomial, red_profiles, Subspace};

fn main() -> qdesigns::Result<()> {
    for (n, k, q) in [(4, 2, 2), (6, 3, 2), (4, 2, 3)] {
        println!("[{} {}]_{} = {}", n, k, q, gaussian_binomial(n, k, q));
    }
    let lines = enumerate_grassmannian(4, 2, 2)?;
    println!("first lines of PG(3,2): {:?}", lines.iter().take(3).map(|x| x.literal()).collect::<Vec<_>>());

    let a = Subspace::coordinate(2, 4, &[0, 1]);
    let b = Subspace::span(2, 4, &[0b0011, 0b0100]);
    println!("A = {}, B = {}", a, b);
    println!("A ∧ B = {} (dim {}), A ∨ B = {} (dim {})", a.meet(&b), a.meet(&b).dim(), a.join(&b), a.join(&b).dim());
    println!("points of B: {:?}", b.subspaces(1).iter().map(|x| x.literal()).collect::<Vec<_>>());
    println!("RREF profiles of rank 1 in F_2^(1x2): {}", red_profiles(2, 1, 2)?.len());
    Ok(())
}

//! Divisibility conditions, the inclusion-matrix determinant, local
//! decoding and exact lattice membership with certificates.

use qdesigns::lattice::{divisibility_check, kantor, lattice_membership, local_decode, Membership};
use qdesigns::qsystem::SignedQSystem;
use qdesigns::subspace::enumerate_grassmannian;

fn main() -> qdesigns::Result<()> {
    for n in 2..=5 {
        for lambda in 1..=3 {
            let div = divisibility_check(n, 2, 1, lambda, 2)?;
            let all = SignedQSystem::indicator(2, n, 1, &enumerate_grassmannian(n, 1, 2)?).scaled(&lambda.into());
            let member = lattice_membership(&all, 2)?.is_member();
            println!("n={} λ={}: divisibility {} lattice {}", n, lambda, div.pass, member);
        }
    }
    for (q, r, s) in [(2, 1, 2), (2, 1, 3), (3, 1, 2)] {
        let (m, delta) = kantor(q, r, s)?;
        let g = local_decode(q, r, s)?;
        g.verify()?;
        println!("(q,r,s)=({},{},{}): side {}, Δ = {}, decode support {}", q, r, s, m.side(), delta, g.coeffs.len());
    }
    let point = SignedQSystem::indicator(2, 3, 1, &enumerate_grassmannian(3, 1, 2)?[..1]);
    if let Membership::NonMember(c) = lattice_membership(&point, 2)? {
        println!("a single point is not a boundary: pairing {} mod {}", c.pairing, c.modulus);
    }
    Ok(())
}

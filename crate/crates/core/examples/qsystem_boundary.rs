//! Signed q-systems: boundary operator, codegrees and the text format.

use qdesigns::qsystem::{codegree_profile, parse, serialize, SignedQSystem};
use qdesigns::subspace::enumerate_grassmannian;

fn main() -> qdesigns::Result<()> {
    let lines = enumerate_grassmannian(3, 2, 2)?;
    let mut phi = SignedQSystem::new(2, 3, 2);
    phi.add_term(lines[0].clone(), 2);
    phi.add_term(lines[1].clone(), -1);
    let d = phi.boundary(1)?;
    println!("Φ has {} lines, ∂Φ has {} points, total {}", phi.len(), d.len(), d.total());
    let (pos, neg) = codegree_profile(&d)?;
    println!("codegree profile of ∂Φ: +{} / -{}", pos, neg);

    let text = serialize(&phi);
    print!("{}", text);
    assert_eq!(parse(&text)?, phi);

    let fano = SignedQSystem::indicator(2, 3, 2, &lines);
    println!("all 7 lines of the Fano plane cover each point {} times", fano.boundary(1)?.max_abs());
    Ok(())
}

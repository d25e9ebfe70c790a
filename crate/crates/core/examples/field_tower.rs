//! Arithmetic in a tower F_2 ⊂ F_4 ⊂ F_16 and an F_q-linear injection of K
//! into a larger ambient space.

use qdesigns::fields::{sample_injection, FieldOp, FieldTower, Level};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> qdesigns::Result<()> {
    let tower = FieldTower::new("2^1:2:2".parse()?)?;
    println!("tower {}: |L| = {}, |K| = {}", tower.spec(), tower.lfield().order(), tower.kfield().order());

    let a = tower.alpha();
    let a5 = tower.arith(a, a, FieldOp::Pow(5))?;
    let inv = tower.arith(a, a, FieldOp::Inv)?;
    println!("α^5 = {:?}, α^-1 = {:?}", a5, inv);
    let beta = tower.elem(Level::L, 2)?;
    println!("L generator {:?} lives in K as {}", beta, tower.l_to_k(beta.code));

    let x = 3;
    println!("F_q-span of x = {}: {}", x, tower.fq_span(&[x]));
    println!("L-span of x: {} (L-dim {})", tower.l_span(&[x]), tower.l_dim(&[x]));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let iota = sample_injection(&tower, 6, &mut rng)?;
    let v = iota.inject(x);
    println!("ι(x) = {:06b} in F_2^6, ι^-1(ι(x)) = {:?}", v, iota.inject_inverse(v));
    println!("image of K: {}", iota.image_space());
    Ok(())
}

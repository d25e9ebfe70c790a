//! Generic (N, x*) over F_2 ⊂ F_4 ⊂ F_16 and absorbers for random
//! L-independent parameters.

use qdesigns::fields::{FieldTower, Level};
use qdesigns::gadgets::{build_absorber, find_partner, generic_matrix, joint_check, verify_absorber, verify_generic};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> qdesigns::Result<()> {
    let tower = FieldTower::new("2^1:2:2".parse()?)?;
    let n = generic_matrix(&tower, Level::L, 2, 1, 1, 0)?;
    let gen = verify_generic(&tower, &n, 1, 2)?;
    println!("N exponents {:?}: bullets 1-2 {}, bullet 3 {}", n.exponents, gen.construction_pass(), gen.bullet3.pass);
    let xstar = find_partner(&tower, &n, 1, 1, false)?;
    println!("x* exponents {:?}, joint check {}", xstar.exponents, joint_check(&tower, &n, &xstar, 1, 2)?.pass);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut passed = 0;
    while passed < 5 {
        let w: Vec<u32> = (0..2).map(|_| rng.gen_range(0..16)).collect();
        if tower.l_dim(&w) != 2 {
            continue;
        }
        let a = build_absorber(&tower, &n, &xstar, &w[..1], &w[1..])?;
        let rep = verify_absorber(&tower, &a)?;
        println!("(w',w) = {:?}: root {}, |P_in| = {}, pass {}, recovery {:?}", w, a.root, a.p_in.len(), rep.pass, rep.recovery_count);
        passed += 1;
    }
    Ok(())
}

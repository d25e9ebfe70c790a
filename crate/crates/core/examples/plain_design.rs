//! The plain algebraic design on V = K and exact design verification.

use qdesigns::pipeline::verify_design;
use qdesigns::template::plain_design_params;

fn main() -> qdesigns::Result<()> {
    for (q, n, s, r, ell, m) in [(2, 4, 2, 1, 2, 2), (2, 6, 2, 1, 2, 3), (2, 6, 3, 1, 3, 2), (3, 4, 2, 1, 2, 2)] {
        let pd = plain_design_params(q, n, s, r, ell, m)?;
        let lambda: u64 = pd.lambda.clone().try_into().expect("small λ");
        let rep = verify_design(&pd.blocks, q, n, s, r, lambda, false)?;
        println!("q={} n={} s={} ℓ={} m={}: {} blocks, λ = {}, verified {}", q, n, s, ell, m, pd.blocks.len(), lambda, rep.pass);
    }
    Ok(())
}

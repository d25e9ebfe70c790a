//! Builds and verifies the smallest subspace exchange for (q,s,r) = (2,2,1).

use qdesigns::gadgets::{build_exchange, verify_exchange, ExchangeBudget, ExchangeGadget};

fn main() -> qdesigns::Result<()> {
    let g = build_exchange(2, 2, 1, ExchangeBudget::default())?;
    println!("k1={} k2={} u={} d={} ambient F_2^{}", g.k1, g.k2, g.u, g.d, g.ambient_dim());
    let rep = verify_exchange(&g)?;
    println!("families {:?}, all bullets pass: {}", rep.family_sizes, rep.pass);
    let text = g.to_text();
    assert_eq!(ExchangeGadget::from_text(&text)?, g);
    println!("round trip of {} bytes ok", text.len());
    Ok(())
}

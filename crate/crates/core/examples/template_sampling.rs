//! Samples templates, measures obstruction and plants blocks to make a root
//! configuration compatible.

use num_rational::BigRational;
use qdesigns::template::{config_compatible, sample_template, verify_template, TemplateParams, TemplateState};

fn main() -> qdesigns::Result<()> {
    let mut params = TemplateParams {
        q: 2,
        n: 5,
        s: 2,
        r: 1,
        tower: "2^1:2:2".parse()?,
        z: 1,
        tau: BigRational::new(1.into(), 2.into()),
        d: 1,
        seed: 0,
    };
    // Each candidate block is admitted with probability (τ/3)^3 here, so
    // most samples are empty; list the seeds that are not.
    let mut empty = 0;
    for seed in 0..60 {
        params.seed = seed;
        let st = sample_template(&params)?;
        let rep = verify_template(&st)?;
        if rep.members == 0 {
            empty += 1;
            continue;
        }
        println!(
            "seed {}: {} members, |G_tem| = {}, well formed {}, obstruction {:?}",
            seed, rep.members, rep.g_tem_size, rep.pass, rep.obstruction_rs
        );
    }
    println!("{} of 60 samples were empty", empty);

    params.n = 4;
    let mut st = sample_template(&params)?;
    let beta = (1..16).find(|&x| st.tower().l_dim(&[1, x]) == 2).expect("K is larger than L");
    let root = st.plant_compatible(0, &[1, beta])?;
    let rep = config_compatible(&st, &root, 0)?;
    println!("planted root {}: compatible {} with {} template blocks", root, rep.pass, st.members.len());
    let text = st.to_text();
    assert_eq!(TemplateState::from_text(&text)?, st);
    println!("template text round trips ({} lines)", text.lines().count());
    Ok(())
}

//! End-to-end runs: the plain shortcut at P0 and the general path at n = 6,
//! printing each stage's status.

use qdesigns::pipeline::{run_pipeline, PipelineConfig};

fn show(text: &str, seed: u64) -> qdesigns::Result<()> {
    let config: PipelineConfig = serde_json::from_str(text).expect("valid config");
    let rep = run_pipeline(&config, seed)?;
    println!("n={} λ={} path={} success={}", config.n, config.lambda, rep.path, rep.success);
    for st in &rep.stages {
        println!("  {:20} {:8} {}", st.name, st.status, st.witness.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn main() -> qdesigns::Result<()> {
    show(r#"{"q":2,"n":4,"s":2,"r":1,"lambda":3,"tower":"2^1:2:2","z":1,"tau":"1","d":1}"#, 0)?;
    show(r#"{"q":2,"n":3,"s":2,"r":1,"lambda":1,"tower":"2^1:2:2","z":1,"tau":"1","d":1}"#, 0)?;
    for seed in 0..3 {
        show(r#"{"q":2,"n":6,"s":2,"r":1,"lambda":1,"tower":"2^1:2:2","z":1,"tau":"1/2","d":1}"#, seed)?;
    }
    Ok(())
}

#![allow(dead_code)]

use num_rational::BigRational;
use qdesigns::fields::{FieldTower, Level};
use qdesigns::gadgets::{build_absorber, build_exchange, find_partner, generic_matrix, AbsorberFlip, ExchangeBudget, ExchangeGadget, GenericMatrix};
use qdesigns::lattice::{local_decode, DecodeGadget};
use qdesigns::pipeline::{run_pipeline, PipelineConfig, PipelineReport};
use qdesigns::qsystem::{parse, serialize, SignedQSystem};
use qdesigns::subspace::{enumerate_grassmannian, Subspace};
use qdesigns::template::{config_compatible, plain_design_params, sample_template, TemplateParams, TemplateState};
use qdesigns::{Error, Result};
use std::collections::HashSet;
use std::path::PathBuf;

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

pub fn p0_params(n: u32, seed: u64, tau: (i64, i64)) -> TemplateParams {
    TemplateParams {
        q: 2,
        n,
        s: 2,
        r: 1,
        tower: "2^1:2:2".parse().unwrap(),
        z: 1,
        tau: BigRational::new(tau.0.into(), tau.1.into()),
        d: 1,
        seed,
    }
}

pub fn config(text: &str) -> PipelineConfig {
    serde_json::from_str(text).expect("valid config")
}

pub const P0_CONFIG: &str = r#"{"q":2,"n":4,"s":2,"r":1,"lambda":3,"tower":"2^1:2:2","z":1,"tau":"1","d":1}"#;
pub const N6_CONFIG: &str = r#"{"q":2,"n":6,"s":2,"r":1,"lambda":1,"tower":"2^1:2:2","z":1,"tau":"1/2","d":1}"#;

/// One representative x per L-line x·L of K.
pub fn line_reps(st: &TemplateState) -> Vec<u32> {
    let tower = st.tower();
    let mut seen = HashSet::new();
    tower.k_elements().skip(1).filter(|&x| seen.insert(tower.l_span(&[x]))).collect()
}

/// Whether the block of color 0 through x misses G_tem.
pub fn line_is_free(st: &TemplateState, x: u32) -> bool {
    st.block(0, &[x]).subspaces(1).iter().all(|y| st.color_of(y).is_none())
}

pub fn empty_template(n: u32) -> TemplateState {
    let mut st = sample_template(&p0_params(n, 1, (1, 2))).unwrap();
    st.config.values_mut().for_each(|c| c.y = false);
    st.rebuild().unwrap();
    st
}

/// P0 template with one compatible root and all five L-lines planted, plus x*.
pub fn p0_absorbable() -> (TemplateState, Subspace, GenericMatrix) {
    let mut st = empty_template(4);
    let l: HashSet<u32> = st.tower().l_elements_in_k().into_iter().collect();
    let beta = st.tower().k_elements().find(|x| !l.contains(x)).unwrap();
    let root = st.plant_compatible(0, &[1, beta]).unwrap();
    for x in line_reps(&st) {
        if line_is_free(&st, x) {
            st.plant(0, &[x]).unwrap();
        }
    }
    assert!(config_compatible(&st, &root, 0).unwrap().pass);
    let xstar = find_partner(st.tower(), &st.n_mat, 1, 1, false).unwrap();
    (st, root, xstar)
}

pub fn p0_absorber() -> AbsorberFlip {
    let tower = FieldTower::new("2^1:2:2".parse().unwrap()).unwrap();
    let n = generic_matrix(&tower, Level::L, 2, 1, 1, 0).unwrap();
    let xstar = find_partner(&tower, &n, 1, 1, false).unwrap();
    build_absorber(&tower, &n, &xstar, &[3], &[6]).unwrap()
}

fn signed_fano() -> SignedQSystem {
    let lines = enumerate_grassmannian(3, 2, 2).unwrap();
    let mut phi = SignedQSystem::new(2, 3, 2);
    for (k, x) in lines.iter().enumerate() {
        phi.add_term(x.clone(), k as i64 - 3);
    }
    phi
}

/// Every golden artifact, regenerated from fixed seeds.
pub fn golden_artifacts() -> Vec<(&'static str, String)> {
    let plain = plain_design_params(2, 4, 2, 1, 2, 2).unwrap();
    let mut plain_q = SignedQSystem::new(2, 4, 2);
    plain.blocks.iter().for_each(|b| plain_q.add_term(b.clone(), 1));
    let template = sample_template(&p0_params(5, 18, (1, 2))).unwrap();
    vec![
        ("fano_signed.qs", serialize(&signed_fano())),
        ("plain_2_4_2_1.qs", serialize(&plain_q)),
        ("decode_2_1_2.txt", local_decode(2, 1, 2).unwrap().to_text()),
        ("decode_3_1_2.txt", local_decode(3, 1, 2).unwrap().to_text()),
        ("exchange_2_2_1.txt", build_exchange(2, 2, 1, ExchangeBudget::default()).unwrap().to_text()),
        ("absorber_p0.txt", p0_absorber().to_text()),
        ("template_n5_seed18.txt", template.to_text()),
        ("report_p0.json", run_pipeline(&config(P0_CONFIG), 1).unwrap().to_json()),
        ("report_n6.json", run_pipeline(&config(N6_CONFIG), 1).unwrap().to_json()),
    ]
}

/// Parses a golden file by name and writes it back out.
pub fn reserialize(name: &str, text: &str) -> Result<String> {
    let out = if name.ends_with(".qs") {
        serialize(&parse(text)?)
    } else if name.starts_with("decode") {
        DecodeGadget::from_text(text)?.to_text()
    } else if name.starts_with("exchange") {
        ExchangeGadget::from_text(text)?.to_text()
    } else if name.starts_with("absorber") {
        AbsorberFlip::from_text(text)?.to_text()
    } else if name.starts_with("template") {
        TemplateState::from_text(text)?.to_text()
    } else if name.starts_with("report") {
        PipelineReport::from_json(text)?.to_json()
    } else {
        return Err(Error::InvalidParameter(format!("unknown golden kind {}", name)));
    };
    Ok(out)
}

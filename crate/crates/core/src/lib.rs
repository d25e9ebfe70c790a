pub mod error;
pub mod extension;
pub mod fields;
pub mod gadgets;
pub mod gf;
pub mod lattice;
pub mod linalg;
pub mod pipeline;
pub mod qsystem;
pub mod selfcheck;
pub mod subspace;
pub mod template;
pub mod vector;

pub use error::{Error, Result};

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod error;
pub mod evolve;
pub mod fitting;
pub mod helmholtz;
pub mod kvop;
pub mod linalg;
pub mod mesh;
pub mod provenance;
pub mod quasimode;
pub mod spectral;

pub use error::{Error, Result};

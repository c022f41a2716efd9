//! Domains, grids and the two assembled spatial operators.
//!
//! Both operators come from one finite-volume edge/arm structure: the
//! Laplacian uses unit coefficients, `div a grad` samples `a` at the link
//! midpoints. Boxes and tori give the standard `2d+1` stencil; on the
//! ellipse, links that leave the domain end at the exact boundary point.

mod damping;
mod domain;
mod grid;
mod region;

pub use damping::{DampingFn, DampingProfile, DampingShape};
pub use domain::{Boundary, DomainKind, DomainSpec};
pub use grid::{Arm, Edge, Grid, Node, MIN_CUT};
pub use region::{smoothstep, Region};

/// Spectral quantities are trusted only while `lambda * h` stays below this.
pub const LAMBDA_H_TRUST: f64 = 0.2;

/// Time steps are chosen so that `dt * nu` stays below this for trusted `nu`.
pub const DT_NU_TRUST: f64 = 0.5;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Interval,
    Rectangle,
    Torus,
    Ellipse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Dirichlet,
    Periodic,
}

/// Geometry of the spatial domain.
///
/// Boxes and tori are `prod (0, extents[i])`; the ellipse is
/// `a x^2 + b y^2 < 1` with `extents = [a, b]`, centred at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub extents: Vec<f64>,
    pub boundary: Boundary,
}

impl DomainSpec {
    pub fn new(kind: DomainKind, extents: Vec<f64>, boundary: Boundary) -> Result<Self> {
        let spec = DomainSpec {
            kind,
            extents,
            boundary,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn interval(length: f64) -> Result<Self> {
        Self::new(DomainKind::Interval, vec![length], Boundary::Dirichlet)
    }

    pub fn rectangle(sides: &[f64]) -> Result<Self> {
        Self::new(DomainKind::Rectangle, sides.to_vec(), Boundary::Dirichlet)
    }

    pub fn torus(sides: &[f64]) -> Result<Self> {
        Self::new(DomainKind::Torus, sides.to_vec(), Boundary::Periodic)
    }

    pub fn ellipse(a: f64, b: f64) -> Result<Self> {
        Self::new(DomainKind::Ellipse, vec![a, b], Boundary::Dirichlet)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDomain(m));
        if let Some(e) = self.extents.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return bad(format!("extents must be positive and finite, got {e}"));
        }
        let n = self.extents.len();
        match self.kind {
            DomainKind::Interval if n != 1 => bad(format!("interval takes 1 extent, got {n}")),
            DomainKind::Rectangle if !(2..=3).contains(&n) => bad(format!("rectangle takes 2 or 3 extents, got {n}")),
            DomainKind::Torus if !(1..=3).contains(&n) => bad(format!("torus takes 1 to 3 extents, got {n}")),
            DomainKind::Ellipse if n != 2 => bad(format!("ellipse takes coefficients [a, b], got {n} values")),
            DomainKind::Ellipse if self.extents[0] >= self.extents[1] => bad(format!(
                "ellipse needs a < b (non-circular), got a = {}, b = {}",
                self.extents[0], self.extents[1]
            )),
            DomainKind::Torus if self.boundary == Boundary::Dirichlet => {
                bad("boundary: torus requires periodic boundary".into())
            }
            DomainKind::Ellipse if self.boundary == Boundary::Periodic => {
                bad("boundary: ellipse requires dirichlet boundary".into())
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    /// Semi-axes `(a^{-1/2}, b^{-1/2})` of an ellipse.
    pub fn semi_axes(&self) -> Option<(f64, f64)> {
        (self.kind == DomainKind::Ellipse).then(|| (self.extents[0].powf(-0.5), self.extents[1].powf(-0.5)))
    }
}

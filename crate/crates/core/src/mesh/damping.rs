use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::region::{smoothstep, Region};

pub type DampingFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Functional form of the damping coefficient `a(x)`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DampingShape {
    Zero,
    /// `value` on the (open) region, zero elsewhere.
    Box {
        region: Region,
        value: f64,
    },
    /// `value` inside `radius` of `center`, smoothly decaying to zero over `width`.
    Radial {
        center: Vec<f64>,
        radius: f64,
        width: f64,
        value: f64,
    },
    /// Piecewise linear in one coordinate, constant beyond the end points.
    Table {
        axis: usize,
        points: Vec<(f64, f64)>,
    },
    /// Sum of several shapes.
    Sum(Vec<DampingShape>),
    #[serde(skip)]
    Callable(DampingFn),
}

impl fmt::Debug for DampingShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DampingShape::Zero => write!(f, "Zero"),
            DampingShape::Box { region, value } => write!(f, "Box({region:?}, {value})"),
            DampingShape::Radial {
                center,
                radius,
                width,
                value,
            } => {
                write!(f, "Radial({center:?}, {radius}, {width}, {value})")
            }
            DampingShape::Table { axis, points } => write!(f, "Table({axis}, {points:?})"),
            DampingShape::Sum(parts) => f.debug_list().entries(parts).finish(),
            DampingShape::Callable(_) => write!(f, "Callable"),
        }
    }
}

impl DampingShape {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            DampingShape::Zero => 0.0,
            DampingShape::Box { region, value } => {
                if region.contains(x) {
                    *value
                } else {
                    0.0
                }
            }
            DampingShape::Radial {
                center,
                radius,
                width,
                value,
            } => {
                let r = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                if r <= *radius {
                    *value
                } else if *width > 0.0 {
                    value * (1.0 - smoothstep((r - radius) / width))
                } else {
                    0.0
                }
            }
            DampingShape::Table { axis, points } => table(points, x.get(*axis).copied().unwrap_or(0.0)),
            DampingShape::Sum(parts) => parts.iter().map(|p| p.eval(x)).sum(),
            DampingShape::Callable(f) => f(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            DampingShape::Zero => true,
            DampingShape::Box { region, value } => *value == 0.0 || *region == Region::Empty,
            DampingShape::Sum(parts) => parts.iter().all(DampingShape::is_zero),
            _ => false,
        }
    }
}

fn table(points: &[(f64, f64)], t: f64) -> f64 {
    match points {
        [] => 0.0,
        [(_, v)] => *v,
        _ => {
            if t <= points[0].0 {
                return points[0].1;
            }
            for w in points.windows(2) {
                let ((t0, v0), (t1, v1)) = (w[0], w[1]);
                if t <= t1 {
                    let s = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
                    return v0 + s * (v1 - v0);
                }
            }
            points[points.len() - 1].1
        }
    }
}

/// Damping coefficient together with its declared support `omega` and floor.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampingProfile {
    pub shape: DampingShape,
    /// Declared control region; `a >= floor` is checked on its samples.
    #[serde(default = "whole")]
    pub support: Region,
    #[serde(default)]
    pub floor: f64,
}

fn whole() -> Region {
    Region::Whole
}

impl DampingProfile {
    pub fn zero() -> Self {
        DampingProfile {
            shape: DampingShape::Zero,
            support: Region::Empty,
            floor: 0.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        DampingProfile {
            shape: DampingShape::Box {
                region: Region::Whole,
                value,
            },
            support: Region::Whole,
            floor: value,
        }
    }

    /// `value` on `region`, with the region as declared support and floor.
    pub fn indicator(region: Region, value: f64) -> Self {
        DampingProfile {
            shape: DampingShape::Box {
                region: region.clone(),
                value,
            },
            support: region,
            floor: value,
        }
    }

    pub fn callable(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        DampingProfile {
            shape: DampingShape::Callable(Arc::new(f)),
            support: Region::Empty,
            floor: 0.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.shape.eval(x)
    }

    pub fn is_zero(&self) -> bool {
        self.shape.is_zero()
    }

    /// Checks nonnegativity and the floor on the given sample points and
    /// returns the largest sample.
    pub fn validate_samples<'a>(&self, points: impl IntoIterator<Item = &'a [f64]>) -> Result<f64, String> {
        if !(self.floor >= 0.0) {
            return Err(format!("floor must be nonnegative, got {}", self.floor));
        }
        let mut sup = 0.0f64;
        for x in points {
            let a = self.eval(x);
            if !(a >= 0.0) || !a.is_finite() {
                return Err(format!("a({x:?}) = {a} is not a finite nonnegative value"));
            }
            if self.floor > 0.0 && self.support.contains(x) && a < self.floor {
                return Err(format!(
                    "a({x:?}) = {a} is below the floor {} on the support",
                    self.floor
                ));
            }
            sup = sup.max(a);
        }
        Ok(sup)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_interpolates_and_clamps() {
        let s = DampingShape::Table {
            axis: 0,
            points: vec![(0.0, 0.0), (1.0, 2.0)],
        };
        assert_eq!(s.eval(&[-1.0]), 0.0);
        assert_eq!(s.eval(&[0.25]), 0.5);
        assert_eq!(s.eval(&[3.0]), 2.0);
    }

    #[test]
    fn floor_violation_is_reported() {
        let p = DampingProfile {
            shape: DampingShape::Table {
                axis: 0,
                points: vec![(0.0, 0.0), (1.0, 1.0)],
            },
            support: Region::Slab {
                axis: 0,
                lo: 0.0,
                hi: 1.0,
            },
            floor: 0.5,
        };
        let pts = [[0.1], [0.9]];
        assert!(p.validate_samples(pts.iter().map(|p| &p[..])).is_err());
        let neg = DampingProfile::callable(|x| x[0] - 0.5);
        assert!(neg.validate_samples(pts.iter().map(|p| &p[..])).is_err());
    }

    #[test]
    fn profiles_roundtrip_through_json() {
        let p = DampingProfile::indicator(
            Region::Slab {
                axis: 1,
                lo: 0.2,
                hi: 0.4,
            },
            2.0,
        );
        let text = serde_json::to_string(&p).unwrap();
        let q: DampingProfile = serde_json::from_str(&text).unwrap();
        assert_eq!(q.eval(&[0.0, 0.3]), 2.0);
    }
}

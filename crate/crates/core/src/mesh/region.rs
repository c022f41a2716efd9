use serde::{Deserialize, Serialize};

/// Open subset of the plane or space, used for damping supports, cutoff
/// plateaus and observation sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    Whole,
    Empty,
    /// Axis-aligned box `lo < x < hi` componentwise.
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// `lo < x[axis] < hi`, unbounded in the other directions.
    Slab {
        axis: usize,
        lo: f64,
        hi: f64,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Not(Box<Region>),
}

impl Region {
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Region::Whole => true,
            Region::Empty => false,
            Region::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(&xi, (&l, &h))| l < xi && xi < h),
            Region::Slab { axis, lo, hi } => x.get(*axis).is_some_and(|&v| *lo < v && v < *hi),
            Region::Ball { center, radius } => dist(x, center) < *radius,
            Region::Not(r) => !r.contains(x),
        }
    }

    /// Euclidean distance from `x` to the region (zero inside).
    pub fn distance(&self, x: &[f64]) -> f64 {
        match self {
            Region::Whole => 0.0,
            Region::Empty => f64::INFINITY,
            Region::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(&xi, (&l, &h))| (l - xi).max(xi - h).max(0.0).powi(2))
                .sum::<f64>()
                .sqrt(),
            Region::Slab { axis, lo, hi } => {
                let v = x.get(*axis).copied().unwrap_or(0.0);
                (lo - v).max(v - hi).max(0.0)
            }
            Region::Ball { center, radius } => (dist(x, center) - radius).max(0.0),
            Region::Not(r) => r.depth(x),
        }
    }

    /// Distance from `x` to the complement (zero outside).
    pub fn depth(&self, x: &[f64]) -> f64 {
        match self {
            Region::Whole => f64::INFINITY,
            Region::Empty => 0.0,
            Region::Box { lo, hi } => {
                if !self.contains(x) {
                    return 0.0;
                }
                x.iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(&xi, (&l, &h))| (xi - l).min(h - xi))
                    .fold(f64::INFINITY, f64::min)
            }
            Region::Slab { axis, lo, hi } => {
                let v = x.get(*axis).copied().unwrap_or(0.0);
                (v - lo).min(hi - v).max(0.0)
            }
            Region::Ball { center, radius } => (radius - dist(x, center)).max(0.0),
            Region::Not(r) => r.distance(x),
        }
    }

    pub fn complement(self) -> Region {
        match self {
            Region::Not(r) => *r,
            r => Region::Not(Box::new(r)),
        }
    }

    pub fn check_dim(&self, dim: usize) -> Result<(), String> {
        match self {
            Region::Whole | Region::Empty => Ok(()),
            Region::Box { lo, hi } if lo.len() != dim || hi.len() != dim => {
                Err(format!("box needs {dim} bounds per corner"))
            }
            Region::Box { lo, hi } if lo.iter().zip(hi).any(|(l, h)| l >= h) => Err("box has lo >= hi".into()),
            Region::Slab { axis, .. } if *axis >= dim => Err(format!("slab axis {axis} out of range")),
            Region::Slab { lo, hi, .. } if lo >= hi => Err("slab has lo >= hi".into()),
            Region::Ball { center, .. } if center.len() != dim => Err(format!("ball centre needs {dim} coordinates")),
            Region::Ball { radius, .. } if *radius <= 0.0 => Err("ball radius must be positive".into()),
            Region::Not(r) => r.check_dim(dim),
            _ => Ok(()),
        }
    }
}

fn dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Quintic smoothstep: `C^2`, 0 for `t <= 0`, 1 for `t >= 1`.
pub fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

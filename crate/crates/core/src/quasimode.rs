//! Bouncing-ball modes of the ellipse and the quasimodes built from them.
//!
//! Modes are eigenvectors of the discrete Dirichlet Laplacian concentrating
//! on the minor axis; cutting one off with `chi` and pairing it with
//! `v = chi e`, `u = v / (i lambda)` gives a state whose residual under
//! `A - i lambda` lives only where `grad chi` does.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::helmholtz::CutoffFunction;
use crate::kvop::{BlockOperator, EnergyGram, StateVector};
use crate::mesh::{DomainKind, Grid, Region};
use crate::spectral::{symmetric_shift_invert, EigenPair};
use crate::{Error, Result};

/// Scales a symmetrised grid function to unit discrete `L^2` norm.
pub fn unit_l2(grid: &Grid, e: &[f64]) -> Vec<f64> {
    let nrm = (grid.mu_ref() * e.iter().map(|x| x * x).sum::<f64>()).sqrt();
    e.iter().map(|x| x / nrm).collect()
}

/// `lambda_n = sqrt(-mu)` for a Laplacian eigenvalue `mu`.
pub fn frequency(e: &EigenPair<Vec<f64>>) -> f64 {
    (-e.mu.re).max(0.0).sqrt()
}

/// Discrete `int_{V^c} |e|^2 + |grad e|^2` after scaling `e` to unit
/// `L^2` norm. Gradient terms are attributed to links by their midpoints.
pub fn offaxis_mass(grid: &Grid, e: &[f64], v: &Region) -> f64 {
    let d = grid.dim();
    if matches!(v, Region::Whole) {
        log::warn!("region covers the whole domain; off-axis mass is 0");
        return 0.0;
    }
    let e = grid.to_nodal(&unit_l2(grid, e));
    let mass = grid.mass();
    let outside = |x: &[f64]| !v.contains(&x[..d]);
    let l2: f64 = (0..grid.len())
        .filter(|&k| outside(grid.coords(k)))
        .map(|k| mass[k] * e[k] * e[k])
        .sum();
    let edges: f64 = grid
        .edges()
        .iter()
        .filter(|l| outside(&l.mid))
        .map(|l| l.weight * (e[l.a] - e[l.b]).powi(2))
        .sum();
    let arms: f64 = grid
        .arms()
        .iter()
        .filter(|a| outside(&a.mid))
        .map(|a| a.weight * e[a.node].powi(2))
        .sum();
    grid.mu_ref() * (l2 + edges + arms)
}

/// The modes with `offaxis_mass < threshold`, sorted by frequency.
pub fn select_bouncing_ball(
    grid: &Grid,
    modes: &[EigenPair<Vec<f64>>],
    v: &Region,
    threshold: f64,
) -> Vec<EigenPair<Vec<f64>>> {
    let mut out: Vec<_> = modes
        .iter()
        .filter(|m| offaxis_mass(grid, &m.vector, v) < threshold)
        .cloned()
        .collect();
    out.sort_by(|a, b| frequency(a).total_cmp(&frequency(b)));
    out
}

/// Tube `{|x| < half_width}` around the minor axis of the ellipse.
pub fn minor_axis_tube(half_width: f64) -> Region {
    Region::Slab {
        axis: 0,
        lo: -half_width,
        hi: half_width,
    }
}

/// Continuum bouncing-ball frequencies in `[lo, hi]` (fundamental
/// transverse state): the orbit is the minor-axis chord of length `2q`
/// between mirrors of curvature radius `p^2/q`, with Gouy phase
/// `arccos(1 - 2q^2/p^2)` per pass, where `p > q` are the semi-axes.
pub fn bouncing_ball_targets(grid: &Grid, lo: f64, hi: f64) -> Result<Vec<f64>> {
    Ok(indexed_targets(grid, lo, hi)?.into_iter().map(|(_, k)| k).collect())
}

/// Targets with their longitudinal index `n >= 1`; the mode has `n - 1`
/// nodal lines across the chord.
fn indexed_targets(grid: &Grid, lo: f64, hi: f64) -> Result<Vec<(usize, f64)>> {
    let spec = grid.spec();
    let Some((p, q)) = spec.semi_axes() else {
        return Err(Error::InvalidDomain("bouncing-ball modes need an ellipse".into()));
    };
    let (p, q) = (p.max(q), p.min(q));
    let gouy = (1.0 - 2.0 * q * q / (p * p)).acos();
    let len = 2.0 * q;
    Ok((1..)
        .map(|n| (n, (PI * n as f64 + 0.5 * gouy) / len))
        .skip_while(|&(_, k)| k < lo)
        .take_while(|&(_, k)| k <= hi)
        .collect())
}

/// Predicted discrete eigenvalue of `L` for a continuum frequency `k`,
/// correcting for the second-order stencil along the orbit.
fn discrete_target(grid: &Grid, k: f64) -> f64 {
    let h = grid.h_max();
    -(2.0 / h * (0.5 * k * h).sin()).powi(2)
}

/// Node index of the reflection `x_axis -> -x_axis` of every node.
fn mirror(grid: &Grid, axis: usize) -> Result<Vec<usize>> {
    grid.nodes()
        .iter()
        .map(|node| {
            let mut l = node.lattice;
            l[axis] = -l[axis];
            grid.index_of(l)
                .ok_or_else(|| Error::InvalidDomain("grid is not symmetric about the axes".into()))
        })
        .collect()
}

/// Projector onto functions even in `x` and of parity `sy` in `y`.
fn parity_projector<'a>(mx: &'a [usize], my: &'a [usize], sy: f64) -> impl Fn(&mut [f64]) + 'a {
    move |x: &mut [f64]| {
        let y: Vec<f64> = (0..x.len())
            .map(|k| 0.25 * (x[k] + x[mx[k]] + sy * (x[my[k]] + x[mx[my[k]]])))
            .collect();
        x.copy_from_slice(&y);
    }
}

/// For each predicted frequency in `[lo, hi]`, the eigenvector among the
/// `count` nearest that is most concentrated in `tube`. The search runs in
/// the symmetry class of the fundamental bouncing-ball mode (even across
/// the minor axis, parity of the longitudinal index along it), so that
/// degenerate partners from other classes cannot mix in. Vectors are unit `L^2`.
pub fn find_bouncing_ball_modes(
    grid: &Grid,
    lo: f64,
    hi: f64,
    tube: &Region,
    count: usize,
) -> Result<Vec<EigenPair<Vec<f64>>>> {
    if grid.spec().kind != DomainKind::Ellipse {
        return Err(Error::InvalidDomain("bouncing-ball modes need an ellipse".into()));
    }
    let l = grid.laplacian();
    let ordering = grid.ordering_for(&l);
    let (mx, my) = (mirror(grid, 0)?, mirror(grid, 1)?);
    let targets = indexed_targets(grid, lo, hi)?;
    let found: Vec<EigenPair<Vec<f64>>> = targets
        .par_iter()
        .map(|&(n, k)| {
            let sy = if n % 2 == 1 { 1.0 } else { -1.0 };
            let pairs = symmetric_shift_invert(
                &l,
                discrete_target(grid, k),
                count,
                &ordering,
                parity_projector(&mx, &my, sy),
            )?;
            pairs
                .into_iter()
                .map(|p| (offaxis_mass(grid, &p.vector, tube), p))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, p)| EigenPair {
                    vector: unit_l2(grid, &p.vector),
                    ..p
                })
                .ok_or_else(|| Error::NotConverged(format!("no eigenpair near frequency {k}")))
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<EigenPair<Vec<f64>>> = Vec::with_capacity(found.len());
    for p in found {
        if !out.iter().any(|q| (q.mu.re - p.mu.re).abs() <= 1e-9 * p.mu.re.abs()) {
            out.push(p);
        }
    }
    out.sort_by(|a, b| frequency(a).total_cmp(&frequency(b)));
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Quasimode {
    pub lambda: f64,
    /// `(chi e / (i lambda), chi e)`.
    pub state: StateVector,
    /// `(0, [L, chi] e / (i lambda) + D chi e)`.
    pub residual: StateVector,
    /// `||(A - i lambda) U - G||_W / ||U||_W`.
    pub identity_defect: f64,
}

/// Largest tolerated `identity_defect`.
pub const IDENTITY_TOL: f64 = 1e-10;

/// The quasimode of `e` cut off by `chi`, for the generator `op` on `grid`.
pub fn build_quasimode(
    grid: &Grid,
    op: &BlockOperator,
    e: &EigenPair<Vec<f64>>,
    chi: &CutoffFunction,
) -> Result<Quasimode> {
    let lambda = frequency(e);
    if lambda == 0.0 {
        return Err(Error::InvalidArgument("quasimode needs a nonzero frequency".into()));
    }
    if e.vector.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            actual: e.vector.len(),
        });
    }
    let il = Complex64::new(0.0, lambda);
    let c = chi.sample(grid);
    let ev: Vec<Complex64> = e.vector.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let ce: Vec<Complex64> = ev.iter().zip(&c).map(|(x, c)| x * c).collect();
    let l_ce = op.l().apply(&ce);
    let le = op.l().apply(&ev);
    let d_ce = op.d().apply(&ce);
    let g: Vec<Complex64> = (0..ce.len()).map(|k| (l_ce[k] - c[k] * le[k]) / il + d_ce[k]).collect();
    let state = StateVector::new(ce.iter().map(|x| x / il).collect(), ce)?;
    let residual = StateVector::new(vec![Complex64::new(0.0, 0.0); g.len()], g)?;

    let gram = op.gram();
    let direct = op.apply(&state).add_scaled(-il, &state);
    let diff = direct.add_scaled(Complex64::new(-1.0, 0.0), &residual);
    let identity_defect = gram.norm(&diff.to_flat()) / gram.norm(&state.to_flat());
    if !(identity_defect <= IDENTITY_TOL) {
        return Err(Error::NotConverged(format!(
            "quasimode identity defect {identity_defect:.3e} at lambda = {lambda}; eigenvector not accurate enough"
        )));
    }
    Ok(Quasimode {
        lambda,
        state,
        residual,
        identity_defect,
    })
}

/// `||U||_W / ||G||_W`, a lower bound for `||(A - i lambda)^{-1}||_W`.
pub fn lower_bound(u: &StateVector, g: &StateVector, w: &EnergyGram) -> f64 {
    let ng = w.norm(&g.to_flat());
    if ng == 0.0 {
        return f64::INFINITY;
    }
    w.norm(&u.to_flat()) / ng
}

/// One row of the quasimode report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasimodeReport {
    pub lambda_n: f64,
    pub offaxis_mass: f64,
    /// `||G||_W`.
    pub residual: f64,
    pub lower_bound: f64,
}

pub fn report(
    grid: &Grid,
    op: &BlockOperator,
    e: &EigenPair<Vec<f64>>,
    chi: &CutoffFunction,
    tube: &Region,
) -> Result<QuasimodeReport> {
    let q = build_quasimode(grid, op, e, chi)?;
    let w = op.gram();
    Ok(QuasimodeReport {
        lambda_n: q.lambda,
        offaxis_mass: offaxis_mass(grid, &e.vector, tube),
        residual: w.norm(&q.residual.to_flat()),
        lower_bound: lower_bound(&q.state, &q.residual, w),
    })
}

/// CSV with columns `lambda_n,offaxis_mass,residual,lower_bound`.
pub fn write_report_csv<W: Write>(rows: &[QuasimodeReport], mut w: W) -> io::Result<()> {
    writeln!(w, "lambda_n,offaxis_mass,residual,lower_bound")?;
    for r in rows {
        writeln!(
            w,
            "{:.17e},{:.17e},{:.17e},{:.17e}",
            r.lambda_n, r.offaxis_mass, r.residual, r.lower_bound
        )?;
    }
    Ok(())
}

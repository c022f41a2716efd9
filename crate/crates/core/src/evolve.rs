//! Implicit-midpoint time stepping of the damped wave semigroup.
//!
//! With `z = 2/dt`, `(I - dt/2 A)^{-1} = -z (A - z)^{-1}`, so every step is
//! one solve with the real factorization of `K(z)`. The midpoint state
//! `U_mid = (I - dt/2 A)^{-1} U` gives `U+ = 2 U_mid - U`.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::kvop::{smooth_data, BlockOperator, ShiftedSolver, StateVector};
use crate::mesh::{DomainKind, Grid, DT_NU_TRUST, LAMBDA_H_TRUST};
use crate::spectral::{laplacian_spectrum, SpectrumMode};
use crate::{Error, Result};

pub const MAX_STEPS: usize = 10_000_000;

/// Time step with `dt * nu <= DT_NU_TRUST` at the largest trusted
/// frequency `LAMBDA_H_TRUST / h`.
pub fn default_dt(h: f64) -> f64 {
    DT_NU_TRUST * h / LAMBDA_H_TRUST
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    /// `||U(t)||_W^2`.
    pub energies: Vec<f64>,
    /// Energy dissipated since the previous record (0 for the first).
    pub dissipated: Vec<f64>,
    pub digest: String,
    /// Largest per-step balance residual, relative to the energy.
    pub max_balance_residual: f64,
    /// False when a step failed and the trace stops early.
    pub complete: bool,
}

impl EnergyTrace {
    /// `|E(0) - E(T) - sum dissipated| / E(0)`.
    pub fn ledger_defect(&self) -> f64 {
        let (Some(e0), Some(e1)) = (self.energies.first(), self.energies.last()) else {
            return 0.0;
        };
        let lost: f64 = self.dissipated.iter().sum();
        (e0 - e1 - lost).abs() / e0
    }

    /// CSV with columns `t,E,dE_dissipated`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,E,dE_dissipated")?;
        for ((t, e), d) in self.times.iter().zip(&self.energies).zip(&self.dissipated) {
            writeln!(w, "{t:.17e},{e:.17e},{d:.17e}")?;
        }
        Ok(())
    }
}

/// The factorised midpoint step for one `dt`.
pub struct Propagator<'a> {
    op: &'a BlockOperator,
    dt: f64,
    solver: ShiftedSolver<'a>,
}

/// One step together with its energy bookkeeping.
#[derive(Clone, Debug)]
pub struct Step {
    pub state: StateVector,
    /// `2 dt int a |grad v_mid|^2`, the energy the scheme removes.
    pub dissipated: f64,
    /// `|E+ - E + dissipated| / E`.
    pub balance_residual: f64,
}

impl<'a> Propagator<'a> {
    pub fn new(op: &'a BlockOperator, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let solver = op.shifted(Complex64::new(2.0 / dt, 0.0))?;
        Ok(Propagator { op, dt, solver })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, u: &StateVector) -> Step {
        let z = 2.0 / self.dt;
        let x = u.to_flat();
        let mid: Vec<Complex64> = self.solver.solve_flat(&x).iter().map(|y| -z * y).collect();
        let next: Vec<Complex64> = mid.iter().zip(&x).map(|(m, a)| 2.0 * m - a).collect();
        let gram = self.op.gram();
        let n = self.op.dim();
        let (e0, e1) = (gram.norm_sq(&x), gram.norm_sq(&next));
        let dissipated = 2.0 * self.dt * self.op.dissipation(&mid[n..]);
        let balance_residual = if e0 > 0.0 {
            (e1 - e0 + dissipated).abs() / e0
        } else {
            0.0
        };
        Step {
            state: StateVector::from_flat(&next),
            dissipated,
            balance_residual,
        }
    }

    /// `steps` steps from `u0`, recording every `record_every`-th state
    /// (and the last). Returns the trace and the final state.
    pub fn run(&self, u0: &StateVector, steps: usize, record_every: usize) -> (EnergyTrace, StateVector) {
        let record_every = record_every.max(1);
        let gram = self.op.gram();
        let e0 = gram.norm_sq(&u0.to_flat());
        let mut trace = EnergyTrace {
            times: vec![0.0],
            energies: vec![e0],
            dissipated: vec![0.0],
            digest: String::new(),
            max_balance_residual: 0.0,
            complete: true,
        };
        let mut u = u0.clone();
        let mut pending = 0.0;
        for k in 1..=steps {
            let s = self.step(&u);
            let e = gram.norm_sq(&s.state.to_flat());
            if !e.is_finite() || !s.balance_residual.is_finite() {
                log::error!("step {k} produced a non-finite energy; trace truncated");
                trace.complete = false;
                break;
            }
            trace.max_balance_residual = trace.max_balance_residual.max(s.balance_residual);
            pending += s.dissipated;
            u = s.state;
            if k % record_every == 0 || k == steps {
                trace.times.push(k as f64 * self.dt);
                trace.energies.push(e);
                trace.dissipated.push(pending);
                pending = 0.0;
            }
        }
        (trace, u)
    }
}

/// One implicit-midpoint step `(I - dt/2 A) U+ = (I + dt/2 A) U`.
pub fn step_implicit_midpoint(op: &BlockOperator, u: &StateVector, dt: f64) -> Result<StateVector> {
    Ok(Propagator::new(op, dt)?.step(u).state)
}

/// Number of steps covering `[0, t_end]` with step `dt`.
pub fn step_count(dt: f64, t_end: f64) -> Result<usize> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "final time must be nonnegative, got {t_end}"
        )));
    }
    let steps = (t_end / dt).round();
    if steps > MAX_STEPS as f64 {
        return Err(Error::InvalidArgument(format!(
            "{steps} steps exceed the cap of {MAX_STEPS}"
        )));
    }
    if (steps * dt - t_end).abs() > 1e-9 * t_end.max(dt) {
        return Err(Error::InvalidArgument(format!(
            "final time {t_end} is not a multiple of dt = {dt}"
        )));
    }
    Ok(steps as usize)
}

pub fn evolve(
    op: &BlockOperator,
    u0: &StateVector,
    dt: f64,
    t_end: f64,
    record_every: usize,
) -> Result<(EnergyTrace, StateVector)> {
    if u0.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            actual: u0.len(),
        });
    }
    let steps = step_count(dt, t_end)?;
    Ok(Propagator::new(op, dt)?.run(u0, steps, record_every))
}

/// How initial data is manufactured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", deny_unknown_fields)]
pub enum InitialData {
    /// Random trigonometric data, smoothed by `(A - 1)^{-k}`.
    RandomSmoothK { k: usize },
    /// `(e, i nu e)` for the `index`-th Laplacian eigenvector `e` (from 0),
    /// an exact eigenvector of the undamped generator.
    Eigenmode { index: usize },
    /// `u` a Gaussian times the boundary weight, `v = 0`.
    GaussianBump { center: Vec<f64>, width: f64 },
}

const TRIG_MODES: usize = 4;

/// Smooth weight vanishing on Dirichlet boundaries, 1 on tori.
fn boundary_weight(grid: &Grid, x: &[f64]) -> f64 {
    let spec = grid.spec();
    if spec.is_periodic() {
        return 1.0;
    }
    match spec.kind {
        DomainKind::Ellipse => (1.0 - spec.extents[0] * x[0] * x[0] - spec.extents[1] * x[1] * x[1]).max(0.0),
        _ => x.iter().zip(&spec.extents).map(|(xi, l)| (PI * xi / l).sin()).product(),
    }
}

/// Domain-fixed period lengths used by the trigonometric data.
fn periods(grid: &Grid) -> Vec<f64> {
    let spec = grid.spec();
    match spec.semi_axes() {
        Some((p, q)) => vec![2.0 * p, 2.0 * q],
        None => spec.extents.clone(),
    }
}

/// A real trigonometric sum with at most `TRIG_MODES` wavenumbers per axis,
/// defined on the continuum so it does not depend on the resolution.
fn trig_field(grid: &Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = grid.dim();
    let p = periods(grid);
    let terms: Vec<(Vec<f64>, f64, f64)> = (0..2 * TRIG_MODES)
        .map(|_| {
            let k = (0..d).map(|_| rng.random_range(0..=TRIG_MODES) as f64).collect();
            (k, rng.random_range(-1.0..1.0), rng.random_range(0.0..2.0 * PI))
        })
        .collect();
    (0..grid.len())
        .map(|i| {
            let x = grid.coords(i);
            let s: f64 = terms
                .iter()
                .map(|(k, c, phi)| {
                    let arg: f64 = k.iter().zip(x).zip(&p).map(|((k, x), p)| 2.0 * PI * k * x / p).sum();
                    c * (arg + phi).cos()
                })
                .sum();
            s * boundary_weight(grid, x)
        })
        .collect()
}

fn normalised(op: &BlockOperator, s: StateVector) -> Result<StateVector> {
    let mut x = s.to_flat();
    op.project(&mut x);
    let e = op.gram().norm(&x);
    if !(e > 0.0) {
        return Err(Error::InvalidArgument("initial data has zero energy".into()));
    }
    Ok(StateVector::from_flat(&x).scaled(Complex64::new(1.0 / e, 0.0)))
}

impl InitialData {
    /// Data of unit energy on `grid` for the generator `op`.
    pub fn build(&self, grid: &Grid, op: &BlockOperator, seed: u64) -> Result<StateVector> {
        match self {
            InitialData::RandomSmoothK { k } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let u = grid.to_symmetric(&trig_field(grid, &mut rng));
                let v = grid.to_symmetric(&trig_field(grid, &mut rng));
                let s = normalised(op, StateVector::from_real(&u, &v)?)?;
                Ok(smooth_data(op, &s, *k)?.0)
            }
            InitialData::Eigenmode { index } => {
                let count = index + 1;
                if count > grid.len() {
                    return Err(Error::InvalidArgument(format!(
                        "eigenmode {index} of {} unknowns",
                        grid.len()
                    )));
                }
                let mode = SpectrumMode::ShiftInvert {
                    target: Complex64::new(0.0, 0.0),
                    count,
                };
                let mut pairs = laplacian_spectrum(op.l(), mode, Some(op.ordering()))?;
                pairs.sort_by(|a, b| b.mu.re.total_cmp(&a.mu.re));
                let pair = pairs
                    .get(*index)
                    .ok_or_else(|| Error::NotConverged(format!("eigenmode {index} not found")))?;
                let nu = (-pair.mu.re).max(0.0).sqrt();
                let e: Vec<Complex64> = pair.vector.iter().map(|&x| Complex64::new(x, 0.0)).collect();
                let v = e.iter().map(|x| x * Complex64::new(0.0, nu)).collect();
                normalised(op, StateVector::new(e, v)?)
            }
            InitialData::GaussianBump { center, width } => {
                if center.len() != grid.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: grid.dim(),
                        actual: center.len(),
                    });
                }
                if !(*width > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "bump width must be positive, got {width}"
                    )));
                }
                let u: Vec<f64> = (0..grid.len())
                    .map(|i| {
                        let x = grid.coords(i);
                        let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                        (-r2 / (2.0 * width * width)).exp() * boundary_weight(grid, x)
                    })
                    .collect();
                let u = grid.to_symmetric(&u);
                normalised(op, StateVector::from_real(&u, &vec![0.0; u.len()])?)
            }
        }
    }
}

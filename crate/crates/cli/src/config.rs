//! Experiment configuration: strict JSON schema plus cross-field checks.

use std::path::PathBuf;

use kvspectra_core::evolve::InitialData;
use kvspectra_core::fitting::FitModel;
use kvspectra_core::mesh::{DampingProfile, DampingShape, DomainKind, DomainSpec, Region};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::RunError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub domain: DomainSpec,
    #[serde(default = "DampingProfile::zero")]
    pub damping: DampingProfile,
    /// Lattice intervals per unit length.
    pub resolution: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Also write `L` and `D` as coordinate triplets.
    #[serde(default)]
    pub export_matrices: bool,
    pub experiment: Experiment,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Spectrum {
        operator: SpectrumOperator,
        /// Dense when absent.
        #[serde(default)]
        shift_invert: Option<ShiftInvert>,
        /// Number of eigenvectors written as state CSVs.
        #[serde(default)]
        dump_modes: usize,
    },
    ResolventSweep {
        lambdas: Sweep,
        #[serde(default)]
        fit: Option<FitSpec>,
        #[serde(default)]
        tol: Option<f64>,
    },
    Observability {
        lambdas: Sweep,
        omega: Region,
        /// Use the `H^1`-weighted left-hand side.
        #[serde(default)]
        strong: bool,
    },
    SchrodingerSweep {
        z: Sweep,
        #[serde(default)]
        norm: SchrodingerNorm,
    },
    Evolve {
        /// Defaults to the largest step with `dt nu <= 0.5` at the trusted
        /// frequency, shrunk to divide `t_end`.
        #[serde(default)]
        dt: Option<f64>,
        t_end: f64,
        #[serde(default = "one")]
        record_every: usize,
        initial: InitialData,
        #[serde(default)]
        fit: Option<FitSpec>,
    },
    Quasimode {
        lambda_min: f64,
        lambda_max: f64,
        /// Half-width of the minor-axis tube `V` for the concentration measure.
        tube_half_width: f64,
        cutoff: CutoffSpec,
        #[serde(default = "eight")]
        candidates: usize,
        /// Keep only modes with off-axis mass below this.
        #[serde(default)]
        threshold: Option<f64>,
        #[serde(default = "yes")]
        check_resolvent: bool,
    },
}

fn one() -> usize {
    1
}

fn eight() -> usize {
    8
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectrumOperator {
    Generator,
    Laplacian,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftInvert {
    /// `[re, im]`.
    pub target: [f64; 2],
    pub count: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchrodingerNorm {
    #[default]
    L2,
    HMinusOne,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    pub model: FitModel,
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    /// Fit the running maximum of the norm instead of the raw samples.
    #[serde(default)]
    pub envelope: bool,
}

/// Cutoff equal to 1 on `|x| < plateau_half_width`, reaching 0 after `width`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffSpec {
    pub plateau_half_width: f64,
    pub width: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// A list of sample points, given explicitly or as a range.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sweep {
    List {
        values: Vec<f64>,
    },
    Range {
        from: f64,
        to: f64,
        points: usize,
        #[serde(default)]
        spacing: Spacing,
    },
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Sweep::List { values } => values.clone(),
            Sweep::Range {
                from,
                to,
                points,
                spacing,
            } => {
                let n = *points;
                if n == 1 {
                    return vec![*from];
                }
                (0..n)
                    .map(|i| {
                        let t = i as f64 / (n - 1) as f64;
                        match spacing {
                            Spacing::Linear => from + t * (to - from),
                            Spacing::Log => (from.ln() + t * (to.ln() - from.ln())).exp(),
                        }
                    })
                    .collect()
            }
        }
    }

    fn validate(&self, field: &str) -> Result<(), String> {
        match self {
            Sweep::List { values } if values.is_empty() => Err(format!("{field}.values: empty list")),
            Sweep::List { values } if values.iter().any(|v| !v.is_finite()) => {
                Err(format!("{field}.values: non-finite entry"))
            }
            Sweep::Range { points: 0, .. } => Err(format!("{field}.points: must be at least 1")),
            Sweep::Range { from, to, .. } if !(from.is_finite() && to.is_finite()) => {
                Err(format!("{field}: bounds must be finite"))
            }
            Sweep::Range {
                from,
                to,
                spacing: Spacing::Log,
                ..
            } if !(*from > 0.0 && *to > 0.0) => Err(format!("{field}: log spacing needs positive bounds")),
            _ => Ok(()),
        }
    }
}

fn invalid(msg: impl Into<String>) -> RunError {
    RunError::Validation(msg.into())
}

fn check_window(field: &str, w: &Option<[f64; 2]>) -> Result<(), RunError> {
    match w {
        Some([lo, hi]) if !(lo < hi) => Err(invalid(format!("{field}.window: lo must be below hi"))),
        _ => Ok(()),
    }
}

fn check_shape(shape: &DampingShape, dim: usize) -> Result<(), String> {
    match shape {
        DampingShape::Box { region, value } => {
            region.check_dim(dim)?;
            if !(*value >= 0.0) {
                return Err(format!("box value must be nonnegative, got {value}"));
            }
            Ok(())
        }
        DampingShape::Radial {
            center,
            radius,
            width,
            value,
        } => {
            if center.len() != dim {
                return Err(format!("radial centre needs {dim} coordinates"));
            }
            if !(*radius >= 0.0 && *width >= 0.0 && *value >= 0.0) {
                return Err("radial radius, width and value must be nonnegative".into());
            }
            Ok(())
        }
        DampingShape::Table { axis, points } => {
            if *axis >= dim {
                return Err(format!("table axis {axis} out of range"));
            }
            if points.is_empty() || points.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err("table points must be nonempty with increasing abscissae".into());
            }
            Ok(())
        }
        DampingShape::Sum(parts) => parts.iter().try_for_each(|p| check_shape(p, dim)),
        DampingShape::Zero | DampingShape::Callable(_) => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| invalid(format!("schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Cross-field checks the schema cannot express.
    pub fn validate(&self) -> Result<(), RunError> {
        self.domain.validate().map_err(|e| {
            let msg = e.to_string();
            let msg = msg.trim_start_matches("invalid domain: ");
            if msg.starts_with("boundary:") {
                invalid(format!("domain.{msg}"))
            } else {
                invalid(format!("domain: {msg}"))
            }
        })?;
        let dim = self.domain.dim();
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(invalid(format!(
                "resolution: must be positive, got {}",
                self.resolution
            )));
        }
        check_shape(&self.damping.shape, dim).map_err(|e| invalid(format!("damping.shape: {e}")))?;
        self.damping
            .support
            .check_dim(dim)
            .map_err(|e| invalid(format!("damping.support: {e}")))?;
        if !(self.damping.floor >= 0.0) {
            return Err(invalid("damping.floor: must be nonnegative"));
        }
        match &self.experiment {
            Experiment::Spectrum { shift_invert, .. } => {
                if let Some(s) = shift_invert {
                    if s.count == 0 {
                        return Err(invalid("experiment.shift_invert.count: must be positive"));
                    }
                }
            }
            Experiment::ResolventSweep { lambdas, fit, tol } => {
                lambdas.validate("experiment.lambdas").map_err(invalid)?;
                if let Some(f) = fit {
                    if matches!(f.model, FitModel::LogInverse { .. }) {
                        return Err(invalid("experiment.fit.model: log-inverse applies to evolve only"));
                    }
                    check_window("experiment.fit", &f.window)?;
                }
                if let Some(t) = tol {
                    if !(*t > 0.0 && *t < 1.0) {
                        return Err(invalid("experiment.tol: must lie in (0, 1)"));
                    }
                }
            }
            Experiment::Observability { lambdas, omega, .. } => {
                lambdas.validate("experiment.lambdas").map_err(invalid)?;
                omega
                    .check_dim(dim)
                    .map_err(|e| invalid(format!("experiment.omega: {e}")))?;
            }
            Experiment::SchrodingerSweep { z, .. } => z.validate("experiment.z").map_err(invalid)?,
            Experiment::Evolve {
                dt,
                t_end,
                initial,
                fit,
                ..
            } => {
                if !(*t_end > 0.0 && t_end.is_finite()) {
                    return Err(invalid("experiment.t_end: must be positive"));
                }
                if let Some(dt) = dt {
                    if !(*dt > 0.0 && dt.is_finite()) {
                        return Err(invalid("experiment.dt: must be positive"));
                    }
                }
                if let InitialData::GaussianBump { center, width } = initial {
                    if center.len() != dim {
                        return Err(invalid(format!("experiment.initial.center: needs {dim} coordinates")));
                    }
                    if !(*width > 0.0) {
                        return Err(invalid("experiment.initial.width: must be positive"));
                    }
                }
                if let InitialData::RandomSmoothK { k } = initial {
                    if *k > 4 {
                        return Err(invalid("experiment.initial.k: at most 4"));
                    }
                }
                if let Some(f) = fit {
                    check_window("experiment.fit", &f.window)?;
                    if f.envelope {
                        return Err(invalid("experiment.fit.envelope: applies to resolvent sweeps only"));
                    }
                }
            }
            Experiment::Quasimode {
                lambda_min,
                lambda_max,
                tube_half_width,
                cutoff,
                candidates,
                ..
            } => {
                if self.domain.kind != DomainKind::Ellipse {
                    return Err(invalid("experiment.kind: quasimode requires an ellipse domain"));
                }
                if !(0.0 < *lambda_min && lambda_min < lambda_max) {
                    return Err(invalid("experiment.lambda_min: need 0 < lambda_min < lambda_max"));
                }
                if !(*tube_half_width > 0.0) {
                    return Err(invalid("experiment.tube_half_width: must be positive"));
                }
                if !(cutoff.plateau_half_width > 0.0 && cutoff.width >= 0.0) {
                    return Err(invalid(
                        "experiment.cutoff: plateau must be positive, width nonnegative",
                    ));
                }
                if *candidates == 0 {
                    return Err(invalid("experiment.candidates: must be positive"));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn kind(&self) -> &'static str {
        match self.experiment {
            Experiment::Spectrum { .. } => "spectrum",
            Experiment::ResolventSweep { .. } => "resolvent-sweep",
            Experiment::Observability { .. } => "observability",
            Experiment::SchrodingerSweep { .. } => "schrodinger-sweep",
            Experiment::Evolve { .. } => "evolve",
            Experiment::Quasimode { .. } => "quasimode",
        }
    }
}

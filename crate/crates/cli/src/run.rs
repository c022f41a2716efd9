//! Turns a validated config into artifact files.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use kvspectra_core::evolve::{default_dt, evolve, EnergyTrace};
use kvspectra_core::fitting::{
    default_decay_window, default_growth_window, envelope, fit_decay, fit_growth, FitResult,
};
use kvspectra_core::helmholtz::{write_helmholtz_csv, CutoffFunction, Helmholtz, HelmholtzSample};
use kvspectra_core::kvop::{BlockOperator, StateVector};
use kvspectra_core::mesh::Grid;
use kvspectra_core::provenance::write_header;
use kvspectra_core::quasimode::{
    find_bouncing_ball_modes, minor_axis_tube, report, select_bouncing_ball, write_report_csv,
};
use kvspectra_core::spectral::{
    dense_resolvent_norm, generator_spectrum, laplacian_spectrum, resolvent_norm, resolvent_sweep, write_sweep_csv,
    ResolventOptions, ResolventSample, SpectrumMode,
};
use num_complex::Complex64;

use crate::config::{Experiment, ExperimentConfig, FitSpec, SchrodingerNorm, SpectrumOperator};
use crate::plot::{Chart, Series};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }
}

impl From<kvspectra_core::Error> for RunError {
    fn from(e: kvspectra_core::Error) -> Self {
        match e {
            kvspectra_core::Error::Io(io) => RunError::Io(io),
            e if e.is_numerical() => RunError::Numerical(e.to_string()),
            e => RunError::Validation(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Overrides `output_dir` from the config.
    pub out: Option<PathBuf>,
    pub plot: bool,
    /// Use dense reference computations instead of the iterative ones.
    pub oracle: bool,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    /// Human-readable result lines.
    pub lines: Vec<String>,
}

struct Artifacts {
    dir: PathBuf,
    digest: String,
    plot: bool,
    files: Vec<PathBuf>,
    lines: Vec<String>,
}

impl Artifacts {
    fn csv(&mut self, name: &str, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        write_header(&mut w, &self.digest)?;
        body(&mut w)?;
        w.flush()?;
        self.files.push(path);
        Ok(())
    }

    fn svg(&mut self, name: &str, chart: impl FnOnce() -> Chart) -> io::Result<()> {
        if !self.plot {
            return Ok(());
        }
        let path = self.dir.join(name);
        fs::write(&path, chart().to_svg())?;
        self.files.push(path);
        Ok(())
    }

    fn say(&mut self, line: String) {
        log::info!("{line}");
        self.lines.push(line);
    }
}

fn out_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(&cfg.name))
}

/// Runs one experiment, writing every artifact under the output directory.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    cfg.validate()?;
    let dir = out_dir(cfg, opts);
    fs::create_dir_all(&dir)?;
    let mut art = Artifacts {
        dir,
        digest: cfg.digest(),
        plot: opts.plot,
        files: Vec::new(),
        lines: Vec::new(),
    };
    let grid = Grid::build(&cfg.domain, cfg.resolution)?;
    art.say(format!(
        "{}: {} on {} nodes, h = {:.4e}, digest {}",
        cfg.name,
        cfg.kind(),
        grid.len(),
        grid.h_max(),
        &art.digest[..12]
    ));
    let op = BlockOperator::from_grid(&grid, &cfg.damping)?;
    if cfg.export_matrices {
        art.csv("laplacian_triplets.txt", |w| op.l().write_triplets(w))?;
        art.csv("damping_triplets.txt", |w| op.d().write_triplets(w))?;
    }

    match &cfg.experiment {
        Experiment::Spectrum {
            operator,
            shift_invert,
            dump_modes,
        } => spectrum(
            &mut art,
            &op,
            *operator,
            shift_invert.as_ref(),
            *dump_modes,
            opts.oracle,
        )?,
        Experiment::ResolventSweep { lambdas, fit, tol } => {
            let mut ro = ResolventOptions {
                seed: cfg.seed,
                ..Default::default()
            };
            if let Some(t) = tol {
                ro.tol = *t;
            }
            sweep(&mut art, &op, &lambdas.values(), fit.as_ref(), &ro, opts.oracle)?
        }
        Experiment::Observability { lambdas, omega, strong } => {
            no_oracle(opts, cfg)?;
            let hz = Helmholtz::new(&grid);
            let ls = lambdas.values();
            let samples = if *strong {
                hz.strong_observability_sweep(&ls, omega)
            } else {
                hz.observability_sweep(&ls, omega)
            };
            helmholtz_out(&mut art, &samples, "lambda", "observability constant")?;
        }
        Experiment::SchrodingerSweep { z, norm } => {
            no_oracle(opts, cfg)?;
            let hz = Helmholtz::new(&grid);
            let a = hz.sample(&cfg.damping)?;
            let zs = z.values();
            let samples = match norm {
                SchrodingerNorm::L2 => hz.schrodinger_sweep(&a, &zs),
                SchrodingerNorm::HMinusOne => hz.schrodinger_h_minus_one_sweep(&a, &zs),
            };
            helmholtz_out(&mut art, &samples, "z", "resolvent norm")?;
        }
        Experiment::Evolve {
            dt,
            t_end,
            record_every,
            initial,
            fit,
        } => {
            no_oracle(opts, cfg)?;
            let dt = match dt {
                Some(dt) => *dt,
                None => {
                    let steps = (t_end / default_dt(grid.h_max()) - 1e-9).ceil().max(1.0);
                    t_end / steps
                }
            };
            let u0 = initial.build(&grid, &op, cfg.seed)?;
            let (mut trace, last) = evolve(&op, &u0, dt, *t_end, *record_every)?;
            trace.digest = art.digest.clone();
            evolve_out(&mut art, &trace, &last, dt, *t_end, fit.as_ref())?;
        }
        Experiment::Quasimode {
            lambda_min,
            lambda_max,
            tube_half_width,
            cutoff,
            candidates,
            threshold,
            check_resolvent,
        } => {
            no_oracle(opts, cfg)?;
            let tube = minor_axis_tube(*tube_half_width);
            let mut modes = find_bouncing_ball_modes(&grid, *lambda_min, *lambda_max, &tube, *candidates)?;
            if let Some(t) = threshold {
                modes = select_bouncing_ball(&grid, &modes, &tube, *t);
            }
            let chi = CutoffFunction::new(minor_axis_tube(cutoff.plateau_half_width), cutoff.width)?;
            let rows = modes
                .iter()
                .map(|e| report(&grid, &op, e, &chi, &tube))
                .collect::<Result<Vec<_>, _>>()?;
            art.csv("quasimode.csv", |w| write_report_csv(&rows, w))?;
            art.say(format!(
                "{} bouncing-ball modes in [{lambda_min}, {lambda_max}]",
                rows.len()
            ));
            for r in &rows {
                art.say(format!(
                    "  lambda = {:.6}  offaxis = {:.4e}  lower bound = {:.4e}",
                    r.lambda_n, r.offaxis_mass, r.lower_bound
                ));
            }
            if *check_resolvent {
                let ro = ResolventOptions {
                    seed: cfg.seed,
                    ..Default::default()
                };
                let direct: Vec<ResolventSample> = rows.iter().map(|r| resolvent_norm(&op, r.lambda_n, &ro)).collect();
                art.csv("quasimode_check.csv", |w| {
                    writeln!(w, "lambda_n,lower_bound,resolvent_norm,converged")?;
                    for (r, d) in rows.iter().zip(&direct) {
                        writeln!(
                            w,
                            "{:.17e},{:.17e},{:.17e},{}",
                            r.lambda_n, r.lower_bound, d.norm, d.converged
                        )?;
                    }
                    Ok(())
                })?;
                let violated = rows
                    .iter()
                    .zip(&direct)
                    .filter(|(r, d)| d.converged && r.lower_bound > d.norm + 1e-6)
                    .count();
                art.say(format!(
                    "lower bound exceeds the direct norm at {violated} of {} modes",
                    rows.len()
                ));
            }
            art.svg("quasimode.svg", || {
                Chart::new("bouncing-ball quasimodes", "lambda_n", "value")
                    .log_y(true)
                    .with(Series::line(
                        "offaxis mass",
                        rows.iter().map(|r| (r.lambda_n, r.offaxis_mass)).collect(),
                    ))
                    .with(Series::line(
                        "lower bound",
                        rows.iter().map(|r| (r.lambda_n, r.lower_bound)).collect(),
                    ))
            })?;
        }
    }

    Ok(RunSummary {
        out_dir: art.dir,
        files: art.files,
        lines: art.lines,
    })
}

fn no_oracle(opts: &RunOptions, cfg: &ExperimentConfig) -> Result<(), RunError> {
    if opts.oracle {
        return Err(RunError::Validation(format!(
            "experiment.kind: no dense oracle for {} experiments",
            cfg.kind()
        )));
    }
    Ok(())
}

fn spectrum(
    art: &mut Artifacts,
    op: &BlockOperator,
    operator: SpectrumOperator,
    shift_invert: Option<&crate::config::ShiftInvert>,
    dump: usize,
    oracle: bool,
) -> Result<(), RunError> {
    let mode = match shift_invert {
        Some(s) if !oracle => SpectrumMode::ShiftInvert {
            target: Complex64::new(s.target[0], s.target[1]),
            count: s.count,
        },
        _ => SpectrumMode::Dense,
    };
    let (values, vectors): (Vec<(Complex64, f64)>, Vec<StateVector>) = match operator {
        SpectrumOperator::Generator => generator_spectrum(op, mode)?
            .into_iter()
            .map(|p| ((p.mu, p.residual), p.vector))
            .unzip(),
        SpectrumOperator::Laplacian => {
            let n = op.dim();
            laplacian_spectrum(op.l(), mode, Some(op.ordering()))?
                .into_iter()
                .map(|p| {
                    let zero = vec![0.0; n];
                    let s = StateVector::from_real(&p.vector, &zero).expect("lengths agree");
                    ((p.mu, p.residual), s)
                })
                .unzip()
        }
    };
    art.csv("spectrum.csv", |w| {
        writeln!(w, "index,re_mu,im_mu,residual")?;
        for (i, (mu, r)) in values.iter().enumerate() {
            writeln!(w, "{i},{:.17e},{:.17e},{:.6e}", mu.re, mu.im, r)?;
        }
        Ok(())
    })?;
    for (i, v) in vectors.iter().take(dump).enumerate() {
        art.csv(&format!("mode_{i:03}.csv"), |w| v.write_csv(w))?;
    }
    let max_re = values.iter().map(|(m, _)| m.re).fold(f64::NEG_INFINITY, f64::max);
    art.say(format!("{} eigenvalues, max Re mu = {max_re:.3e}", values.len()));
    art.svg("spectrum.svg", || {
        Chart::new("spectrum", "Re mu", "Im mu").with(Series::scatter(
            "eigenvalues",
            values.iter().map(|(m, _)| (m.re, m.im)).collect(),
        ))
    })?;
    Ok(())
}

fn sweep(
    art: &mut Artifacts,
    op: &BlockOperator,
    lambdas: &[f64],
    fit: Option<&FitSpec>,
    ro: &ResolventOptions,
    oracle: bool,
) -> Result<(), RunError> {
    let samples = if oracle {
        lambdas
            .iter()
            .map(|&l| {
                let norm = dense_resolvent_norm(op, l)?;
                Ok(ResolventSample {
                    lambda: l,
                    norm,
                    sigma_min: if norm.is_finite() { 1.0 / norm } else { 0.0 },
                    iterations: 0,
                    converged: true,
                    reason: None,
                    lambda_h: l.abs() * op.spacing(),
                })
            })
            .collect::<Result<Vec<_>, kvspectra_core::Error>>()?
    } else {
        resolvent_sweep(op, lambdas, ro)
    };
    art.csv("sweep.csv", |w| write_sweep_csv(&samples, w))?;
    let good = samples.iter().filter(|s| s.converged).count();
    let peak = samples
        .iter()
        .filter(|s| s.converged)
        .map(|s| s.norm)
        .fold(0.0, f64::max);
    art.say(format!(
        "{good} of {} points converged, max norm {peak:.6e}",
        samples.len()
    ));
    art.svg("sweep.svg", || {
        let pos = samples.iter().all(|s| s.lambda > 0.0);
        Chart::new("resolvent norm", "lambda", "norm")
            .log_x(pos)
            .log_y(true)
            .with(Series::line(
                "||(A - i lambda)^-1||",
                samples.iter().map(|s| (s.lambda, s.norm)).collect(),
            ))
    })?;
    if good == 0 {
        return Err(RunError::Numerical("no sweep point converged".into()));
    }
    if let Some(f) = fit {
        let window = f
            .window
            .map(|[a, b]| (a, b))
            .unwrap_or_else(|| default_growth_window(op.spacing()));
        let r = if f.envelope {
            fit_growth(&envelope(&samples), f.model, window)?
        } else {
            fit_growth(&samples, f.model, window)?
        };
        fit_out(art, &r)?;
    }
    Ok(())
}

fn helmholtz_out(art: &mut Artifacts, samples: &[HelmholtzSample], x: &str, y: &str) -> Result<(), RunError> {
    art.csv("helmholtz.csv", |w| write_helmholtz_csv(samples, w))?;
    let good: Vec<&HelmholtzSample> = samples.iter().filter(|s| s.converged).collect();
    let sup = good.iter().map(|s| s.constant).fold(0.0, f64::max);
    art.say(format!(
        "{} of {} points solved, sup {y} = {sup:.6e}",
        good.len(),
        samples.len()
    ));
    art.svg("helmholtz.svg", || {
        Chart::new(y, x, y).log_y(true).with(Series::line(
            y,
            samples.iter().map(|s| (s.lambda_or_z, s.constant)).collect(),
        ))
    })?;
    if good.is_empty() {
        return Err(RunError::Numerical("no sample could be solved".into()));
    }
    Ok(())
}

fn evolve_out(
    art: &mut Artifacts,
    trace: &EnergyTrace,
    last: &StateVector,
    dt: f64,
    t_end: f64,
    fit: Option<&FitSpec>,
) -> Result<(), RunError> {
    art.csv("energy.csv", |w| trace.write_csv(w))?;
    art.csv("final_state.csv", |w| last.write_csv(w))?;
    art.say(format!(
        "dt = {dt:.6e}, E(T)/E(0) = {:.6e}, max balance residual {:.3e}, ledger defect {:.3e}",
        trace.energies.last().unwrap_or(&f64::NAN) / trace.energies[0],
        trace.max_balance_residual,
        trace.ledger_defect()
    ));
    art.svg("energy.svg", || {
        Chart::new("energy", "t", "E(t)")
            .log_x(true)
            .log_y(true)
            .with(Series::line(
                "E",
                trace
                    .times
                    .iter()
                    .copied()
                    .zip(trace.energies.iter().copied())
                    .collect(),
            ))
    })?;
    if !trace.complete {
        return Err(RunError::Numerical("time stepping produced a non-finite energy".into()));
    }
    if let Some(f) = fit {
        let window = f
            .window
            .map(|[a, b]| (a, b))
            .unwrap_or_else(|| default_decay_window(t_end));
        let r = fit_decay(trace, f.model, window)?;
        fit_out(art, &r)?;
    }
    Ok(())
}

fn fit_out(art: &mut Artifacts, r: &FitResult) -> Result<(), RunError> {
    art.csv("fit.csv", |w| r.write_csv(w))?;
    art.say(r.summary());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(RunError::Validation(String::new()).exit_code(), 2);
        assert_eq!(RunError::Numerical(String::new()).exit_code(), 3);
        let e: RunError = kvspectra_core::Error::NotConverged("x".into()).into();
        assert_eq!(e.exit_code(), 3);
        let e: RunError = kvspectra_core::Error::TooLarge(9000).into();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn minimal_spectrum_run_writes_headed_csv() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_json(
            r#"{"name": "s", "domain": {"kind": "interval", "extents": [1.0], "boundary": "dirichlet"},
                "resolution": 10, "export_matrices": true,
                "experiment": {"kind": "spectrum", "operator": "laplacian"}}"#,
        )
        .unwrap();
        let opts = RunOptions {
            out: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let s = run(&cfg, &opts).unwrap();
        assert_eq!(s.files.len(), 3);
        let text = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
        let (digest, lh, dn) = kvspectra_core::provenance::read_header(&text).unwrap();
        assert_eq!(digest, cfg.digest());
        assert_eq!((lh, dn), (0.2, 0.5));
        let rows = text.lines().filter(|l| !l.starts_with('#')).count();
        assert_eq!(rows, 1 + 9);
    }
}

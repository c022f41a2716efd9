//! Least-squares growth and decay laws in log space.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::evolve::EnergyTrace;
use crate::mesh::LAMBDA_H_TRUST;
use crate::spectral::ResolventSample;
use crate::{Error, Result};

pub const MIN_SAMPLES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitModel {
    /// `log y ~ alpha + c x`.
    Exponential,
    /// `log y ~ alpha + p log x`.
    Polynomial,
    /// Boundedness of `E(t) log(t)^{2k}`; decay traces only.
    LogInverse { k: u32 },
}

impl fmt::Display for FitModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitModel::Exponential => write!(f, "exponential"),
            FitModel::Polynomial => write!(f, "polynomial"),
            FitModel::LogInverse { k } => write!(f, "log-inverse(k={k})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: FitModel,
    /// `e^alpha`; for log-inverse, the supremum statistic.
    pub amplitude: f64,
    /// Growth rate or exponent; decay fits report it positive for decay.
    /// For log-inverse, the power `2k` used.
    pub rate: f64,
    pub window: (f64, f64),
    /// RMS residual in log space.
    pub rms: f64,
    /// Pearson correlation of the log-space regression.
    pub correlation: f64,
    pub samples: usize,
}

/// Unweighted straight-line fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
    pub rms: f64,
    pub correlation: f64,
}

/// Least squares `y ~ intercept + slope x` through centred sums.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<Line> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, have: n });
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    // Constant data leave only rounding in syy; no correlation then.
    let flat = syy <= n as f64 * (16.0 * f64::EPSILON * my.abs()).powi(2);
    let correlation = if flat { 0.0 } else { sxy / (sxx * syy).sqrt() };
    Ok(Line {
        slope,
        intercept,
        rms: (ss / n as f64).sqrt(),
        correlation,
    })
}

fn check_window(window: (f64, f64)) -> Result<()> {
    if !(window.0 < window.1) {
        return Err(Error::InvalidArgument(format!(
            "empty fit window [{}, {}]",
            window.0, window.1
        )));
    }
    Ok(())
}

fn enough(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            have: n,
        });
    }
    Ok(())
}

/// Default sweep window `[10, LAMBDA_H_TRUST / h]`.
pub fn default_growth_window(h: f64) -> (f64, f64) {
    (10.0, LAMBDA_H_TRUST / h)
}

/// Default trace window `[10, T/2]`.
pub fn default_decay_window(t_end: f64) -> (f64, f64) {
    (10.0, 0.5 * t_end)
}

/// Replaces each converged norm by the largest converged norm at any
/// `|s| <= |lambda|`, so that resonance peaks between samples do not
/// scatter the fit. Output is ordered by `|lambda|`.
pub fn envelope(samples: &[ResolventSample]) -> Vec<ResolventSample> {
    let mut out = samples.to_vec();
    out.sort_by(|a, b| a.lambda.abs().total_cmp(&b.lambda.abs()));
    let mut peak = 0.0f64;
    for s in &mut out {
        if s.converged && !s.norm.is_nan() {
            peak = peak.max(s.norm);
            s.norm = peak;
        }
    }
    out
}

/// Growth law of `||(A - i lambda)^{-1}||` over converged samples with
/// `lambda` in `window`.
pub fn fit_growth(samples: &[ResolventSample], model: FitModel, window: (f64, f64)) -> Result<FitResult> {
    check_window(window)?;
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.converged && s.norm.is_finite() && s.norm > 0.0)
        .filter(|s| s.lambda >= window.0 && s.lambda <= window.1)
        .map(|s| (s.lambda, s.norm))
        .collect();
    enough(pts.len())?;
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let x: Vec<f64> = match model {
        FitModel::Exponential => pts.iter().map(|p| p.0).collect(),
        FitModel::Polynomial => {
            if pts.iter().any(|p| p.0 <= 0.0) {
                return Err(Error::InvalidArgument("polynomial growth needs lambda > 0".into()));
            }
            pts.iter().map(|p| p.0.ln()).collect()
        }
        FitModel::LogInverse { .. } => {
            return Err(Error::InvalidArgument(
                "log-inverse applies to decay traces only".into(),
            ))
        }
    };
    let line = fit_line(&x, &y)?;
    Ok(FitResult {
        model,
        amplitude: line.intercept.exp(),
        rate: line.slope,
        window,
        rms: line.rms,
        correlation: line.correlation,
        samples: pts.len(),
    })
}

/// Decay law of an energy trace over records with `t` in `window`.
pub fn fit_decay(trace: &EnergyTrace, model: FitModel, window: (f64, f64)) -> Result<FitResult> {
    check_window(window)?;
    let pts: Vec<(f64, f64)> = trace
        .times
        .iter()
        .zip(&trace.energies)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(t, e)| (*t, *e))
        .collect();
    enough(pts.len())?;
    if let Some((t, e)) = pts.iter().find(|p| !(p.1 > 0.0)) {
        return Err(Error::InvalidArgument(format!("energy {e} at t = {t} is not positive")));
    }
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let x: Vec<f64> = match model {
        FitModel::Exponential => pts.iter().map(|p| p.0).collect(),
        FitModel::Polynomial => pts.iter().map(|p| p.0.ln_1p()).collect(),
        FitModel::LogInverse { k } => {
            if window.0 <= 1.0 {
                return Err(Error::InvalidArgument(
                    "log-inverse window must start after t = 1".into(),
                ));
            }
            let power = 2.0 * k as f64;
            let sup = pts.iter().map(|(t, e)| e * t.ln().powf(power)).fold(0.0, f64::max);
            return Ok(FitResult {
                model,
                amplitude: sup,
                rate: power,
                window,
                rms: 0.0,
                correlation: 0.0,
                samples: pts.len(),
            });
        }
    };
    let line = fit_line(&x, &y)?;
    Ok(FitResult {
        model,
        amplitude: line.intercept.exp(),
        rate: -line.slope,
        window,
        rms: line.rms,
        correlation: line.correlation,
        samples: pts.len(),
    })
}

impl FitResult {
    pub const CSV_HEADER: &'static str = "model,amplitude,rate,window_lo,window_hi,rms,correlation,samples";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            self.model,
            self.amplitude,
            self.rate,
            self.window.0,
            self.window.1,
            self.rms,
            self.correlation,
            self.samples
        )
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        writeln!(w, "{}", self.csv_row())
    }

    /// One line for humans.
    pub fn summary(&self) -> String {
        let (lo, hi) = self.window;
        let law = match self.model {
            FitModel::Exponential => format!("{:.4e} * exp({:.4} x)", self.amplitude, self.rate),
            FitModel::Polynomial => format!("{:.4e} * x^{:.4}", self.amplitude, self.rate),
            FitModel::LogInverse { .. } => {
                return format!(
                    "log-inverse over [{lo}, {hi}]: sup E(t) log(t)^{} = {:.4e} ({} records)",
                    self.rate, self.amplitude, self.samples
                )
            }
        };
        format!(
            "{} fit over [{lo}, {hi}]: {law}, log-rms {:.3e}, r = {:.4} ({} samples)",
            self.model, self.rms, self.correlation, self.samples
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(lambda: f64, norm: f64) -> ResolventSample {
        ResolventSample {
            lambda,
            norm,
            sigma_min: 1.0 / norm,
            iterations: 1,
            converged: true,
            reason: None,
            lambda_h: 0.0,
        }
    }

    fn trace(f: impl Fn(f64) -> f64) -> EnergyTrace {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 2.0).collect();
        EnergyTrace {
            energies: times.iter().map(|&t| f(t)).collect(),
            dissipated: vec![0.0; times.len()],
            times,
            digest: String::new(),
            max_balance_residual: 0.0,
            complete: true,
        }
    }

    #[test]
    fn recovers_power_law_growth() {
        let s: Vec<_> = (10..=40).map(|l| sample(l as f64, 3.0 * (l as f64).powi(2))).collect();
        let fit = fit_growth(&s, FitModel::Polynomial, (10.0, 40.0)).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-6);
        assert!((fit.amplitude - 3.0).abs() < 1e-6);
        assert!(fit.rms < 1e-12 && (fit.correlation - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recovers_exponential_growth() {
        let s: Vec<_> = (0..30)
            .map(|i| {
                let l = 1.0 + 0.5 * i as f64;
                sample(l, 2.0 * (0.5 * l).exp())
            })
            .collect();
        let fit = fit_growth(&s, FitModel::Exponential, (0.0, 100.0)).unwrap();
        assert!((fit.rate - 0.5).abs() < 1e-6);
        assert!((fit.amplitude - 2.0).abs() < 1e-6);
    }

    #[test]
    fn recovers_polynomial_decay() {
        let fit = fit_decay(&trace(|t| 5.0 / (1.0 + t).powi(2)), FitModel::Polynomial, (10.0, 100.0)).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-6);
        assert!((fit.amplitude - 5.0).abs() < 1e-6);
        let flat = fit_decay(&trace(|_| 0.7), FitModel::Polynomial, (10.0, 100.0)).unwrap();
        assert!(flat.rate.abs() < 1e-12);
        assert_eq!(flat.correlation, 0.0);
    }

    #[test]
    fn log_inverse_reports_the_supremum() {
        let fit = fit_decay(
            &trace(|t| 1.0 / (t.ln().powi(2) + 1.0)),
            FitModel::LogInverse { k: 1 },
            (10.0, 200.0),
        )
        .unwrap();
        let want = 200f64.ln().powi(2) / (200f64.ln().powi(2) + 1.0);
        assert!((fit.amplitude - want).abs() < 1e-14);
        assert!(fit_decay(&trace(|_| 1.0), FitModel::LogInverse { k: 1 }, (0.5, 10.0)).is_err());
    }

    #[test]
    fn too_few_samples_and_bad_windows() {
        let s: Vec<_> = (10..14).map(|l| sample(l as f64, 1.0)).collect();
        assert!(matches!(
            fit_growth(&s, FitModel::Polynomial, (0.0, 100.0)),
            Err(Error::InsufficientSamples { needed: 5, have: 4 })
        ));
        assert!(fit_growth(&s, FitModel::Polynomial, (5.0, 5.0)).is_err());
        let mut s: Vec<_> = (10..20).map(|l| sample(l as f64, 1.0)).collect();
        s.iter_mut().take(6).for_each(|x| x.converged = false);
        assert!(fit_growth(&s, FitModel::Polynomial, (0.0, 100.0)).is_err());
    }

    #[test]
    fn envelope_is_the_running_maximum() {
        let mut raw = vec![sample(3.0, 1.0), sample(1.0, 2.0), sample(2.0, 0.5), sample(4.0, 5.0)];
        raw[2].converged = false;
        let e = envelope(&raw);
        let got: Vec<(f64, f64)> = e.iter().map(|s| (s.lambda, s.norm)).collect();
        assert_eq!(got, vec![(1.0, 2.0), (2.0, 0.5), (3.0, 2.0), (4.0, 5.0)]);
    }

    #[test]
    fn csv_is_one_row() {
        let fit = fit_decay(&trace(|t| 5.0 / (1.0 + t).powi(2)), FitModel::Polynomial, (10.0, 100.0)).unwrap();
        let mut buf = Vec::new();
        fit.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().starts_with("polynomial,"));
        assert!(fit.summary().contains("polynomial fit over [10, 100]"));
    }

    proptest! {
        #[test]
        fn rescaling_moves_only_the_amplitude(s in 1e-3f64..1e3, p in -3.0f64..3.0, noise in 0.0f64..0.3) {
            let base: Vec<_> = (1..=20).map(|i| {
                let l = 5.0 + i as f64;
                sample(l, l.powf(p) * (1.0 + noise * (i as f64 * 1.7).sin()))
            }).collect();
            let scaled: Vec<_> = base.iter().map(|x| sample(x.lambda, s * x.norm)).collect();
            for model in [FitModel::Polynomial, FitModel::Exponential] {
                let (a, b) = (fit_growth(&base, model, (0.0, 50.0)).unwrap(), fit_growth(&scaled, model, (0.0, 50.0)).unwrap());
                prop_assert!((a.rate - b.rate).abs() <= 1e-10);
                prop_assert!((b.amplitude.ln() - a.amplitude.ln() - s.ln()).abs() <= 1e-10);
            }
        }

        #[test]
        fn envelope_dominates_and_never_decreases(norms in proptest::collection::vec(1e-3f64..1e3, 1..40)) {
            let raw: Vec<_> = norms.iter().enumerate().map(|(i, &n)| sample(i as f64, n)).collect();
            let e = envelope(&raw);
            for (r, s) in raw.iter().zip(&e) {
                prop_assert!(s.norm >= r.norm);
            }
            prop_assert!(e.windows(2).all(|w| w[1].norm >= w[0].norm));
        }
    }
}

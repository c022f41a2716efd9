//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

use std::fs;
use std::path::Path;
use std::process::Command;

use kvspectra_cli::{presets, run, ExperimentConfig, RunOptions};
use kvspectra_core::evolve::{default_dt, EnergyTrace, InitialData, Propagator};
use kvspectra_core::fitting::{fit_decay, fit_growth, fit_line, FitModel};
use kvspectra_core::helmholtz::Helmholtz;
use kvspectra_core::kvop::{BlockOperator, StateVector};
use kvspectra_core::mesh::{DampingProfile, DampingShape, DomainSpec, Grid, Region};
use kvspectra_core::spectral::{
    dense_generator_eigenvalues, dense_resolvent_norm, laplacian_spectrum, resolvent_norm, resolvent_sweep,
    ResolventOptions, ResolventSample, SpectrumMode,
};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, ok: bool, detail: String) {
    println!("criterion {n}: {} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} failed: {detail}");
}

fn interval_box() -> DampingProfile {
    DampingProfile::indicator(
        Region::Box {
            lo: vec![0.3],
            hi: vec![0.7],
        },
        1.0,
    )
}

fn build(spec: DomainSpec, r: f64, a: &DampingProfile) -> (Grid, BlockOperator) {
    let grid = Grid::build(&spec, r).unwrap();
    let op = BlockOperator::from_grid(&grid, a).unwrap();
    (grid, op)
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Data rows of a headed CSV, header line dropped.
fn rows(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|f| f.parse().unwrap_or(f64::NAN)).collect())
        .collect()
}

fn run_preset(name: &str, dir: &Path) {
    let cfg = presets::load(name).unwrap().unwrap();
    let opts = RunOptions {
        out: Some(dir.to_path_buf()),
        ..Default::default()
    };
    run(&cfg, &opts).unwrap_or_else(|e| panic!("{name}: {e}"));
}

/// `(rate, rms)` from a fit CSV.
fn fit_csv(path: &Path) -> (f64, f64) {
    let text = fs::read_to_string(path).unwrap();
    let row = text.lines().filter(|l| !l.starts_with('#')).nth(1).unwrap();
    let f: Vec<&str> = row.split(',').collect();
    (f[2].parse().unwrap(), f[5].parse().unwrap())
}

#[test]
fn criterion_01_iterative_norm_matches_dense_oracle() {
    let strip = DampingProfile::indicator(
        Region::Slab {
            axis: 0,
            lo: 0.1,
            hi: 0.4,
        },
        1.0,
    );
    let off_axis = DampingProfile::indicator(
        Region::Slab {
            axis: 0,
            lo: -0.5,
            hi: 0.5,
        }
        .complement(),
        1.0,
    );
    let cases = [
        (
            "interval",
            build(DomainSpec::interval(1.0).unwrap(), 200.0, &interval_box()),
            20.0,
        ),
        (
            "torus",
            build(DomainSpec::torus(&[1.0, 1.0]).unwrap(), 14.0, &strip),
            2.5,
        ),
        (
            "ellipse",
            build(DomainSpec::ellipse(0.25, 1.0).unwrap(), 5.0, &off_axis),
            1.0,
        ),
    ];
    let opts = ResolventOptions::default();
    let mut worst: f64 = 0.0;
    for (name, (_, op), top) in &cases {
        assert!(2 * op.dim() <= 400, "{name}: 2N = {}", 2 * op.dim());
        for lambda in linspace(0.3, *top, 20) {
            let it = resolvent_norm(op, lambda, &opts);
            let dense = dense_resolvent_norm(op, lambda).unwrap();
            worst = worst.max((it.norm - dense).abs() / dense);
        }
    }
    verdict(
        1,
        worst <= 1e-6,
        format!("max relative gap {worst:.2e} over 3 x 20 points"),
    );
}

#[test]
fn criterion_02_low_frequency_bound_is_resolution_stable() {
    let lambdas = linspace(-5.0, 5.0, 41);
    let peak = |r: f64| {
        let (_, op) = build(DomainSpec::interval(1.0).unwrap(), r, &interval_box());
        let s = resolvent_sweep(&op, &lambdas, &ResolventOptions::default());
        assert!(
            s.iter().all(|x| x.converged && x.norm.is_finite()),
            "r = {r}: non-finite sample"
        );
        s.iter().map(|x| x.norm).fold(0.0, f64::max)
    };
    let (a, b) = (peak(200.0), peak(400.0));
    let change = (b / a - 1.0).abs();
    verdict(
        2,
        change < 0.05,
        format!("max norm {a:.6} vs {b:.6}, change {:.3}%", 100.0 * change),
    );
}

/// Solves `A U = (f, g)` as `v = f`, `L u = g - D f` with a dense factorization.
fn two_step(op: &BlockOperator, f: &[Complex64], g: &[Complex64]) -> StateVector {
    let l = op.l().to_dense().lu();
    let df = op.d().apply(f);
    let rhs: Vec<Complex64> = g.iter().zip(&df).map(|(g, d)| g - d).collect();
    let solve = |part: fn(&Complex64) -> f64| {
        let b = DVector::from_iterator(rhs.len(), rhs.iter().map(part));
        l.solve(&b).unwrap()
    };
    let (re, im) = (solve(|z| z.re), solve(|z| z.im));
    let u = re.iter().zip(im.iter()).map(|(a, b)| Complex64::new(*a, *b)).collect();
    StateVector::new(u, f.to_vec()).unwrap()
}

#[test]
fn criterion_03_zero_frequency_two_step_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let radial = DampingProfile {
        shape: DampingShape::Radial {
            center: vec![0.4, 0.5],
            radius: 0.2,
            width: 0.1,
            value: 2.0,
        },
        support: Region::Whole,
        floor: 0.0,
    };
    let cases = [
        build(DomainSpec::interval(1.0).unwrap(), 150.0, &interval_box()),
        build(DomainSpec::rectangle(&[1.0, 1.0]).unwrap(), 20.0, &radial),
    ];
    let (mut worst, mut residual) = (0.0f64, 0.0f64);
    for (_, op) in &cases {
        let n = op.dim();
        let mut draw = || -> Vec<Complex64> {
            (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect()
        };
        let (f, g) = (draw(), draw());
        let solver = op.shifted(Complex64::new(0.0, 0.0)).unwrap();
        let got = solver.solve(&StateVector::new(f.clone(), g.clone()).unwrap());
        let want = two_step(op, &f, &g);
        let scale = want.u.iter().chain(&want.v).map(|z| z.norm()).fold(0.0, f64::max);
        worst = worst.max(got.max_abs_diff(&want) / scale);
        let back = op.apply(&got);
        let rhs = StateVector::new(f, g).unwrap();
        residual = residual.max(back.max_abs_diff(&rhs) / (op.l().max_abs() * scale));
    }
    verdict(
        3,
        worst <= 1e-10 && residual <= 1e-10,
        format!("max relative difference {worst:.2e}; relative residual of A U = F {residual:.2e}"),
    );
}

#[test]
fn criterion_04_energy_balance_on_every_preset() {
    let mut worst: f64 = 0.0;
    for (name, _) in presets::presets() {
        let cfg = presets::load(name).unwrap().unwrap();
        let (grid, op) = build(cfg.domain.clone(), cfg.resolution, &cfg.damping);
        let u0 = InitialData::RandomSmoothK { k: 1 }.build(&grid, &op, 4).unwrap();
        let (trace, _) = Propagator::new(&op, default_dt(grid.h_max())).unwrap().run(&u0, 10, 1);
        assert!(trace.complete, "{name}");
        worst = worst.max(trace.max_balance_residual);
    }
    let (grid, op) = build(DomainSpec::interval(1.0).unwrap(), 100.0, &DampingProfile::zero());
    let u0 = InitialData::RandomSmoothK { k: 1 }.build(&grid, &op, 5).unwrap();
    let (trace, _) = Propagator::new(&op, default_dt(grid.h_max()))
        .unwrap()
        .run(&u0, 1000, 1000);
    let drift = (trace.energies.last().unwrap() / trace.energies[0] - 1.0).abs();
    verdict(
        4,
        worst <= 1e-11 && drift <= 1e-10,
        format!("max balance residual {worst:.2e}; undamped drift over 1000 steps {drift:.2e}"),
    );
}

#[test]
fn criterion_05_gcc_growth_and_decay_exponents() {
    let dir = tempfile::tempdir().unwrap();
    run_preset("th0-1d-gcc", &dir.path().join("sweep"));
    run_preset("th0-gcc-poly", &dir.path().join("decay"));
    let (p, rms) = fit_csv(&dir.path().join("sweep/fit.csv"));
    let (q, _) = fit_csv(&dir.path().join("decay/fit.csv"));
    verdict(
        5,
        p <= 2.5 && rms <= 0.5 && q >= 0.8,
        format!("growth p = {p:.3}, log-rms {rms:.3}; decay p = {q:.3}"),
    );
}

#[test]
fn criterion_06_torus_growth_and_schrodinger_stability() {
    let dir = tempfile::tempdir().unwrap();
    run_preset("th1-torus", dir.path());
    let (p, _) = fit_csv(&dir.path().join("fit.csv"));

    let cfg = presets::load("th1-torus-schrodinger").unwrap().unwrap();
    let zs = linspace(-100.0, 0.0, 41);
    let sup = |r: f64| {
        let grid = Grid::build(&cfg.domain, r).unwrap();
        let hz = Helmholtz::new(&grid);
        let a = hz.sample(&cfg.damping).unwrap();
        let s = hz.schrodinger_sweep(&a, &zs);
        assert!(s.iter().all(|x| x.converged), "r = {r}");
        s.iter().map(|x| x.constant).fold(0.0, f64::max)
    };
    let (a, b) = (sup(50.0), sup(100.0));
    let change = (b / a - 1.0).abs();
    verdict(
        6,
        p <= 4.5 && a.is_finite() && b.is_finite() && change <= 0.1,
        format!(
            "growth p = {p:.3}; Schrodinger sup {a:.4} vs {b:.4}, change {:.2}%",
            100.0 * change
        ),
    );
}

/// Strictly monotone in the given direction.
fn strictly(v: &[f64], up: bool) -> bool {
    v.windows(2).all(|w| if up { w[1] > w[0] } else { w[1] < w[0] })
}

#[test]
fn criterion_07_ellipse_quasimode_trends() {
    let dir = tempfile::tempdir().unwrap();
    run_preset("appB-ellipse-optimality", dir.path());
    let report = rows(&dir.path().join("quasimode.csv"));
    let lambda: Vec<f64> = report.iter().map(|r| r[0]).collect();
    let mass: Vec<f64> = report.iter().map(|r| r[1]).collect();
    let bound: Vec<f64> = report.iter().map(|r| r[3]).collect();
    let log = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<_>>();
    let r_mass = fit_line(&lambda, &log(&mass)).unwrap().correlation;
    let r_bound = fit_line(&lambda, &log(&bound)).unwrap().correlation;
    let check = fs::read_to_string(dir.path().join("quasimode_check.csv")).unwrap();
    // lambda_n,lower_bound,resolvent_norm,converged
    let dominated = check
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|f| f[3] == "true")
        .all(|f| f[1].parse::<f64>().unwrap() <= f[2].parse::<f64>().unwrap() + 1e-6);
    let ok = lambda.len() >= 3
        && lambda.iter().all(|l| (15.0..=40.0).contains(l))
        && strictly(&mass, false)
        && strictly(&bound, true)
        && r_mass <= -0.9
        && r_bound >= 0.9
        && dominated;
    verdict(
        7,
        ok,
        format!(
            "{} modes in [{:.2}, {:.2}]; offaxis r = {r_mass:.3}, lower bound r = {r_bound:.3}, bounded by direct norm: {dominated}",
            lambda.len(),
            lambda.first().unwrap_or(&f64::NAN),
            lambda.last().unwrap_or(&f64::NAN)
        ),
    );
}

#[test]
fn criterion_08_undamped_norm_is_inverse_distance() {
    let mut worst: f64 = 0.0;
    let cases = [
        (DomainSpec::interval(1.0).unwrap(), 100.0),
        (DomainSpec::rectangle(&[1.0, 1.5]).unwrap(), 12.0),
    ];
    for (spec, r) in cases {
        let (_, op) = build(spec, r, &DampingProfile::zero());
        let mut nu: Vec<f64> = laplacian_spectrum(op.l(), SpectrumMode::Dense, None)
            .unwrap()
            .iter()
            .map(|p| (-p.mu.re).sqrt())
            .collect();
        nu.sort_by(f64::total_cmp);
        nu.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * b.abs());
        for w in nu.windows(2).take(6) {
            let lambda = 0.5 * (w[0] + w[1]);
            let dist = nu.iter().map(|v| (lambda - v).abs()).fold(f64::INFINITY, f64::min);
            let got = resolvent_norm(&op, lambda, &ResolventOptions::default()).norm;
            worst = worst.max((got * dist - 1.0).abs());
        }
    }
    verdict(8, worst <= 1e-6, format!("max |norm * dist - 1| = {worst:.2e}"));
}

#[test]
fn criterion_09_generator_spectrum_sign() {
    let (_, damped) = build(DomainSpec::interval(1.0).unwrap(), 200.0, &interval_box());
    let (_, free) = build(DomainSpec::interval(1.0).unwrap(), 200.0, &DampingProfile::zero());
    let radial = DampingProfile {
        shape: DampingShape::Radial {
            center: vec![0.5, 0.5],
            radius: 0.2,
            width: 0.1,
            value: 1.0,
        },
        support: Region::Whole,
        floor: 0.0,
    };
    let (_, square) = build(DomainSpec::rectangle(&[1.0, 1.0]).unwrap(), 14.0, &radial);
    let max_re = |op: &BlockOperator| {
        dense_generator_eigenvalues(op)
            .unwrap()
            .iter()
            .map(|m| m.re)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let max_abs_re = dense_generator_eigenvalues(&free)
        .unwrap()
        .iter()
        .map(|m| m.re.abs())
        .fold(0.0, f64::max);
    let (a, b) = (max_re(&damped), max_re(&square));
    verdict(
        9,
        a <= 1e-10 && b <= 1e-10 && max_abs_re <= 1e-10,
        format!("damped max Re mu {a:.2e} (1-D), {b:.2e} (2-D); undamped max |Re mu| {max_abs_re:.2e}"),
    );
}

fn synthetic_sample(lambda: f64, norm: f64) -> ResolventSample {
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

const SMALL: &str = r#"{
    "name": "determinism",
    "domain": {"kind": "rectangle", "extents": [1.0, 1.0], "boundary": "dirichlet"},
    "damping": {"shape": {"box": {"region": {"ball": {"center": [0.5, 0.5], "radius": 0.25}}, "value": 1.0}}},
    "resolution": 16,
    "seed": 42,
    "experiment": {
        "kind": "evolve",
        "t_end": 20.0,
        "record_every": 4,
        "initial": {"mode": "random-smooth-k", "k": 1},
        "fit": {"model": "polynomial", "window": [2.0, 20.0]}
    }
}"#;

const SWEEP: &str = r#"{
    "name": "determinism-sweep",
    "domain": {"kind": "rectangle", "extents": [1.0, 1.0], "boundary": "dirichlet"},
    "damping": {"shape": {"box": {"region": {"slab": {"axis": 0, "lo": 0.0, "hi": 0.3}}, "value": 1.0}}},
    "resolution": 24,
    "seed": 9,
    "export_matrices": true,
    "experiment": {"kind": "resolvent-sweep", "lambdas": {"from": 1.0, "to": 4.8, "points": 12}}
}"#;

#[test]
fn criterion_10_synthetic_fits_and_byte_identical_output() {
    let samples: Vec<_> = linspace(10.0, 80.0, 30)
        .into_iter()
        .map(|l| synthetic_sample(l, 3.0 * l.powf(2.3)))
        .collect();
    let g = fit_growth(&samples, FitModel::Polynomial, (10.0, 80.0)).unwrap();
    let exp: Vec<_> = linspace(10.0, 30.0, 30)
        .into_iter()
        .map(|l| synthetic_sample(l, 0.5 * (0.7 * l).exp()))
        .collect();
    let e = fit_growth(&exp, FitModel::Exponential, (10.0, 30.0)).unwrap();
    let times = linspace(0.0, 200.0, 201);
    let trace = EnergyTrace {
        energies: times.iter().map(|t| 4.0 * (1.0 + t).powf(-1.5)).collect(),
        dissipated: vec![0.0; times.len()],
        times,
        digest: String::new(),
        max_balance_residual: 0.0,
        complete: true,
    };
    let d = fit_decay(&trace, FitModel::Polynomial, (10.0, 200.0)).unwrap();
    let fit_err = [
        (g.rate - 2.3).abs(),
        (g.amplitude / 3.0 - 1.0).abs(),
        (e.rate - 0.7).abs(),
        (e.amplitude / 0.5 - 1.0).abs(),
        (d.rate - 1.5).abs(),
        (d.amplitude / 4.0 - 1.0).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let dir = tempfile::tempdir().unwrap();
    let mut identical = true;
    let mut compared = 0;
    for (k, text) in [SMALL, SWEEP].iter().enumerate() {
        ExperimentConfig::from_json(text).unwrap();
        let cfg = dir.path().join(format!("c{k}.json"));
        fs::write(&cfg, text).unwrap();
        let outs: Vec<_> = ["1", "4"]
            .iter()
            .map(|t| {
                let out = dir.path().join(format!("run{k}-{t}"));
                let status = Command::new(env!("CARGO_BIN_EXE_kvspectra"))
                    .args([
                        "run",
                        cfg.to_str().unwrap(),
                        "--threads",
                        t,
                        "--out",
                        out.to_str().unwrap(),
                    ])
                    .status()
                    .unwrap();
                assert!(status.success());
                out
            })
            .collect();
        let mut names: Vec<_> = fs::read_dir(&outs[0])
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        for name in names {
            let (a, b) = (
                fs::read(outs[0].join(&name)).unwrap(),
                fs::read(outs[1].join(&name)).unwrap(),
            );
            identical &= a == b;
            compared += 1;
        }
    }
    verdict(
        10,
        fit_err <= 1e-6 && identical && compared == 6,
        format!("max fit error {fit_err:.2e}; {compared} CSV files byte-identical across runs: {identical}"),
    );
}

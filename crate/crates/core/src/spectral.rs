//! Resolvent norms along the imaginary axis, spectra, and a dense oracle.
//!
//! The iterative route runs Lanczos on `R* R` in the energy inner product,
//! `R = (A - i lambda)^{-1}`, using one sparse factorization per frequency.
//! The dense oracle works in the eigenbasis of `-L`, where the energy
//! form becomes Euclidean, and takes a complex SVD.

use std::io::{self, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::kvop::{BlockOperator, StateVector, DENSE_BLOCK_LIMIT};
use crate::linalg::dense::{eigenvalues_real, sigma_min, symmetric_eigen, DENSE_LIMIT};
use crate::linalg::{arnoldi, lanczos, norm2, BandLu, LanczosOptions, Ordering, SparseOperator, Which};
use crate::mesh::LAMBDA_H_TRUST;
use crate::{Error, Result};

/// `sigma_min` below this fraction of `nu_max + |lambda|` counts as a
/// spectral point even when the factorization survived.
pub const SPECTRAL_POINT: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub struct ResolventSample {
    pub lambda: f64,
    /// `||(A - i lambda)^{-1}||_W`; infinite at spectral points.
    pub norm: f64,
    pub sigma_min: f64,
    pub iterations: usize,
    pub converged: bool,
    pub reason: Option<String>,
    /// `lambda * h` for the grid the operator came from.
    pub lambda_h: f64,
}

impl ResolventSample {
    pub fn is_spectral_point(&self) -> bool {
        self.norm.is_infinite()
    }

    fn spectral(lambda: f64, lambda_h: f64, why: String) -> Self {
        ResolventSample {
            lambda,
            norm: f64::INFINITY,
            sigma_min: 0.0,
            iterations: 0,
            converged: false,
            reason: Some(why),
            lambda_h,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ResolventOptions {
    /// Relative Lanczos residual tolerance on the top eigenvalue of `R* R`.
    pub tol: f64,
    pub max_dim: usize,
    pub max_restarts: usize,
    /// Threshold above which `lambda * h` triggers a warning.
    pub lambda_h_warn: f64,
    /// Points evaluated concurrently from the same warm start; fixed so
    /// results do not depend on the thread count.
    pub chunk: usize,
    pub seed: u64,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        ResolventOptions {
            tol: 1e-10,
            max_dim: 80,
            max_restarts: 10,
            lambda_h_warn: LAMBDA_H_TRUST,
            chunk: 8,
            seed: 0x5eed,
        }
    }
}

fn random_state(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..2 * n)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn start_vector(op: &BlockOperator, warm: Option<&[Complex64]>, seed: u64) -> Vec<Complex64> {
    let mut x = random_state(op.dim(), seed);
    if let Some(w) = warm {
        // Mostly the warm vector, with enough noise to reach a new maximiser.
        let (nw, nx) = (op.gram().norm(w), op.gram().norm(&x));
        if nw > 0.0 && nx > 0.0 {
            x = w.iter().zip(&x).map(|(a, b)| a / nw + b * (0.1 / nx)).collect();
        }
    }
    op.project(&mut x);
    x
}

/// `||(A - i lambda)^{-1}||_W` at one frequency.
pub fn resolvent_norm(op: &BlockOperator, lambda: f64, opts: &ResolventOptions) -> ResolventSample {
    resolvent_point(op, lambda, opts, None).0
}

/// As [`resolvent_norm`], also returning the maximising vector; `warm`
/// seeds the iteration.
pub fn resolvent_point(
    op: &BlockOperator,
    lambda: f64,
    opts: &ResolventOptions,
    warm: Option<&[Complex64]>,
) -> (ResolventSample, Option<Vec<Complex64>>) {
    let lambda_h = lambda.abs() * op.spacing();
    if lambda_h > opts.lambda_h_warn {
        log::warn!("lambda h = {lambda_h:.3} exceeds the trusted {}", opts.lambda_h_warn);
    }
    let z = Complex64::new(0.0, lambda);
    let solver = match op.shifted(z) {
        Ok(s) => s,
        Err(Error::Singular { pivot_ratio, .. }) => {
            let why = format!("spectral point: pivot ratio {pivot_ratio:.3e}");
            return (ResolventSample::spectral(lambda, lambda_h, why), None);
        }
        Err(e) => {
            let mut s = ResolventSample::spectral(lambda, lambda_h, e.to_string());
            s.norm = f64::NAN;
            s.sigma_min = f64::NAN;
            return (s, None);
        }
    };
    let start = start_vector(op, warm, opts.seed ^ lambda.to_bits());
    let lopts = LanczosOptions {
        wanted: 1,
        tol: opts.tol,
        max_dim: opts.max_dim,
        max_restarts: opts.max_restarts,
        which: Which::Largest,
    };
    let out = lanczos(
        start,
        |x: &[Complex64]| {
            let y = solver.solve_flat(x);
            let mut y = solver.solve_adjoint_flat(&y);
            op.project(&mut y);
            Ok(y)
        },
        |x: &[Complex64]| op.gram().apply(x),
        &lopts,
    );
    let out = match out {
        Ok(o) => o,
        Err(e) => {
            let s = ResolventSample {
                lambda,
                norm: f64::NAN,
                sigma_min: f64::NAN,
                iterations: 0,
                converged: false,
                reason: Some(e.to_string()),
                lambda_h,
            };
            return (s, None);
        }
    };
    let Some(top) = out.pairs.into_iter().next() else {
        return (
            ResolventSample::spectral(lambda, lambda_h, "empty Krylov space".into()),
            None,
        );
    };
    let norm = top.value.max(0.0).sqrt();
    let sigma = 1.0 / norm;
    if sigma < SPECTRAL_POINT * (op.nu_max() + lambda.abs()) {
        let why = format!("spectral point: sigma_min {sigma:.3e}");
        return (ResolventSample::spectral(lambda, lambda_h, why), None);
    }
    let sample = ResolventSample {
        lambda,
        norm,
        sigma_min: sigma,
        iterations: out.iterations,
        converged: out.converged,
        reason: (!out.converged).then(|| "Lanczos iteration limit reached".to_string()),
        lambda_h,
    };
    (sample, Some(top.vector))
}

/// Samples in input order; each chunk of points starts from the maximiser
/// of the last finished point of the previous chunk.
pub fn resolvent_sweep(op: &BlockOperator, lambdas: &[f64], opts: &ResolventOptions) -> Vec<ResolventSample> {
    let mut out = Vec::with_capacity(lambdas.len());
    let mut warm: Option<Vec<Complex64>> = None;
    for chunk in lambdas.chunks(opts.chunk.max(1)) {
        let results: Vec<_> = chunk
            .par_iter()
            .map(|&l| resolvent_point(op, l, opts, warm.as_deref()))
            .collect();
        for (s, v) in results {
            if v.is_some() {
                warm = v;
            }
            out.push(s);
        }
    }
    out
}

/// CSV with columns `lambda,norm,sigma_min,iterations,converged,lambda_h_ratio`.
pub fn write_sweep_csv<W: Write>(samples: &[ResolventSample], mut w: W) -> io::Result<()> {
    writeln!(w, "lambda,norm,sigma_min,iterations,converged,lambda_h_ratio")?;
    for s in samples {
        writeln!(
            w,
            "{:.17e},{:.17e},{:.17e},{},{},{:.6e}",
            s.lambda, s.norm, s.sigma_min, s.iterations, s.converged, s.lambda_h
        )?;
    }
    Ok(())
}

/// `C A C^+` for `C^T C = W / mu_ref`, `C = blockdiag(sqrt(Lambda) Q^T, Q^T)`,
/// dropping the kernel rows of `-L` (tori).
fn energy_frame(op: &BlockOperator) -> Result<DMatrix<f64>> {
    let n = op.dim();
    if n > DENSE_BLOCK_LIMIT {
        return Err(Error::TooLarge(2 * n));
    }
    let f = op.gram().factor()?;
    let r0 = f.rank_start();
    let r = n - r0;
    let dq = &f.q.transpose() * op.d().to_dense() * &f.q;
    let mut t = DMatrix::<f64>::zeros(r + n, r + n);
    for i in 0..r {
        let s = f.lambda[r0 + i].sqrt();
        t[(i, r + r0 + i)] = s;
        t[(r + r0 + i, i)] = -s;
    }
    t.view_mut((r, r), (n, n)).copy_from(&dq);
    Ok(t)
}

/// Dense oracle for `||(A - i lambda)^{-1}||_W`.
pub fn dense_resolvent_norm(op: &BlockOperator, lambda: f64) -> Result<f64> {
    let t = energy_frame(op)?;
    let m = t.nrows();
    let mut c = t.map(|v| Complex64::new(v, 0.0));
    for i in 0..m {
        c[(i, i)] -= Complex64::new(0.0, lambda);
    }
    let s = sigma_min(c);
    Ok(if s > 0.0 { 1.0 / s } else { f64::INFINITY })
}

/// All eigenvalues of `A` from the dense energy frame (kernel of `A`
/// included on tori).
pub fn dense_generator_eigenvalues(op: &BlockOperator) -> Result<Vec<Complex64>> {
    let t = energy_frame(op)?;
    let kernel = 2 * op.dim() - t.nrows();
    let mut ev = eigenvalues_real(t)?;
    ev.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), kernel));
    sort_generator(&mut ev, |z| *z);
    Ok(ev)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenPair<V> {
    pub mu: Complex64,
    pub vector: V,
    /// `||Op x - mu x|| / (max(|mu|, 1) ||x||)`, energy norm for `A`.
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectrumMode {
    Dense,
    /// `count` eigenvalues nearest `target`.
    ShiftInvert {
        target: Complex64,
        count: usize,
    },
}

fn sort_generator<T>(v: &mut [T], mu: impl Fn(&T) -> Complex64) {
    v.sort_by(|a, b| {
        let (x, y) = (mu(a), mu(b));
        x.im.abs()
            .total_cmp(&y.im.abs())
            .then(x.im.total_cmp(&y.im))
            .then(x.re.total_cmp(&y.re))
    });
}

fn laplacian_residual(l: &SparseOperator, mu: f64, x: &[f64]) -> f64 {
    let lx = l.apply(x);
    let r: f64 = lx.iter().zip(x).map(|(a, b)| (a - mu * b).powi(2)).sum::<f64>().sqrt();
    r / (mu.abs().max(1.0) * norm2(x))
}

/// Eigenpairs of a symmetric operator `L`, sorted by eigenvalue; vectors
/// normalised to unit Euclidean norm.
pub fn laplacian_spectrum(
    l: &SparseOperator,
    mode: SpectrumMode,
    ordering: Option<&Ordering>,
) -> Result<Vec<EigenPair<Vec<f64>>>> {
    let n = l.dim();
    let mut pairs = match mode {
        SpectrumMode::Dense => {
            if n > DENSE_LIMIT {
                return Err(Error::TooLarge(n));
            }
            let (vals, vecs) = symmetric_eigen(l.to_dense());
            vals.iter()
                .enumerate()
                .map(|(i, &mu)| {
                    let x: Vec<f64> = vecs.column(i).iter().copied().collect();
                    EigenPair {
                        mu: Complex64::new(mu, 0.0),
                        residual: laplacian_residual(l, mu, &x),
                        vector: x,
                    }
                })
                .collect::<Vec<_>>()
        }
        SpectrumMode::ShiftInvert { target, count } => {
            let ord = ordering.cloned().unwrap_or_else(|| Ordering::reverse_cuthill_mckee(l));
            symmetric_shift_invert(l, target.re, count, &ord, |_| ())?
        }
    };
    pairs.sort_by(|a, b| a.mu.re.total_cmp(&b.mu.re));
    Ok(pairs)
}

/// The `count` eigenpairs of symmetric `L` nearest `sigma` inside an
/// invariant subspace, given by an orthogonal projector `project` that
/// commutes with `L` (use a no-op for the whole space).
pub fn symmetric_shift_invert(
    l: &SparseOperator,
    target: f64,
    count: usize,
    ordering: &Ordering,
    project: impl Fn(&mut [f64]),
) -> Result<Vec<EigenPair<Vec<f64>>>> {
    let n = l.dim();
    let mut sigma = target;
    let lu = loop {
        let mut t: Vec<(usize, usize, f64)> = l.triplets().collect();
        t.extend((0..n).map(|i| (i, i, -sigma)));
        match BandLu::factor(&t, ordering.clone()) {
            Ok(lu) => break lu,
            // A shift sitting on an eigenvalue: nudge it off.
            Err(Error::Singular { .. }) if sigma == target => sigma += 1e-8 * sigma.abs().max(1.0),
            Err(e) => return Err(e),
        }
    };
    let solve = |x: &[f64]| {
        let mut y = x.to_vec();
        project(&mut y);
        let mut y = lu.solve(&y);
        project(&mut y);
        y
    };
    let mut start: Vec<f64> = random_state(n, 0x1a9).iter().take(n).map(|z| z.re).collect();
    project(&mut start);
    let out = lanczos(
        start,
        |x: &[f64]| Ok(solve(x)),
        |x: &[f64]| x.to_vec(),
        &LanczosOptions {
            wanted: count.min(n),
            tol: 1e-12,
            max_dim: (3 * count).max(count + 40).min(n),
            max_restarts: 12,
            which: Which::LargestMagnitude,
        },
    )?;
    if !out.converged {
        log::warn!("shift-invert Lanczos at {sigma} did not fully converge");
    }
    let mut pairs: Vec<EigenPair<Vec<f64>>> = out
        .pairs
        .into_iter()
        .map(|p| {
            let mut best = rayleigh_pair(l, p.vector);
            // Inverse-iteration polish; kept only where it helps, since
            // it can pull a pair far from the shift towards a neighbour.
            let mut x = best.vector.clone();
            for _ in 0..2 {
                x = solve(&x);
                let cand = rayleigh_pair(l, x.clone());
                x = cand.vector.clone();
                if cand.residual < best.residual && (cand.mu.re - best.mu.re).abs() <= 1e-8 * best.mu.re.abs().max(1.0)
                {
                    best = cand;
                }
            }
            best
        })
        .collect();
    pairs.sort_by(|a, b| a.mu.re.total_cmp(&b.mu.re));
    Ok(pairs)
}

fn rayleigh_pair(l: &SparseOperator, mut x: Vec<f64>) -> EigenPair<Vec<f64>> {
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mu = l.quad_form(&x);
    EigenPair {
        mu: Complex64::new(mu, 0.0),
        residual: laplacian_residual(l, mu, &x),
        vector: x,
    }
}

fn generator_residual(op: &BlockOperator, mu: Complex64, x: &[Complex64]) -> f64 {
    let ax = op.apply_flat(x);
    let r: Vec<Complex64> = ax.iter().zip(x).map(|(a, b)| a - mu * b).collect();
    let w = op.gram();
    let (nr, nx) = (w.norm(&r), w.norm(x));
    let scale = mu.norm().max(1.0);
    if nx > 0.0 {
        nr / (scale * nx)
    } else {
        norm2(&r) / (scale * norm2(x))
    }
}

/// Eigenvector of `A` for an eigenvalue estimate, by inverse iteration on
/// `K(mu)` and a complex-symmetric Rayleigh correction of `mu`.
pub fn refine_generator_pair(op: &BlockOperator, mu: Complex64) -> Result<EigenPair<StateVector>> {
    let n = op.dim();
    if mu.norm() == 0.0 && op.is_periodic() {
        let mut x = vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n];
        x.extend(vec![Complex64::new(0.0, 0.0); n]);
        return Ok(EigenPair {
            mu,
            residual: generator_residual(op, mu, &x),
            vector: StateVector::from_flat(&x),
        });
    }
    let mut u = random_state(n, 0xe16)[..n].to_vec();
    let mut best = mu;
    for _round in 0..2 {
        let mut delta = 1e-10 * best.norm().max(1.0);
        let solver = loop {
            match op.shifted(best + Complex64::new(delta, delta)) {
                Ok(s) => break s,
                Err(Error::Singular { .. }) if delta < 1e-3 => delta *= 100.0,
                Err(e) => return Err(e),
            }
        };
        for _ in 0..4 {
            // (A - s)^{-1}(0, u) has u-part K(s)^{-1} u.
            let mut x = vec![Complex64::new(0.0, 0.0); n];
            x.extend(&u);
            u = solver.solve_flat(&x)[..n].to_vec();
            let nu = norm2(&u);
            u.iter_mut().for_each(|v| *v /= nu);
        }
        best = rayleigh(op, &u, best);
    }
    let v: Vec<Complex64> = u.iter().map(|a| a * best).collect();
    let mut x = u;
    x.extend(v);
    Ok(EigenPair {
        mu: best,
        residual: generator_residual(op, best, &x),
        vector: StateVector::from_flat(&x),
    })
}

/// Root nearest `mu` of `mu^2 u^T u - mu u^T D u - u^T L u = 0`.
fn rayleigh(op: &BlockOperator, u: &[Complex64], mu: Complex64) -> Complex64 {
    let tt: Complex64 = u.iter().map(|a| a * a).sum();
    let tl: Complex64 = u.iter().zip(op.l().apply(u)).map(|(a, b)| a * b).sum();
    let td: Complex64 = u.iter().zip(op.d().apply(u)).map(|(a, b)| a * b).sum();
    if tt.norm() <= 1e-12 {
        return mu;
    }
    let disc = (td * td + 4.0 * tt * tl).sqrt();
    let (r1, r2) = ((td + disc) / (2.0 * tt), (td - disc) / (2.0 * tt));
    let best = if (r1 - mu).norm() <= (r2 - mu).norm() { r1 } else { r2 };
    if (best - mu).norm() > 1e-6 * mu.norm().max(1.0) {
        mu
    } else {
        best
    }
}

/// Eigenpairs of `A`, sorted by `|Im mu|`.
pub fn generator_spectrum(op: &BlockOperator, mode: SpectrumMode) -> Result<Vec<EigenPair<StateVector>>> {
    let values = match mode {
        SpectrumMode::Dense => dense_generator_eigenvalues(op)?,
        SpectrumMode::ShiftInvert { target, count } => {
            let solver = op.shifted(target)?;
            let out = arnoldi(
                random_state(op.dim(), 0xa7),
                |x| Ok(solver.solve_flat(x)),
                (2 * count + 20).max(40).min(2 * op.dim()),
                count,
            )?;
            out.values
                .iter()
                .filter(|t| t.norm() > 0.0)
                .map(|t| target + 1.0 / t)
                .collect()
        }
    };
    let mut pairs = values
        .par_iter()
        .map(|&mu| refine_generator_pair(op, mu))
        .collect::<Result<Vec<_>>>()?;
    sort_generator(&mut pairs, |p| p.mu);
    Ok(pairs)
}

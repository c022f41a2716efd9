//! Helmholtz-type estimates: absorbed solves, observability constants and
//! damped Schrödinger resolvent norms, all computed as exact extremal
//! singular values rather than sampled over right-hand sides.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kvop::{build_block, BlockOperator};
use crate::linalg::{dot, lanczos, norm2, BandLu, LanczosOptions, Ordering, SparseOperator, Which};
use crate::mesh::{smoothstep, DampingProfile, Grid, Region};
use crate::{Error, Result};

/// Equal to 1 on `plateau`, decaying to 0 over `width` by a `C^2` smoothstep
/// in the distance to the plateau.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffFunction {
    pub plateau: Region,
    pub width: f64,
}

impl CutoffFunction {
    pub fn new(plateau: Region, width: f64) -> Result<Self> {
        if !(width >= 0.0 && width.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cutoff width must be nonnegative, got {width}"
            )));
        }
        Ok(CutoffFunction { plateau, width })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = self.plateau.distance(x);
        if d == 0.0 {
            1.0
        } else if self.width > 0.0 {
            1.0 - smoothstep(d / self.width)
        } else {
            0.0
        }
    }

    /// Values at the grid nodes.
    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len()).map(|k| self.eval(grid.coords(k))).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// One point of a Helmholtz-type sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct HelmholtzSample {
    pub lambda_or_z: f64,
    pub constant: f64,
    pub converged: bool,
}

/// CSV with columns `lambda_or_z,constant,converged`.
pub fn write_helmholtz_csv<W: Write>(samples: &[HelmholtzSample], mut w: W) -> io::Result<()> {
    writeln!(w, "lambda_or_z,constant,converged")?;
    for s in samples {
        writeln!(w, "{:.17e},{:.17e},{}", s.lambda_or_z, s.constant, s.converged)?;
    }
    Ok(())
}

/// Extremal quantity with the vector attaining it.
#[derive(Clone, Debug)]
pub struct Extremal {
    pub constant: f64,
    pub vector: Vec<f64>,
    pub converged: bool,
}

impl Extremal {
    fn infinite(n: usize) -> Self {
        Extremal {
            constant: f64::INFINITY,
            vector: vec![0.0; n],
            converged: true,
        }
    }
}

fn start(n: usize) -> Vec<f64> {
    // Deterministic, generic start vector.
    (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.754_877_666).sin()).collect()
}

fn lanczos_opts() -> LanczosOptions {
    LanczosOptions {
        wanted: 1,
        tol: 1e-11,
        max_dim: 100,
        max_restarts: 20,
        which: Which::Largest,
    }
}

/// The discrete Laplacian of a grid with what the Helmholtz estimates need.
#[derive(Clone, Debug)]
pub struct Helmholtz {
    l: SparseOperator,
    ordering: Ordering,
    coords: Vec<Vec<f64>>,
    periodic: bool,
    spacing: f64,
}

impl Helmholtz {
    pub fn new(grid: &Grid) -> Self {
        let l = grid.laplacian();
        let ordering = grid.ordering_for(&l);
        Helmholtz {
            coords: (0..grid.len()).map(|k| grid.coords(k).to_vec()).collect(),
            periodic: grid.is_periodic(),
            spacing: grid.h_max(),
            l,
            ordering,
        }
    }

    pub fn dim(&self) -> usize {
        self.l.dim()
    }

    pub fn laplacian(&self) -> &SparseOperator {
        &self.l
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn indicator(&self, omega: &Region) -> Vec<f64> {
        self.coords
            .iter()
            .map(|x| if omega.contains(x) { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn sample(&self, a: &DampingProfile) -> Result<Vec<f64>> {
        a.validate_samples(self.coords.iter().map(|x| &x[..]))
            .map_err(Error::InvalidDamping)?;
        Ok(self.coords.iter().map(|x| a.eval(x)).collect())
    }

    /// Matrix of the `H^1` form: `-L` (Dirichlet) or `I - L` (periodic).
    pub fn h1_form(&self) -> SparseOperator {
        let shift = if self.periodic { 1.0 } else { 0.0 };
        self.l.scaled(-1.0).plus_diagonal(&vec![shift; self.dim()])
    }

    fn factor_complex(&self, diag: &[Complex64]) -> Result<BandLu<Complex64>> {
        let mut t: Vec<(usize, usize, Complex64)> = self
            .l
            .triplets()
            .map(|(i, j, v)| (i, j, Complex64::new(v, 0.0)))
            .collect();
        t.extend(diag.iter().enumerate().map(|(i, &d)| (i, i, d)));
        BandLu::factor(&t, self.ordering.clone())
    }

    /// Solves `(L + tau^2 +- i b^2) u = f` with `b` given at the nodes.
    pub fn solve_absorbed(&self, tau: f64, b: &[f64], sign: Sign, f: &[Complex64]) -> Result<Vec<Complex64>> {
        let n = self.dim();
        if b.len() != n || f.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: if b.len() != n { b.len() } else { f.len() },
            });
        }
        let diag: Vec<Complex64> = b
            .iter()
            .map(|&bi| Complex64::new(tau * tau, sign.value() * bi * bi))
            .collect();
        let lu = self.factor_complex(&diag)?;
        let mut u = lu.solve(f);
        let apply = |u: &[Complex64]| -> Vec<Complex64> {
            let mut y = self.l.apply(u);
            y.iter_mut()
                .zip(u.iter().zip(&diag))
                .for_each(|(y, (x, d))| *y += d * x);
            y
        };
        // One step of iterative refinement, then an explicit residual check.
        let r: Vec<Complex64> = apply(&u).iter().zip(f).map(|(a, b)| b - a).collect();
        let du = lu.solve(&r);
        u.iter_mut().zip(du).for_each(|(a, b)| *a += b);
        let res: f64 = norm2(&apply(&u).iter().zip(f).map(|(a, b)| a - b).collect::<Vec<_>>());
        if res > 1e-10 * norm2(f).max(f64::MIN_POSITIVE) {
            return Err(Error::NotConverged(format!("absorbed solve residual {res:.3e}")));
        }
        Ok(u)
    }

    /// Factorization of the augmented system `[[-(1+|lambda|)^2 I, A], [A, P_omega]]`,
    /// `A = L + lambda^2`, which solves with the stacked normal operator
    /// `A^2/(1+|lambda|)^2 + P_omega` without squaring the conditioning.
    fn stacked_solver(&self, lambda: f64, mask: &[f64]) -> Result<Option<StackedSolver>> {
        let n = self.dim();
        let s = (1.0 + lambda.abs()).powi(2);
        let mut t = Vec::with_capacity(2 * self.l.nnz() + 3 * n);
        for (i, j, v) in self.l.triplets() {
            t.push((i, n + j, v));
            t.push((n + i, j, v));
        }
        for i in 0..n {
            t.push((i, i, -s));
            t.push((i, n + i, lambda * lambda));
            t.push((n + i, i, lambda * lambda));
            t.push((n + i, n + i, mask[i]));
        }
        let mut perm = Vec::with_capacity(2 * n);
        for k in 0..n {
            let i = self.ordering.old_index(k);
            perm.push(i);
            perm.push(n + i);
        }
        match BandLu::factor(&t, Ordering::from_permutation(perm)) {
            Ok(lu) => Ok(Some(StackedSolver { lu, n })),
            Err(Error::Singular { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Smallest `C` with `||u|| <= C/(1+|lambda|) ||(L+lambda^2)u|| + C ||1_omega u||`
    /// in the stacked form: `1 / sigma_min` of `u -> ((L+lambda^2)u/(1+|lambda|), 1_omega u)`.
    pub fn observability_constant(&self, lambda: f64, omega: &Region) -> Result<Extremal> {
        let n = self.dim();
        let mask = self.indicator(omega);
        let Some(g) = self.stacked_solver(lambda, &mask)? else {
            return Ok(Extremal::infinite(n));
        };
        let out = lanczos(
            start(n),
            |x: &[f64]| Ok(g.solve(x)),
            |x: &[f64]| x.to_vec(),
            &lanczos_opts(),
        )?;
        let top = out
            .pairs
            .into_iter()
            .next()
            .ok_or_else(|| Error::NotConverged("empty Krylov space".into()))?;
        let constant = top.value.max(0.0).sqrt();
        let mut vector = top.vector;
        let nv = norm2(&vector);
        vector.iter_mut().for_each(|v| *v /= nv);
        Ok(Extremal {
            constant,
            vector,
            converged: out.converged,
        })
    }

    /// Ratio `||u|| / ||(L+lambda^2)u/(1+|lambda|), 1_omega u||` for a given `u`.
    pub fn observability_ratio(&self, lambda: f64, omega: &Region, u: &[f64]) -> f64 {
        let mask = self.indicator(omega);
        let mut au = self.l.apply(u);
        au.iter_mut()
            .zip(u)
            .for_each(|(a, x)| *a = (*a + lambda * lambda * x) / (1.0 + lambda.abs()));
        let obs: f64 = u.iter().zip(&mask).map(|(x, m)| (m * x).powi(2)).sum();
        norm2(u) / (norm2(&au).powi(2) + obs).sqrt()
    }

    /// As [`Self::observability_constant`] with `||u||^2 + ||u||_{H^1}^2/(1+|lambda|)^2`
    /// on the left.
    pub fn strong_observability_constant(&self, lambda: f64, omega: &Region) -> Result<Extremal> {
        let n = self.dim();
        let mask = self.indicator(omega);
        let Some(g) = self.stacked_solver(lambda, &mask)? else {
            return Ok(Extremal::infinite(n));
        };
        let s = 1.0 / (1.0 + lambda.abs()).powi(2);
        let b = self.h1_form().scaled(s).plus_diagonal(&vec![1.0; n]);
        let out = lanczos(
            start(n),
            |x: &[f64]| Ok(g.solve(&b.apply(x))),
            |x: &[f64]| b.apply(x),
            &lanczos_opts(),
        )?;
        let top = out
            .pairs
            .into_iter()
            .next()
            .ok_or_else(|| Error::NotConverged("empty Krylov space".into()))?;
        Ok(Extremal {
            constant: top.value.max(0.0).sqrt(),
            vector: top.vector,
            converged: out.converged,
        })
    }

    fn schrodinger_lu(&self, a: &[f64], z: f64) -> Result<Option<BandLu<Complex64>>> {
        let diag: Vec<Complex64> = a.iter().map(|&ai| Complex64::new(-z, ai)).collect();
        match self.factor_complex(&diag) {
            Ok(lu) => Ok(Some(lu)),
            Err(Error::Singular { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// `||(L + i a - z)^{-1}||` from `L^2` to `L^2`, `a` given at the nodes.
    pub fn damped_schrodinger_norm(&self, a: &[f64], z: f64) -> Result<Extremal> {
        let n = self.dim();
        let Some(lu) = self.schrodinger_lu(a, z)? else {
            return Ok(Extremal::infinite(n));
        };
        let out = lanczos(
            start(n).into_iter().map(|v| Complex64::new(v, 0.3 * v)).collect(),
            |x: &[Complex64]| Ok(lu.solve_conj(&lu.solve(x))),
            |x: &[Complex64]| x.to_vec(),
            &lanczos_opts(),
        )?;
        let top = out
            .pairs
            .into_iter()
            .next()
            .ok_or_else(|| Error::NotConverged("empty Krylov space".into()))?;
        Ok(Extremal {
            constant: top.value.max(0.0).sqrt(),
            vector: top.vector.iter().map(|v| v.norm()).collect(),
            converged: out.converged,
        })
    }

    /// `||(L + i a - z)^{-1}||` from `H^{-1}` to `L^2`, with
    /// `||g||_{H^{-1}}^2 = g^T N^{-1} g` and `N` the [`Self::h1_form`].
    pub fn damped_schrodinger_h_minus_one_norm(&self, a: &[f64], z: f64) -> Result<Extremal> {
        let n = self.dim();
        let Some(lu) = self.schrodinger_lu(a, z)? else {
            return Ok(Extremal::infinite(n));
        };
        let nform = self.h1_form();
        let out = lanczos(
            start(n).into_iter().map(|v| Complex64::new(v, -0.2 * v)).collect(),
            |x: &[Complex64]| Ok(lu.solve_conj(&lu.solve(&nform.apply(x)))),
            |x: &[Complex64]| nform.apply(x),
            &lanczos_opts(),
        )?;
        let top = out
            .pairs
            .into_iter()
            .next()
            .ok_or_else(|| Error::NotConverged("empty Krylov space".into()))?;
        Ok(Extremal {
            constant: top.value.max(0.0).sqrt(),
            vector: top.vector.iter().map(|v| v.norm()).collect(),
            converged: out.converged,
        })
    }

    /// Upper bound on the `H^{-1} -> L^2` norm implied by the `L^2 -> L^2`
    /// norm `r` through the energy identity of the adjoint problem.
    pub fn duality_bound(&self, r: f64, z: f64) -> f64 {
        let zz = if self.periodic { 1.0 + z.abs() } else { z.abs() };
        (r + zz * r * r).sqrt()
    }

    pub fn observability_sweep(&self, lambdas: &[f64], omega: &Region) -> Vec<HelmholtzSample> {
        lambdas
            .par_iter()
            .map(|&l| sample(l, self.observability_constant(l, omega)))
            .collect()
    }

    pub fn strong_observability_sweep(&self, lambdas: &[f64], omega: &Region) -> Vec<HelmholtzSample> {
        lambdas
            .par_iter()
            .map(|&l| sample(l, self.strong_observability_constant(l, omega)))
            .collect()
    }

    pub fn schrodinger_sweep(&self, a: &[f64], zs: &[f64]) -> Vec<HelmholtzSample> {
        zs.par_iter()
            .map(|&z| sample(z, self.damped_schrodinger_norm(a, z)))
            .collect()
    }

    pub fn schrodinger_h_minus_one_sweep(&self, a: &[f64], zs: &[f64]) -> Vec<HelmholtzSample> {
        zs.par_iter()
            .map(|&z| sample(z, self.damped_schrodinger_h_minus_one_norm(a, z)))
            .collect()
    }
}

struct StackedSolver {
    lu: BandLu<f64>,
    n: usize,
}

impl StackedSolver {
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = vec![0.0; self.n];
        rhs.extend_from_slice(b);
        self.lu.solve(&rhs).split_off(self.n)
    }
}

fn sample(x: f64, r: Result<Extremal>) -> HelmholtzSample {
    match r {
        Ok(e) => HelmholtzSample {
            lambda_or_z: x,
            constant: e.constant,
            converged: e.converged,
        },
        Err(err) => {
            log::warn!("point {x}: {err}");
            HelmholtzSample {
                lambda_or_z: x,
                constant: f64::NAN,
                converged: false,
            }
        }
    }
}

/// `<(L + tau^2 +- i b^2) v, v>`, whose imaginary part is `+- ||b v||^2`.
pub fn absorbed_form(l: &SparseOperator, tau: f64, b: &[f64], sign: Sign, v: &[Complex64]) -> Complex64 {
    let mut y = l.apply(v);
    for ((y, x), bi) in y.iter_mut().zip(v).zip(b) {
        *y += Complex64::new(tau * tau, sign.value() * bi * bi) * x;
    }
    dot(&y, v)
}

/// Generator `[[0, I], [L, -a]]` of the wave equation with classical
/// damping `+ a u_t`, for comparison with the Kelvin-Voigt generator.
pub fn classical_damping_block(grid: &Grid, a: &DampingProfile) -> Result<BlockOperator> {
    let h = Helmholtz::new(grid);
    let samples = h.sample(a)?;
    let d = SparseOperator::from_triplets(grid.len(), samples.iter().enumerate().map(|(i, &v)| (i, i, -v)));
    Ok(build_block(grid.laplacian(), d, grid.mu_ref())?
        .with_periodic(grid.is_periodic())
        .with_spacing(grid.h_max()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DomainSpec;
    use crate::spectral::{resolvent_norm, ResolventOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interval(res: f64) -> (Grid, Helmholtz) {
        let g = Grid::build(&DomainSpec::interval(1.0).unwrap(), res).unwrap();
        let h = Helmholtz::new(&g);
        (g, h)
    }

    fn random_c(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    fn mid() -> Region {
        Region::Slab {
            axis: 0,
            lo: 0.3,
            hi: 0.7,
        }
    }

    #[test]
    fn cutoff_has_plateau_and_compact_transition() {
        let chi = CutoffFunction::new(
            Region::Slab {
                axis: 0,
                lo: -0.35,
                hi: 0.35,
            },
            0.15,
        )
        .unwrap();
        assert_eq!(chi.eval(&[0.2, 0.9]), 1.0);
        assert_eq!(chi.eval(&[0.5, 0.0]), 0.0);
        let v = chi.eval(&[0.42, 0.0]);
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn absorbed_solve_is_consistent() {
        let (g, h) = interval(80.0);
        let chi = CutoffFunction::new(mid(), 0.1).unwrap().sample(&g);
        let w = random_c(g.len(), 1);
        for sign in [Sign::Plus, Sign::Minus] {
            let mut f = h.laplacian().apply(&w);
            for ((fi, wi), bi) in f.iter_mut().zip(&w).zip(&chi) {
                *fi += Complex64::new(30.0, sign.value() * bi * bi) * wi;
            }
            let u = h.solve_absorbed(30f64.sqrt(), &chi, sign, &f).unwrap();
            let err = u.iter().zip(&w).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err < 1e-9);
        }
        let zero = vec![0.0; g.len()];
        let f = random_c(g.len(), 2);
        assert!(h.solve_absorbed(7.3, &zero, Sign::Plus, &f).is_ok());
    }

    #[test]
    fn absorbed_imaginary_part_is_observation() {
        let (g, h) = interval(60.0);
        let chi = CutoffFunction::new(mid(), 0.1).unwrap().sample(&g);
        let v = random_c(g.len(), 3);
        let bv: f64 = v.iter().zip(&chi).map(|(x, b)| (x * b).norm_sqr()).sum();
        for sign in [Sign::Plus, Sign::Minus] {
            let form = absorbed_form(h.laplacian(), 4.0, &chi, sign, &v);
            assert!((sign.value() * form.im - bv).abs() <= 1e-10 * bv);
        }
    }

    #[test]
    fn full_observation_caps_the_constant() {
        let (_, h) = interval(50.0);
        for lambda in [3.0, 12.5] {
            let c = h.observability_constant(lambda, &Region::Whole).unwrap();
            assert!(c.constant <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn invisible_eigenfunction_gives_infinite_constant() {
        let (g, h) = interval(20.0);
        let hh = g.h()[0];
        let nu = 2.0 / hh * (std::f64::consts::PI * hh / 2.0).sin();
        let c = h.observability_constant(nu, &Region::Empty).unwrap();
        assert!(c.constant > 1e10, "{}", c.constant);
    }

    #[test]
    fn maximiser_attains_the_constant() {
        let (_, h) = interval(100.0);
        let c = h.observability_constant(9.0, &mid()).unwrap();
        let ratio = h.observability_ratio(9.0, &mid(), &c.vector);
        assert!(((ratio - c.constant) / c.constant).abs() < 1e-6);
    }

    #[test]
    fn strong_constant_dominates_weak() {
        let (_, h) = interval(100.0);
        for lambda in [5.0, 15.0] {
            let weak = h.observability_constant(lambda, &mid()).unwrap().constant;
            let strong = h.strong_observability_constant(lambda, &mid()).unwrap().constant;
            assert!(strong >= weak * (1.0 - 1e-9));
            assert!(strong / weak <= 3.0, "{strong} / {weak}");
        }
    }

    #[test]
    fn undamped_schrodinger_is_distance_to_spectrum() {
        let (g, h) = interval(30.0);
        let hh = g.h()[0];
        let mu: Vec<f64> = (1..30)
            .map(|k| 4.0 / (hh * hh) * (k as f64 * std::f64::consts::PI * hh / 2.0).sin().powi(2))
            .collect();
        // L has eigenvalues -mu_k, so the spectrum is met for negative z.
        let z = -0.5 * (mu[2] + mu[3]);
        let r = h.damped_schrodinger_norm(&vec![0.0; g.len()], z).unwrap();
        assert!((r.constant * (mu[3] - mu[2]) / 2.0 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn constant_damping_bounds_schrodinger_norm() {
        let g = Grid::build(&DomainSpec::torus(&[1.0, 1.0]).unwrap(), 12.0).unwrap();
        let h = Helmholtz::new(&g);
        let a = h.sample(&DampingProfile::constant(0.7)).unwrap();
        for z in [0.0, -39.5, -200.0, 15.0] {
            let r = h.damped_schrodinger_norm(&a, z).unwrap();
            assert!(r.constant <= 1.0 / 0.7 + 1e-9);
            let weak = h.damped_schrodinger_h_minus_one_norm(&a, z).unwrap();
            assert!(weak.constant <= h.duality_bound(r.constant, z) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn observation_chain_is_an_identity() {
        let (g, h) = interval(40.0);
        let lambda: f64 = 6.0;
        let mask = h.indicator(&mid());
        let u = random_c(g.len(), 9);
        let g_part = random_c(g.len(), 10);
        let lu = h.laplacian().apply(&u);
        let f: Vec<Complex64> = (0..u.len())
            .map(|i| lu[i] + lambda * lambda * u[i] - g_part[i])
            .collect();
        for i in 0..u.len() {
            let i1 = Complex64::new(0.0, mask[i]);
            let lhs = lu[i] + i1 * u[i] + lambda * lambda * u[i];
            let rhs = (f[i] + i1 * u[i]) + g_part[i];
            assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn classical_damping_is_dissipative() {
        let g = Grid::build(&DomainSpec::interval(1.0).unwrap(), 40.0).unwrap();
        let op = classical_damping_block(&g, &DampingProfile::indicator(mid(), 1.0)).unwrap();
        let x = random_c(2 * g.len(), 5);
        assert!(op.gram().inner(&op.apply_flat(&x), &x).re <= 0.0);
        assert!(resolvent_norm(&op, 4.0, &ResolventOptions::default()).norm.is_finite());
    }
}

//! Complex basis pursuit denoising
//!
//! ```text
//! minimise sum_j |x_j|  subject to  ||y - D x||_2 <= epsilon
//! ```
//!
//! solved by ADMM with the splitting `z = x`, `w = D x`. The `z` step is the
//! complex soft threshold (shrink the modulus, keep the phase), the `w` step
//! projects onto the Euclidean ball of radius `epsilon` around `y`, and the
//! `x` step solves `(I + D^H D) x = q` through a cached Cholesky factor of
//! the small `I + D D^H`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefficientVector, CsiVector, Dictionary};

/// Noise level `epsilon` of the constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum NoiseLevel {
    /// Fraction of `||y||_2`.
    Relative(f64),
    /// Absolute, in the units of `y`.
    Absolute(f64),
}

impl NoiseLevel {
    pub fn resolve(&self, y_norm: f64) -> f64 {
        match *self {
            NoiseLevel::Relative(r) => r * y_norm,
            NoiseLevel::Absolute(e) => e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: NoiseLevel,
    pub max_iters: usize,
    /// Relative primal/dual residual tolerance.
    pub tol: f64,
    /// ADMM penalty.
    pub rho: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: NoiseLevel::Relative(0.1),
            max_iters: 2000,
            tol: 1e-6,
            rho: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn with_epsilon(mut self, epsilon: NoiseLevel) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let eps = match self.epsilon {
            NoiseLevel::Relative(v) | NoiseLevel::Absolute(v) => v,
        };
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::Config(format!("epsilon must be finite and >= 0, got {eps}")));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::Config(format!("rho must be > 0, got {}", self.rho)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x_hat: CoefficientVector,
    pub iterations: usize,
    /// `||y - D x_hat||_2`, recomputed from the returned coefficients.
    pub residual_norm: f64,
    /// The resolved noise level.
    pub epsilon: f64,
    pub converged: bool,
}

/// Complex soft threshold: `z * max(0, 1 - t / |z|)`.
pub fn soft_threshold(z: Complex64, t: f64) -> Complex64 {
    let m = z.norm();
    if m <= t {
        Complex64::new(0.0, 0.0)
    } else {
        z * (1.0 - t / m)
    }
}

/// BPDN solver bound to one dictionary matrix. Construction factors
/// `I + D D^H` once; every [`solve`](Self::solve) reuses it.
#[derive(Debug, Clone)]
pub struct BpdnSolver {
    atoms: DMatrix<Complex64>,
    outer: DMatrix<Complex64>,
    factor: Cholesky<Complex64, Dyn>,
}

impl BpdnSolver {
    pub fn new(atoms: DMatrix<Complex64>) -> Result<Self> {
        if atoms.ncols() == 0 || atoms.nrows() == 0 {
            return Err(Error::EmptyInput("dictionary has no atoms".into()));
        }
        let outer = &atoms * atoms.adjoint();
        let mut shifted = outer.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += Complex64::new(1.0, 0.0);
        }
        let factor = Cholesky::new(shifted).ok_or_else(|| Error::Config("I + D D^H is not positive definite".into()))?;
        Ok(Self { atoms, outer, factor })
    }

    pub fn for_dictionary(dict: &Dictionary) -> Result<Self> {
        Self::new(dict.atoms().clone())
    }

    pub fn atoms(&self) -> &DMatrix<Complex64> {
        &self.atoms
    }

    pub fn rows(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn solve_slice(&self, y: &[Complex64], cfg: &SolverConfig) -> Result<SolveResult> {
        self.solve(&DVector::from_column_slice(y), cfg)
    }

    pub fn solve(&self, y: &DVector<Complex64>, cfg: &SolverConfig) -> Result<SolveResult> {
        cfg.validate()?;
        let (m, n) = self.atoms.shape();
        if y.len() != m {
            return Err(Error::Dimension { expected: m, found: y.len() });
        }
        let y_norm = y.norm();
        let epsilon = cfg.epsilon.resolve(y_norm);
        if y_norm <= epsilon {
            // zero is feasible and has zero l1 norm
            return Ok(SolveResult {
                x_hat: CoefficientVector::zeros(n),
                iterations: 0,
                residual_norm: y_norm,
                epsilon,
                converged: true,
            });
        }

        // Work on y / ||y|| so the fixed threshold 1 / rho is scale free.
        let yn = y.unscale(y_norm);
        let eps_n = epsilon / y_norm;
        let (mut z, iterations, admm_converged) = self.admm(&yn, eps_n, cfg);
        self.polish(&mut z, &yn, eps_n);

        let x_hat = z.scale(y_norm);
        let residual_norm = (y - &self.atoms * &x_hat).norm();
        let converged = admm_converged && residual_norm <= epsilon * (1.0 + cfg.tol);
        Ok(SolveResult {
            x_hat: CoefficientVector(x_hat),
            iterations,
            residual_norm,
            epsilon,
            converged,
        })
    }

    fn admm(&self, y: &DVector<Complex64>, eps: f64, cfg: &SolverConfig) -> (DVector<Complex64>, usize, bool) {
        let (m, n) = self.atoms.shape();
        let d = &self.atoms;
        let mut rho = cfg.rho;
        let mut z = DVector::<Complex64>::zeros(n);
        let mut u = DVector::<Complex64>::zeros(n);
        let mut w = DVector::<Complex64>::zeros(m);
        let mut v = DVector::<Complex64>::zeros(m);
        let mut x = DVector::<Complex64>::zeros(n);
        let mut z_prev = DVector::<Complex64>::zeros(n);
        let mut w_prev = DVector::<Complex64>::zeros(m);

        for iter in 1..=cfg.max_iters {
            // x step: (I + D^H D) x = a + D^H b, via
            // D x = (I + D D^H)^-1 (D a + D D^H b) and x = a + D^H (b - D x).
            let a = &z - &u;
            let b = &w - &v;
            let t = d * &a + &self.outer * &b;
            let dx = self.factor.solve(&t);
            x.copy_from(&a);
            x.gemv_ad(Complex64::new(1.0, 0.0), d, &(&b - &dx), Complex64::new(1.0, 0.0));

            z_prev.copy_from(&z);
            w_prev.copy_from(&w);
            for j in 0..n {
                z[j] = soft_threshold(x[j] + u[j], 1.0 / rho);
            }
            let q = &dx + &v;
            let offset = &q - y;
            let dist = offset.norm();
            w = if dist <= eps { q } else { y + offset.scale(eps / dist) };

            u += &x - &z;
            v += &dx - &w;

            let primal = ((&x - &z).norm_squared() + (&dx - &w).norm_squared()).sqrt();
            let dual = rho * ((&z - &z_prev).norm_squared() + (&w - &w_prev).norm_squared()).sqrt();
            let scale_pri = (x.norm_squared() + dx.norm_squared())
                .sqrt()
                .max((z.norm_squared() + w.norm_squared()).sqrt());
            let scale_dual = rho * (u.norm_squared() + v.norm_squared()).sqrt();
            if primal <= cfg.tol * scale_pri.max(1e-12) && dual <= cfg.tol * scale_dual.max(1e-12) {
                return (z, iter, true);
            }
            // residual balancing; the x step does not depend on rho
            if iter % RHO_UPDATE_EVERY == 0 {
                let (p, q) = (primal / scale_pri.max(1e-12), dual / scale_dual.max(1e-12));
                let factor = if p > RHO_BALANCE * q {
                    RHO_STEP
                } else if q > RHO_BALANCE * p {
                    1.0 / RHO_STEP
                } else {
                    1.0
                };
                if factor != 1.0 {
                    rho *= factor;
                    u.unscale_mut(factor);
                    v.unscale_mut(factor);
                }
            }
        }
        (z, cfg.max_iters, false)
    }

    /// Moves an infeasible iterate the shortest way along the segment to the
    /// least-squares fit on its own support, stopping on the constraint
    /// boundary.
    fn polish(&self, z: &mut DVector<Complex64>, y: &DVector<Complex64>, eps: f64) {
        let support: Vec<usize> = (0..z.len()).filter(|&j| z[j].norm() > 0.0).collect();
        if support.is_empty() || support.len() > self.atoms.nrows() {
            return;
        }
        let r0 = y - &self.atoms * &*z;
        let r0_sq = r0.norm_squared();
        if r0_sq <= eps * eps {
            return;
        }
        let sub = self.atoms.select_columns(&support);
        let Some(gram) = Cholesky::new(sub.ad_mul(&sub)) else {
            return;
        };
        let ls = gram.solve(&sub.ad_mul(y));
        let z_s = DVector::from_iterator(support.len(), support.iter().map(|&j| z[j]));
        let step = &ls - &z_s;
        let delta = &sub * &step;
        // ||r0 - t delta||^2 = eps^2, smallest root in (0, 1]
        let qa = delta.norm_squared();
        let qb = -2.0 * r0.dotc(&delta).re;
        let qc = r0_sq - eps * eps;
        let disc = qb * qb - 4.0 * qa * qc;
        if qa == 0.0 || disc < 0.0 {
            return;
        }
        let t = (-qb - disc.sqrt()) / (2.0 * qa);
        if !(t > 0.0 && t <= 1.0) {
            return;
        }
        for (k, &j) in support.iter().enumerate() {
            z[j] += step[k] * t;
        }
    }
}

const RHO_UPDATE_EVERY: usize = 10;
const RHO_BALANCE: f64 = 10.0;
const RHO_STEP: f64 = 2.0;

/// One-shot BPDN solve of `y` over `dict`.
pub fn solve_bpdn(dict: &Dictionary, y: &CsiVector, cfg: &SolverConfig) -> Result<SolveResult> {
    if y.len() != dict.rows() {
        return Err(Error::Dimension {
            expected: dict.rows(),
            found: y.len(),
        });
    }
    BpdnSolver::for_dictionary(dict)?.solve_slice(y.values(), cfg)
}

/// `r_c = ||y - D mask_c(x_hat)||_2` for every class block of `dict`, in
/// block order.
pub fn class_residuals(dict: &Dictionary, y: &[Complex64], x_hat: &CoefficientVector) -> Result<Vec<f64>> {
    if x_hat.len() != dict.columns() {
        return Err(Error::Dimension {
            expected: dict.columns(),
            found: x_hat.len(),
        });
    }
    if y.len() != dict.rows() {
        return Err(Error::Dimension {
            expected: dict.rows(),
            found: y.len(),
        });
    }
    let y = DVector::from_column_slice(y);
    Ok(dict
        .blocks()
        .iter()
        .map(|block| {
            let part = dict.atoms().columns(block.start, block.count) * x_hat.0.rows(block.start, block.count);
            (&y - part).norm()
        })
        .collect())
}

/// Real embedding of a complex problem: `[Re D, -Im D; Im D, Re D]` and
/// `[Re y; Im y]`, stored with zero imaginary parts. l1 over the embedded
/// coefficients penalises real and imaginary parts separately, so this is
/// a cross-check, not an equivalent problem.
pub fn realify(atoms: &DMatrix<Complex64>, y: &[Complex64]) -> (DMatrix<Complex64>, Vec<Complex64>) {
    let (m, n) = atoms.shape();
    let mut out = DMatrix::<Complex64>::zeros(2 * m, 2 * n);
    for i in 0..m {
        for j in 0..n {
            let a = atoms[(i, j)];
            out[(i, j)] = Complex64::new(a.re, 0.0);
            out[(i, j + n)] = Complex64::new(-a.im, 0.0);
            out[(i + m, j)] = Complex64::new(a.im, 0.0);
            out[(i + m, j + n)] = Complex64::new(a.re, 0.0);
        }
    }
    let yr = y
        .iter()
        .map(|v| Complex64::new(v.re, 0.0))
        .chain(y.iter().map(|v| Complex64::new(v.im, 0.0)))
        .collect();
    (out, yr)
}

/// Inverse of the coefficient embedding used by [`realify`].
pub fn complexify(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len() / 2;
    (0..n).map(|j| Complex64::new(x[j].re, x[j + n].re)).collect()
}

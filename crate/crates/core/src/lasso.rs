//! Weighted Lasso by cyclic coordinate descent over streaming moments.
//!
//! The solver minimizes
//!
//! ```text
//!     (1/2) Σ_i w_i (y_i - x_iᵀβ)² + λ‖β‖₁
//! ```
//!
//! which, up to a constant, is `(1/2) βᵀAβ - bᵀβ + λ‖β‖₁` with `A` the
//! weighted Gram matrix and `b` the weighted cross-moment. With the factor
//! one half, each coordinate update thresholds at exactly `λ` and the zero
//! solution appears at exactly `λ = max_j |b_j|`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::moments::WeightedMoments;

/// Diagonal entries at or below this value mark a never-excited coordinate.
const DIAG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdOptions {
    /// Stop once the largest coordinate change in a sweep drops below this.
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_sweeps: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub beta: DVector<f64>,
    pub lambda: f64,
    /// Indices of nonzero coefficients, ascending.
    pub active_set: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

impl LassoFit {
    pub fn zero(p: usize, lambda: f64) -> Self {
        Self {
            beta: DVector::zeros(p),
            lambda,
            active_set: Vec::new(),
            iterations: 0,
            converged: true,
        }
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    pub fn l1_norm(&self) -> f64 {
        self.beta.iter().map(|b| b.abs()).sum()
    }

    pub(crate) fn from_beta(
        beta: DVector<f64>,
        lambda: f64,
        iterations: usize,
        converged: bool,
    ) -> Self {
        let active_set = support(&beta);
        Self {
            beta,
            lambda,
            active_set,
            iterations,
            converged,
        }
    }
}

pub fn support(beta: &DVector<f64>) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect()
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Smallest penalty at which the all-zero vector solves the problem.
pub fn lambda_max(m: &WeightedMoments) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::EmptyStream);
    }
    Ok(m.cross().amax())
}

pub fn fit(m: &WeightedMoments, lambda: f64, warm: Option<&LassoFit>) -> Result<LassoFit> {
    fit_with(m, lambda, warm, &CdOptions::default())
}

pub fn fit_with(
    m: &WeightedMoments,
    lambda: f64,
    warm: Option<&LassoFit>,
    opts: &CdOptions,
) -> Result<LassoFit> {
    let start = warm.map(|w| &w.beta);
    solve_quadratic(m.gram(), m.cross(), lambda, start, opts)
}

/// Minimizes `(1/2) βᵀAβ - bᵀβ + λ‖β‖₁` for symmetric PSD `A`.
pub fn solve_quadratic(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lambda: f64,
    start: Option<&DVector<f64>>,
    opts: &CdOptions,
) -> Result<LassoFit> {
    let p = b.len();
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::NegativeLambda(lambda));
    }
    if a.nrows() != p || a.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: a.nrows(),
        });
    }

    let mut beta = match start {
        Some(s) if s.len() == p => s.clone(),
        Some(s) => {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: s.len(),
            })
        }
        None => DVector::zeros(p),
    };
    for j in 0..p {
        if a[(j, j)] <= DIAG_FLOOR {
            beta[j] = 0.0;
        }
    }

    // residual correlation b - Aβ
    let mut resid = b - a * &beta;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..p {
            let ajj = a[(j, j)];
            if ajj <= DIAG_FLOOR {
                continue;
            }
            let old = beta[j];
            let z = resid[j] + ajj * old;
            let new = soft_threshold(z, lambda) / ajj;
            let delta = new - old;
            if delta != 0.0 {
                beta[j] = new;
                resid.axpy(-delta, &a.column(j), 1.0);
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < opts.tol {
            converged = true;
            break;
        }
    }

    if converged {
        if let Some(polished) = polish(a, b, lambda, &beta) {
            beta = polished;
        }
    }
    Ok(LassoFit::from_beta(beta, lambda, sweeps, converged))
}

/// Re-solves the stationarity equations on the active set with the signs
/// fixed, keeping the result only if it is sign-consistent and KKT-feasible.
fn polish(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lambda: f64,
    beta: &DVector<f64>,
) -> Option<DVector<f64>> {
    let active = support(beta);
    if active.is_empty() {
        return None;
    }
    let k = active.len();
    let sub = DMatrix::from_fn(k, k, |i, j| a[(active[i], active[j])]);
    let rhs = DVector::from_fn(k, |i, _| b[active[i]] - lambda * beta[active[i]].signum());
    let sol = sub.cholesky()?.solve(&rhs);
    let mut out = DVector::zeros(b.len());
    for (i, &j) in active.iter().enumerate() {
        if sol[i] == 0.0 || sol[i].signum() != beta[j].signum() || !sol[i].is_finite() {
            return None;
        }
        out[j] = sol[i];
    }
    let slack = lambda * (1.0 + 1e-9) + 1e-12 * b.amax().max(1.0);
    let resid = b - a * &out;
    let feasible = (0..b.len())
        .filter(|j| out[*j] == 0.0)
        .all(|j| resid[j].abs() <= slack);
    feasible.then_some(out)
}

/// `(1/2) βᵀAβ - bᵀβ + λ‖β‖₁`; equals the weighted objective minus
/// `(1/2) Σ w_i y_i²`.
pub fn objective(a: &DMatrix<f64>, b: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * beta.dot(&(a * beta)) - b.dot(beta) + lambda * beta.iter().map(|v| v.abs()).sum::<f64>()
}

/// Largest violation of the Lasso optimality conditions, scaled so that
/// active coordinates are measured relative to `max(1, λ)`.
pub fn kkt_violation(a: &DMatrix<f64>, b: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    let grad = a * beta - b;
    let mut worst: f64 = 0.0;
    for j in 0..b.len() {
        let v = if beta[j] != 0.0 {
            (grad[j] + lambda * beta[j].signum()).abs() / lambda.max(1.0)
        } else if a[(j, j)] <= DIAG_FLOOR {
            0.0
        } else {
            (grad[j].abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

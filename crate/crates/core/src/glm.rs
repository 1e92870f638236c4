//! Exponential-family likelihoods and l1-penalized GLM fitting over a
//! decaying-weight observation buffer.
//!
//! Only the canonical Gaussian (identity link) and binomial (logit link)
//! families are provided. The dispersion is fixed at one.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, Error, Result};
use crate::lasso::{self, CdOptions, LassoFit};
use crate::moments::{validate_forgetting_factor, WeightedMoments};

/// Observations whose weight falls below this are dropped from the buffer.
pub const WEIGHT_CUTOFF: f64 = 1e-4;

/// Coefficients are clamped to this magnitude while fitting.
pub const COEF_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Binomial,
}

impl Family {
    pub fn link(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => mu,
            Family::Binomial => (mu / (1.0 - mu)).ln(),
        }
    }

    pub fn mean(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => eta,
            Family::Binomial => sigmoid(eta),
        }
    }

    pub fn variance(self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Binomial => mu * (1.0 - mu),
        }
    }

    /// Cumulant function `b(θ)`.
    pub fn cumulant(self, theta: f64) -> f64 {
        match self {
            Family::Gaussian => 0.5 * theta * theta,
            Family::Binomial => softplus(theta),
        }
    }

    /// `dμ/dη` at linear predictor `eta`.
    pub fn mean_derivative(self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Binomial => {
                let mu = sigmoid(eta);
                mu * (1.0 - mu)
            }
        }
    }

    /// Per-observation curvature `(dμ/dη)² / V(μ)` of the negative
    /// log-likelihood in `η`.
    pub fn curvature_weight(self, eta: f64) -> f64 {
        let d = self.mean_derivative(eta);
        let v = self.variance(self.mean(eta));
        if v > 0.0 {
            d * d / v
        } else {
            0.0
        }
    }

    /// `-(yθ - b(θ))`, the unit negative log-likelihood used inside the
    /// penalized objective. For the Gaussian this is `(y - η)²/2` up to a
    /// constant.
    pub fn unit_nll(self, y: f64, eta: f64) -> f64 {
        match self {
            Family::Gaussian => 0.5 * (y - eta) * (y - eta),
            Family::Binomial => y * softplus(-eta) + (1.0 - y) * softplus(eta),
        }
    }

    pub fn check_response(self, y: f64) -> Result<()> {
        match self {
            Family::Gaussian if y.is_finite() => Ok(()),
            Family::Gaussian => Err(Error::NonFinite("response")),
            Family::Binomial if y == 0.0 || y == 1.0 => Ok(()),
            Family::Binomial => Err(Error::InvalidResponse(y)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Family::Gaussian),
            "binomial" => Ok(Family::Binomial),
            other => Err(Error::InvalidConfig(format!("unknown family `{other}`"))),
        }
    }
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(x: &[f64], beta: &DVector<f64>) -> f64 {
    x.iter().zip(beta.iter()).map(|(a, b)| a * b).sum()
}

fn check_pair(x: &[f64], beta: &DVector<f64>) -> Result<()> {
    if x.len() != beta.len() {
        return Err(Error::DimensionMismatch {
            expected: beta.len(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Look-ahead loss of one observation: squared error for the Gaussian,
/// negative log-likelihood for the binomial.
pub fn nll(f: Family, x: &[f64], y: f64, beta: &DVector<f64>) -> Result<f64> {
    check_pair(x, beta)?;
    f.check_response(y)?;
    let eta = dot(x, beta);
    Ok(match f {
        Family::Gaussian => (y - eta) * (y - eta),
        Family::Binomial => f.unit_nll(y, eta),
    })
}

/// Gradient of [`nll`] with respect to `beta`.
pub fn nll_grad_beta(f: Family, x: &[f64], y: f64, beta: &DVector<f64>) -> Result<DVector<f64>> {
    check_pair(x, beta)?;
    f.check_response(y)?;
    let eta = dot(x, beta);
    let scale = match f {
        Family::Gaussian => -2.0 * (y - eta),
        Family::Binomial => sigmoid(eta) - y,
    };
    Ok(DVector::from_iterator(x.len(), x.iter().map(|v| scale * v)))
}

#[derive(Debug, Clone, PartialEq)]
struct Obs {
    x: DVector<f64>,
    y: f64,
}

/// Recent observations with geometric age weights `r^age`, newest last.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsBuffer {
    p: usize,
    r: f64,
    capacity: usize,
    entries: VecDeque<Obs>,
}

impl ObsBuffer {
    pub fn new(p: usize, r: f64) -> Result<Self> {
        if p < 1 {
            return Err(Error::EmptyDimension);
        }
        validate_forgetting_factor(r)?;
        Ok(Self {
            p,
            r,
            capacity: capacity_for(r),
            entries: VecDeque::new(),
        })
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                got: x.len(),
            });
        }
        ensure_finite(x, "predictor vector")?;
        ensure_finite(&[y], "response")?;
        self.entries.push_back(Obs {
            x: DVector::from_column_slice(x),
            y,
        });
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn forgetting_factor(&self) -> f64 {
        self.r
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Iterates `(x, y, weight)` from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = (&DVector<f64>, f64, f64)> + '_ {
        let n = self.entries.len();
        let r = self.r;
        self.entries
            .iter()
            .enumerate()
            .map(move |(i, o)| (&o.x, o.y, r.powi((n - 1 - i) as i32)))
    }

    pub fn weights(&self) -> Vec<f64> {
        self.iter().map(|(_, _, w)| w).collect()
    }

    pub fn omega(&self) -> f64 {
        self.iter().map(|(_, _, w)| w).sum()
    }

    /// Weighted Gram matrix and cross-moment of the buffered observations.
    pub fn to_moments(&self) -> Result<WeightedMoments> {
        let mut gram = DMatrix::zeros(self.p, self.p);
        let mut cross = DVector::zeros(self.p);
        for (x, y, w) in self.iter() {
            gram.ger(w, x, x, 1.0);
            cross.axpy(w * y, x, 1.0);
        }
        WeightedMoments::from_parts(self.r, gram, cross, self.omega(), self.len())
    }

    /// Weighted score `Σ w_i (y_i - μ_i(β)) x_i`.
    pub fn score(&self, f: Family, beta: &DVector<f64>) -> DVector<f64> {
        let mut s = DVector::zeros(self.p);
        for (x, y, w) in self.iter() {
            let mu = f.mean(x.dot(beta));
            s.axpy(w * (y - mu), x, 1.0);
        }
        s
    }

    /// Weighted curvature `Σ w_i c_i x_i x_iᵀ` with
    /// `c_i = (dμ_i/dη_i)² / V(μ_i)` evaluated at `beta`.
    pub fn curvature(&self, f: Family, beta: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.p, self.p);
        for (x, _, w) in self.iter() {
            let c = f.curvature_weight(x.dot(beta));
            h.ger(w * c, x, x, 1.0);
        }
        h
    }

    /// Smallest penalty at which `β = 0` is optimal.
    pub fn lambda_max(&self, f: Family) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptyStream);
        }
        Ok(self.score(f, &DVector::zeros(self.p)).amax())
    }

    /// `Σ w_i nll_i(β) + λ‖β‖₁`.
    pub fn objective(&self, f: Family, beta: &DVector<f64>, lambda: f64) -> f64 {
        let data: f64 = self
            .iter()
            .map(|(x, y, w)| w * f.unit_nll(y, x.dot(beta)))
            .sum();
        data + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }
}

fn capacity_for(r: f64) -> usize {
    if r >= 1.0 {
        usize::MAX
    } else {
        (WEIGHT_CUTOFF.ln() / r.ln()).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub tol: f64,
    pub max_outer: usize,
    pub inner: CdOptions,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_outer: 50,
            inner: CdOptions::default(),
        }
    }
}

pub fn fit_penalized(
    buf: &ObsBuffer,
    f: Family,
    lambda: f64,
    warm: Option<&LassoFit>,
) -> Result<LassoFit> {
    fit_penalized_with(buf, f, lambda, warm, &IrlsOptions::default())
}

pub fn fit_penalized_with(
    buf: &ObsBuffer,
    f: Family,
    lambda: f64,
    warm: Option<&LassoFit>,
    opts: &IrlsOptions,
) -> Result<LassoFit> {
    if buf.is_empty() {
        return Err(Error::EmptyStream);
    }
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::NegativeLambda(lambda));
    }
    for (_, y, _) in buf.iter() {
        f.check_response(y)?;
    }
    match f {
        Family::Gaussian => lasso::fit_with(&buf.to_moments()?, lambda, warm, &opts.inner),
        Family::Binomial => irls(buf, f, lambda, warm, opts),
    }
}

/// Step acceptance: no increase beyond rounding. NaN candidates fail.
fn accept(cand: f64, current: f64) -> bool {
    cand <= current + 1e-12 * current.abs().max(1.0)
}

/// Proximal Newton: each outer step solves the weighted Lasso built from
/// the local quadratic expansion, then backtracks until the penalized
/// objective does not increase.
fn irls(
    buf: &ObsBuffer,
    f: Family,
    lambda: f64,
    warm: Option<&LassoFit>,
    opts: &IrlsOptions,
) -> Result<LassoFit> {
    let p = buf.dim();
    let mut beta = match warm {
        Some(w) if w.dim() == p => w.beta.clone(),
        Some(w) => {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: w.dim(),
            })
        }
        None => DVector::zeros(p),
    };
    let mut obj = buf.objective(f, &beta, lambda);
    let mut converged = false;
    let mut capped = false;
    let mut inner_ok = true;
    let mut outer = 0;

    while outer < opts.max_outer {
        outer += 1;
        let a = buf.curvature(f, &beta);
        let b = &a * &beta + buf.score(f, &beta);
        let sub = lasso::solve_quadratic(&a, &b, lambda, Some(&beta), &opts.inner)?;
        inner_ok = sub.converged;

        let direction = &sub.beta - &beta;
        let mut step = 1.0;
        let mut candidate = sub.beta;
        let mut cand_obj = buf.objective(f, &candidate, lambda);
        let mut halvings = 0;
        while !accept(cand_obj, obj) && halvings < 40 {
            step *= 0.5;
            halvings += 1;
            candidate = &beta + step * &direction;
            cand_obj = buf.objective(f, &candidate, lambda);
        }
        if !accept(cand_obj, obj) {
            // no descent along the Newton direction: already at the optimum
            // up to rounding
            converged = direction.amax() < opts.tol.max(1e-10);
            break;
        }
        for v in candidate.iter_mut() {
            if v.abs() > COEF_CAP {
                *v = v.signum() * COEF_CAP;
                capped = true;
            }
        }
        let delta = (&candidate - &beta).amax();
        beta = candidate;
        obj = buf.objective(f, &beta, lambda);
        if delta < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(LassoFit::from_beta(
        beta,
        lambda,
        outer,
        converged && inner_ok && !capped,
    ))
}

/// Largest violation of the penalized-GLM optimality conditions at `beta`.
pub fn kkt_violation(buf: &ObsBuffer, f: Family, beta: &DVector<f64>, lambda: f64) -> f64 {
    let grad = -buf.score(f, beta);
    let mut worst: f64 = 0.0;
    for j in 0..beta.len() {
        let v = if beta[j] != 0.0 {
            (grad[j] + lambda * beta[j].signum()).abs() / lambda.max(1.0)
        } else {
            (grad[j].abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

//! Numerical check of the contraction behaviour of the penalty update
//! `G(λ) = λ - ε·dC/dλ` for a fixed held-out pair.
//!
//! Between path breakpoints the fit is linear in `λ`, so for the Gaussian
//! loss `dC/dλ` is affine with slope `2(xᵀ dβ̂/dλ)² ≥ 0`. `G` therefore
//! contracts inside every region of constant active set once `ε` is below
//! the inverse of that slope.

use rand::Rng;

use crate::error::Result;
use crate::glm::Family;
use crate::lasso::{self, CdOptions, LassoFit};
use crate::moments::WeightedMoments;
use crate::rap::{self, GradientMode};

const PROBE_CD: CdOptions = CdOptions {
    tol: 1e-13,
    max_sweeps: 100_000,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub pairs: usize,
    /// Pairs whose fits share active set and signs.
    pub same_set_pairs: usize,
    pub contracted: usize,
    /// Largest `|G(λ₁) - G(λ₂)| / |λ₁ - λ₂|` over same-set pairs.
    pub max_ratio: f64,
    /// Same-set pairs where `dC/dλ` decreased as `λ` increased.
    pub non_monotone: usize,
    pub orbit_min: f64,
    pub orbit_max: f64,
    pub lambda_max: f64,
    /// Iterations at which the unclamped update left `[0, λ_max]`.
    pub escapes: usize,
    /// Period of the orbit tail (1 fixed point, 2 two-cycle), if detected.
    pub period: Option<usize>,
}

impl ProbeReport {
    pub fn all_contract(&self) -> bool {
        self.contracted == self.same_set_pairs
    }

    pub fn orbit_bounded(&self) -> bool {
        self.orbit_min >= 0.0 && self.orbit_max <= self.lambda_max
    }
}

struct Evaluated {
    fit: LassoFit,
    grad: f64,
}

fn evaluate(m: &WeightedMoments, x: &[f64], y: f64, lambda: f64) -> Result<Evaluated> {
    let fit = lasso::fit_with(m, lambda, None, &PROBE_CD)?;
    let dbeta = if fit.active_set.is_empty() {
        rap::fallback_direction(m)?.direction
    } else {
        rap::dbeta_dlambda(m, &fit, GradientMode::Exact, 0.0)?
    };
    let grad = rap::dcost_dlambda(Family::Gaussian, x, y, &fit, &dbeta)?;
    Ok(Evaluated { fit, grad })
}

fn same_region(a: &LassoFit, b: &LassoFit) -> bool {
    a.active_set == b.active_set
        && a.active_set
            .iter()
            .all(|&j| a.beta[j].signum() == b.beta[j].signum())
}

/// Inverse of the largest slope of `λ ↦ dC/dλ` seen over `n_grid` evenly
/// spaced penalties in `(0, λ_max)`.
pub fn instance_scale(m: &WeightedMoments, x: &[f64], _y: f64, n_grid: usize) -> Result<f64> {
    let lmax = lasso::lambda_max(m)?;
    let mut max_slope: f64 = 0.0;
    for k in 1..n_grid {
        let lam = lmax * k as f64 / n_grid as f64;
        let fit = lasso::fit_with(m, lam, None, &PROBE_CD)?;
        if fit.active_set.is_empty() {
            continue;
        }
        let d = rap::dbeta_dlambda(m, &fit, GradientMode::Exact, 0.0)?;
        let xd: f64 = x.iter().zip(d.iter()).map(|(a, b)| a * b).sum();
        max_slope = max_slope.max(2.0 * xd * xd);
    }
    Ok(if max_slope > 0.0 {
        1.0 / max_slope
    } else {
        1.0
    })
}

/// Samples penalty pairs on `[0, λ_max]`, half of them close together so
/// that plenty share an active set, and measures the contraction ratio of
/// `G`. Then iterates the clamped update from a random start.
pub fn contraction_probe<R: Rng + ?Sized>(
    m: &WeightedMoments,
    x_new: &[f64],
    y_new: f64,
    epsilon: f64,
    n_pairs: usize,
    orbit_len: usize,
    rng: &mut R,
) -> Result<ProbeReport> {
    let lmax = lasso::lambda_max(m)?;
    let mut same = 0;
    let mut contracted = 0;
    let mut non_monotone = 0;
    let mut max_ratio: f64 = 0.0;

    for k in 0..n_pairs {
        let l1 = rng.random_range(0.0..lmax);
        let l2 = if k % 2 == 0 {
            rng.random_range(0.0..lmax)
        } else {
            (l1 + rng.random_range(-0.01..0.01) * lmax).clamp(0.0, lmax)
        };
        if l1 == l2 {
            continue;
        }
        let a = evaluate(m, x_new, y_new, l1)?;
        let b = evaluate(m, x_new, y_new, l2)?;
        if !same_region(&a.fit, &b.fit) {
            continue;
        }
        same += 1;
        // |G(λ₁) - G(λ₂)| / |λ₁ - λ₂| = |1 - ε·ΔC'/Δλ|, evaluated in the
        // second form to avoid cancellation when ε·ΔC' is tiny.
        let slope = (a.grad - b.grad) / (l1 - l2);
        if slope < -1e-9 * (a.grad.abs() + b.grad.abs()).max(1e-300) / (l1 - l2).abs() {
            non_monotone += 1;
        }
        let ratio = (1.0 - epsilon * slope).abs();
        max_ratio = max_ratio.max(ratio);
        if ratio < 1.0 {
            contracted += 1;
        }
    }

    let mut lam = rng.random_range(0.0..=lmax);
    let mut orbit_min = lam;
    let mut orbit_max = lam;
    let mut escapes = 0;
    let mut tail = Vec::with_capacity(4);
    for i in 0..orbit_len {
        let g = evaluate(m, x_new, y_new, lam)?.grad;
        let next = lam - epsilon * g;
        if !(0.0..=lmax).contains(&next) {
            escapes += 1;
        }
        lam = next.clamp(0.0, lmax);
        orbit_min = orbit_min.min(lam);
        orbit_max = orbit_max.max(lam);
        if i + 4 >= orbit_len {
            tail.push(lam);
        }
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * lmax;
    let period = if tail.len() == 4 {
        if close(tail[3], tail[2]) {
            Some(1)
        } else if close(tail[3], tail[1]) && close(tail[2], tail[0]) {
            Some(2)
        } else {
            None
        }
    } else {
        None
    };

    Ok(ProbeReport {
        pairs: n_pairs,
        same_set_pairs: same,
        contracted,
        max_ratio,
        non_monotone,
        orbit_min,
        orbit_max,
        lambda_max: lmax,
        escapes,
        period,
    })
}

//! Real-time adaptive penalization: the penalty `λ` is moved by stochastic
//! gradient descent on the loss of each incoming observation, evaluated
//! before the model has seen it.
//!
//! The derivative of the Lasso solution with respect to `λ` is constant
//! between breakpoints of the solution path and supported on the active
//! set `𝒜`:
//!
//! ```text
//!     dβ̂_𝒜/dλ = -(H_𝒜𝒜)⁻¹ sign(β̂_𝒜),    dβ̂_j/dλ = 0 for j ∉ 𝒜
//! ```
//!
//! where `H` is the weighted Gram matrix (Gaussian) or the weighted Fisher
//! information at the fit (binomial). Chaining with the gradient of the
//! look-ahead loss gives `dC/dλ`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::glm::{self, Family, IrlsOptions, ObsBuffer};
use crate::lasso::{self, LassoFit};
use crate::moments::WeightedMoments;

/// Relative ridge added to the active block before solving for `dβ/dλ`.
pub const DEFAULT_JITTER: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    /// Solve against the active block of the curvature matrix.
    Exact,
    /// Use only the diagonal of the curvature matrix.
    Approximate,
}

impl fmt::Display for GradientMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GradientMode::Exact => "exact",
            GradientMode::Approximate => "approx",
        })
    }
}

impl FromStr for GradientMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(GradientMode::Exact),
            "approx" | "approximate" => Ok(GradientMode::Approximate),
            other => Err(Error::InvalidConfig(format!(
                "unknown gradient mode `{other}`"
            ))),
        }
    }
}

/// Units in which `λ` is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyScale {
    /// `λ` multiplies `‖β‖₁` against the raw weighted loss `Σ w_i ℓ_i`.
    Raw,
    /// `λ` multiplies `‖β‖₁` against the weight-averaged loss
    /// `Σ w_i ℓ_i / Σ w_i`; the solver sees `ω_t·λ`. This keeps the scale
    /// of `λ` independent of how much history has accumulated.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RapState {
    pub lambda: f64,
    pub epsilon: f64,
    pub mode: GradientMode,
    /// Ridge added to the active block, relative to its mean diagonal.
    pub jitter: f64,
    pub scale: PenaltyScale,
}

impl RapState {
    pub fn new(lambda0: f64, epsilon: f64, mode: GradientMode) -> Result<Self> {
        if !lambda0.is_finite() || lambda0 < 0.0 {
            return Err(Error::NegativeLambda(lambda0));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "step size must be finite and non-negative, got {epsilon}"
            )));
        }
        Ok(Self {
            lambda: lambda0,
            epsilon,
            mode,
            jitter: DEFAULT_JITTER,
            scale: PenaltyScale::Normalized,
        })
    }

    pub fn with_scale(mut self, scale: PenaltyScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }
}

/// `dβ̂/dλ` given a closure producing the curvature block over an index set.
fn dbeta_from_curvature(
    p: usize,
    fit: &LassoFit,
    mode: GradientMode,
    jitter: f64,
    block: impl FnOnce(&[usize]) -> DMatrix<f64>,
) -> Result<DVector<f64>> {
    let active = &fit.active_set;
    let mut out = DVector::zeros(p);
    if active.is_empty() {
        return Ok(out);
    }
    let h = block(active);
    let signs = DVector::from_iterator(active.len(), active.iter().map(|&j| fit.beta[j].signum()));
    match mode {
        GradientMode::Approximate => {
            let mut bad = Vec::new();
            for (i, &j) in active.iter().enumerate() {
                let d = h[(i, i)];
                if d > 0.0 {
                    out[j] = -signs[i] / d;
                } else {
                    bad.push(j);
                }
            }
            if !bad.is_empty() {
                return Err(Error::SingularActiveSet(bad));
            }
        }
        GradientMode::Exact => {
            let k = active.len();
            let ridge = jitter * h.diagonal().sum() / k as f64;
            let mut hj = h;
            for i in 0..k {
                hj[(i, i)] += ridge;
            }
            let chol = hj
                .cholesky()
                .ok_or_else(|| Error::SingularActiveSet(active.clone()))?;
            let sol = chol.solve(&signs);
            for (i, &j) in active.iter().enumerate() {
                out[j] = -sol[i];
            }
        }
    }
    Ok(out)
}

fn sub_block(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

/// Derivative of the Lasso fit over `m` with respect to the raw penalty.
pub fn dbeta_dlambda(
    m: &WeightedMoments,
    fit: &LassoFit,
    mode: GradientMode,
    jitter: f64,
) -> Result<DVector<f64>> {
    check_dim(m.dim(), fit.dim())?;
    dbeta_from_curvature(m.dim(), fit, mode, jitter, |idx| sub_block(m.gram(), idx))
}

/// Derivative of a penalized GLM fit over `buf` with respect to the raw
/// penalty, using the weighted Fisher information at the fit.
pub fn glm_dbeta_dlambda(
    buf: &ObsBuffer,
    f: Family,
    fit: &LassoFit,
    mode: GradientMode,
    jitter: f64,
) -> Result<DVector<f64>> {
    check_dim(buf.dim(), fit.dim())?;
    dbeta_from_curvature(buf.dim(), fit, mode, jitter, |idx| {
        let mut h = DMatrix::zeros(idx.len(), idx.len());
        for (x, _, w) in buf.iter() {
            let c = w * f.curvature_weight(x.dot(&fit.beta));
            let xa = DVector::from_iterator(idx.len(), idx.iter().map(|&j| x[j]));
            h.ger(c, &xa, &xa, 1.0);
        }
        h
    })
}

/// `∇_β C · dβ̂/dλ` for the held-out pair `(x_new, y_new)`.
pub fn dcost_dlambda(
    f: Family,
    x_new: &[f64],
    y_new: f64,
    fit: &LassoFit,
    dbeta: &DVector<f64>,
) -> Result<f64> {
    check_dim(fit.dim(), dbeta.len())?;
    let g = glm::nll_grad_beta(f, x_new, y_new, &fit.beta)?;
    Ok(g.dot(dbeta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fallback {
    /// Most correlated predictor, or `None` when every correlation is zero.
    pub index: Option<usize>,
    pub direction: DVector<f64>,
}

/// Surrogate for `dβ̂/dλ` when the active set is empty: a unit step on the
/// predictor most correlated with the response, scaled by its curvature.
///
/// `score` is the weighted score at `β = 0` (the cross-moment for the
/// Gaussian) and `diag` the curvature diagonal at `β = 0`.
pub fn fallback_from_score(score: &DVector<f64>, diag: &DVector<f64>) -> Fallback {
    let p = score.len();
    let mut best: Option<(usize, f64)> = None;
    for (j, c) in score.iter().enumerate() {
        let a = c.abs();
        if a > 0.0 && best.is_none_or(|(_, b)| a > b) {
            best = Some((j, a));
        }
    }
    let mut direction = DVector::zeros(p);
    let index = match best {
        Some((j, _)) if diag[j] > 0.0 => {
            direction[j] = -score[j].signum() / diag[j];
            Some(j)
        }
        _ => None,
    };
    Fallback { index, direction }
}

pub fn fallback_direction(m: &WeightedMoments) -> Result<Fallback> {
    if m.is_empty() {
        return Err(Error::EmptyStream);
    }
    Ok(fallback_from_score(m.cross(), &m.gram().diagonal()))
}

/// One projected gradient step on `λ`.
pub fn update_lambda(s: &RapState, grad: f64, lam_max: f64) -> Result<RapState> {
    if !grad.is_finite() {
        return Err(Error::NonFinite("lambda gradient"));
    }
    let mut next = *s;
    next.lambda = (s.lambda - s.epsilon * grad).clamp(0.0, lam_max.max(0.0));
    Ok(next)
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

/// Discounted history backing the refits: sufficient statistics for the
/// Gaussian, an observation buffer for the binomial.
#[derive(Debug, Clone, PartialEq)]
pub enum History {
    Gaussian(WeightedMoments),
    Binomial(ObsBuffer),
}

impl History {
    pub fn new(f: Family, p: usize, r: f64) -> Result<Self> {
        Ok(match f {
            Family::Gaussian => History::Gaussian(WeightedMoments::new(p, r)?),
            Family::Binomial => History::Binomial(ObsBuffer::new(p, r)?),
        })
    }

    pub fn family(&self) -> Family {
        match self {
            History::Gaussian(_) => Family::Gaussian,
            History::Binomial(_) => Family::Binomial,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            History::Gaussian(m) => m.dim(),
            History::Binomial(b) => b.dim(),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            History::Gaussian(m) => m.is_empty(),
            History::Binomial(b) => b.is_empty(),
        }
    }

    pub fn omega(&self) -> f64 {
        match self {
            History::Gaussian(m) => m.omega(),
            History::Binomial(b) => b.omega(),
        }
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.family().check_response(y)?;
        match self {
            History::Gaussian(m) => m.update(x, y),
            History::Binomial(b) => b.push(x, y),
        }
    }

    /// Raw-scale `λ_max`.
    pub fn lambda_max(&self) -> Result<f64> {
        match self {
            History::Gaussian(m) => lasso::lambda_max(m),
            History::Binomial(b) => b.lambda_max(Family::Binomial),
        }
    }

    pub fn fit(
        &self,
        lambda: f64,
        warm: Option<&LassoFit>,
        opts: &IrlsOptions,
    ) -> Result<LassoFit> {
        match self {
            History::Gaussian(m) => lasso::fit_with(m, lambda, warm, &opts.inner),
            History::Binomial(b) => {
                glm::fit_penalized_with(b, Family::Binomial, lambda, warm, opts)
            }
        }
    }

    pub fn dbeta_dlambda(
        &self,
        fit: &LassoFit,
        mode: GradientMode,
        jitter: f64,
    ) -> Result<DVector<f64>> {
        match self {
            History::Gaussian(m) => dbeta_dlambda(m, fit, mode, jitter),
            History::Binomial(b) => glm_dbeta_dlambda(b, Family::Binomial, fit, mode, jitter),
        }
    }

    pub fn fallback(&self) -> Result<Fallback> {
        match self {
            History::Gaussian(m) => fallback_direction(m),
            History::Binomial(b) => {
                if b.is_empty() {
                    return Err(Error::EmptyStream);
                }
                let zero = DVector::zeros(b.dim());
                let score = b.score(Family::Binomial, &zero);
                let diag = b.curvature(Family::Binomial, &zero).diagonal();
                Ok(fallback_from_score(&score, &diag))
            }
        }
    }

    fn scale_factor(&self, scale: PenaltyScale) -> f64 {
        match scale {
            PenaltyScale::Raw => 1.0,
            PenaltyScale::Normalized => self.omega().max(f64::MIN_POSITIVE),
        }
    }
}

/// Per-step output of the adaptive learner. `lambda`, `lookahead_loss` and
/// `active_size` describe the model *before* it absorbed observation `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub lambda: f64,
    pub lookahead_loss: f64,
    pub active_size: usize,
    pub f_score: Option<f64>,
    pub regime: Option<usize>,
    /// The active set was empty and the fallback direction was used.
    pub fallback: bool,
    /// The refit after this step did not converge.
    pub refit_failed: bool,
}

/// Streaming learner that adapts `λ` online.
#[derive(Debug, Clone)]
pub struct Rap {
    state: RapState,
    history: History,
    fit: LassoFit,
    opts: IrlsOptions,
    t: usize,
}

impl Rap {
    pub fn new(state: RapState, f: Family, p: usize, r: f64) -> Result<Self> {
        Ok(Self {
            state,
            history: History::new(f, p, r)?,
            fit: LassoFit::zero(p, 0.0),
            opts: IrlsOptions::default(),
            t: 0,
        })
    }

    pub fn with_options(mut self, opts: IrlsOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn state(&self) -> &RapState {
        &self.state
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn fit(&self) -> &LassoFit {
        &self.fit
    }

    pub fn family(&self) -> Family {
        self.history.family()
    }

    pub fn lambda(&self) -> f64 {
        self.state.lambda
    }

    /// `λ_max` in the units of [`RapState::lambda`].
    pub fn lambda_max(&self) -> Result<f64> {
        Ok(self.history.lambda_max()? / self.history.scale_factor(self.state.scale))
    }

    /// `dC/dλ` for a held-out pair under the current fit, in the units of
    /// [`RapState::lambda`]. Returns the gradient and whether the fallback
    /// direction was used.
    pub fn lambda_gradient(&self, x_new: &[f64], y_new: f64) -> Result<(f64, bool)> {
        if self.history.is_empty() {
            return Ok((0.0, false));
        }
        let f = self.family();
        let factor = self.history.scale_factor(self.state.scale);
        // More active coordinates than absorbed observations: the active
        // block is singular and the derivative carries no information.
        if self.fit.active_set.len() > self.t {
            return Ok((0.0, false));
        }
        let (dbeta, fallback) = if self.fit.active_set.is_empty() {
            (self.history.fallback()?.direction, true)
        } else {
            (
                self.history
                    .dbeta_dlambda(&self.fit, self.state.mode, self.state.jitter)?,
                false,
            )
        };
        let grad = dcost_dlambda(f, x_new, y_new, &self.fit, &dbeta)?;
        Ok((factor * grad, fallback))
    }

    /// Processes one observation: records the look-ahead loss, moves `λ`,
    /// absorbs the observation and refits at the new `λ`.
    pub fn step(&mut self, x_new: &[f64], y_new: f64) -> Result<TraceRecord> {
        let f = self.family();
        check_dim(self.history.dim(), x_new.len())?;
        let lookahead_loss = glm::nll(f, x_new, y_new, &self.fit.beta)?;
        let record_lambda = self.state.lambda;
        let active_size = self.fit.active_set.len();

        let (grad, fallback) = self.lambda_gradient(x_new, y_new)?;
        if !self.history.is_empty() {
            self.state = update_lambda(&self.state, grad, self.lambda_max()?)?;
        }

        self.history.push(x_new, y_new)?;
        let lam_max = self.lambda_max()?;
        if self.state.lambda > lam_max {
            self.state.lambda = lam_max;
        }
        let raw = self.state.lambda * self.history.scale_factor(self.state.scale);
        let refit = self.history.fit(raw, Some(&self.fit), &self.opts)?;
        let refit_failed = !refit.converged;
        self.fit = refit;
        self.t += 1;

        Ok(TraceRecord {
            t: self.t,
            lambda: record_lambda,
            lookahead_loss,
            active_size,
            f_score: None,
            regime: None,
            fallback,
            refit_failed,
        })
    }
}

/// Streaming penalized regression at a fixed penalty schedule, evaluated
/// the same way as [`Rap`]. Used for the offline-tuned baselines.
#[derive(Debug, Clone)]
pub struct FixedLambda {
    history: History,
    fit: LassoFit,
    scale: PenaltyScale,
    opts: IrlsOptions,
    lambda: f64,
    t: usize,
}

impl FixedLambda {
    pub fn new(f: Family, p: usize, r: f64, scale: PenaltyScale) -> Result<Self> {
        Ok(Self {
            history: History::new(f, p, r)?,
            fit: LassoFit::zero(p, 0.0),
            scale,
            opts: IrlsOptions::default(),
            lambda: 0.0,
            t: 0,
        })
    }

    pub fn fit(&self) -> &LassoFit {
        &self.fit
    }

    /// Scores `(x_new, y_new)` under the current fit, absorbs it and refits
    /// at penalty `lambda`.
    pub fn step(&mut self, x_new: &[f64], y_new: f64, lambda: f64) -> Result<TraceRecord> {
        let f = self.history.family();
        let lookahead_loss = glm::nll(f, x_new, y_new, &self.fit.beta)?;
        let active_size = self.fit.active_set.len();
        let prev_lambda = if self.t == 0 { lambda } else { self.lambda };
        self.history.push(x_new, y_new)?;
        let raw = lambda * self.history.scale_factor(self.scale);
        let refit = self.history.fit(raw, Some(&self.fit), &self.opts)?;
        let refit_failed = !refit.converged;
        self.fit = refit;
        self.lambda = lambda;
        self.t += 1;
        Ok(TraceRecord {
            t: self.t,
            lambda: prev_lambda,
            lookahead_loss,
            active_size,
            f_score: None,
            regime: None,
            fallback: false,
            refit_failed,
        })
    }
}

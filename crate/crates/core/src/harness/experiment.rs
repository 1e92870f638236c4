//! Replication driver comparing the adaptive penalty against offline
//! cross-validated baselines on simulated streams.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::cv::{self, CvResult};
use super::metrics::{delta_l1, f_score, mean_and_se, median};
use crate::error::{Error, Result};
use crate::glm::Family;
use crate::rap::{FixedLambda, GradientMode, PenaltyScale, Rap, RapState, TraceRecord};
use crate::simgen::{self, RegimeSpec, StreamSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Rap,
    RapApprox,
    FixedCv,
    Stepwise,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Rap, Arm::RapApprox, Arm::FixedCv, Arm::Stepwise];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Rap => "rap",
            Arm::RapApprox => "rap-approx",
            Arm::FixedCv => "fixed-cv",
            Arm::Stepwise => "stepwise",
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    /// One regime of `n` observations over `p` predictors.
    Stationary { p: usize, n: usize, rho: f64 },
    /// Dense, sparse, dense regimes of 100 observations over 20 predictors.
    NonStationary,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary" => Ok(Preset::Stationary {
                p: 20,
                n: 300,
                rho: STATIONARY_RHO,
            }),
            "nonstationary" => Ok(Preset::NonStationary),
            other => Err(Error::InvalidConfig(format!("unknown preset `{other}`"))),
        }
    }
}

/// Active proportion used by the stationary preset.
pub const STATIONARY_RHO: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub family: Family,
    pub r: f64,
    pub epsilon: f64,
    /// Initial penalty; drawn from U[0, 1] per replication when `None`.
    pub lambda0: Option<f64>,
    /// Relative ridge added to the active block in the derivative solve.
    pub jitter: f64,
    /// Units of `epsilon`, `lambda0` and the reported penalties.
    pub scale: PenaltyScale,
    pub k_folds: usize,
    pub grid_size: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn stationary(family: Family, p: usize) -> Self {
        Self {
            preset: Preset::Stationary {
                p,
                n: 300,
                rho: STATIONARY_RHO,
            },
            family,
            r: 1.0,
            epsilon: STATIONARY_EPSILON,
            lambda0: None,
            jitter: 1e-6,
            scale: PenaltyScale::Normalized,
            k_folds: 10,
            grid_size: 50,
            seed: 0,
        }
    }

    pub fn nonstationary(family: Family) -> Self {
        Self {
            preset: Preset::NonStationary,
            family,
            r: 0.95,
            epsilon: NONSTATIONARY_EPSILON,
            lambda0: Some(nonstationary_lambda0(family)),
            jitter: 1e-6,
            scale: PenaltyScale::Normalized,
            k_folds: 10,
            grid_size: 50,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn specs(&self) -> Vec<RegimeSpec> {
        match self.preset {
            Preset::Stationary { p, n, rho } => vec![RegimeSpec::new(p, rho, n, self.family)],
            Preset::NonStationary => simgen::alternating_regimes(self.family),
        }
    }

    pub fn replication_seed(&self, rep: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(rep as u64)
    }
}

/// Step size of the stationary preset.
pub const STATIONARY_EPSILON: f64 = 1e-3;

/// Step size of the non-stationary preset.
pub const NONSTATIONARY_EPSILON: f64 = 3e-4;

/// Initial penalty of the non-stationary preset. The binomial curvature is
/// at most 1/4, so its penalties live on a smaller scale.
pub fn nonstationary_lambda0(family: Family) -> f64 {
    match family {
        Family::Gaussian => 0.1,
        Family::Binomial => 0.03,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmRun {
    pub arm: Arm,
    pub trace: Vec<TraceRecord>,
    pub final_beta: Vec<f64>,
    pub final_lambda: f64,
}

impl ArmRun {
    /// Mean look-ahead loss from the second observation on.
    pub fn mean_loss(&self) -> f64 {
        let v: Vec<f64> = self
            .trace
            .iter()
            .skip(1)
            .map(|r| r.lookahead_loss)
            .collect();
        mean_and_se(&v).0
    }

    pub fn mean_f(&self) -> Option<f64> {
        let v: Vec<f64> = self
            .trace
            .iter()
            .skip(1)
            .filter_map(|r| r.f_score)
            .collect();
        (!v.is_empty()).then(|| mean_and_se(&v).0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub rep: usize,
    pub seed: u64,
    pub lambda0: f64,
    pub cv: CvResult,
    pub stepwise: Vec<(usize, f64)>,
    pub arms: Vec<ArmRun>,
    /// `‖β(λ_cv)‖₁ - ‖β(λ_rap)‖₁` on the full data (stationary preset).
    pub delta_l1: Option<f64>,
    /// `‖β(λ_cv)‖₁` on the full data (stationary preset).
    pub cv_l1: Option<f64>,
}

impl ReplicationResult {
    pub fn arm(&self, arm: Arm) -> Option<&ArmRun> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

fn annotate(trace: &mut [TraceRecord], samples: &[StreamSample], supports: &[Vec<usize>]) {
    for ((rec, s), est) in trace.iter_mut().zip(samples).zip(supports) {
        rec.f_score = Some(f_score(est, &s.true_support));
        rec.regime = Some(s.regime_id);
    }
}

fn run_rap(
    cfg: &ExperimentConfig,
    samples: &[StreamSample],
    mode: GradientMode,
    lambda0: f64,
) -> Result<ArmRun> {
    let p = samples[0].x.len();
    let state = RapState::new(lambda0, cfg.epsilon, mode)?
        .with_scale(cfg.scale)
        .with_jitter(cfg.jitter);
    let mut rap = Rap::new(state, cfg.family, p, cfg.r)?;
    let mut trace = Vec::with_capacity(samples.len());
    let mut supports = Vec::with_capacity(samples.len());
    for s in samples {
        supports.push(rap.fit().active_set.clone());
        trace.push(rap.step(&s.x, s.y)?);
    }
    annotate(&mut trace, samples, &supports);
    Ok(ArmRun {
        arm: match mode {
            GradientMode::Exact => Arm::Rap,
            GradientMode::Approximate => Arm::RapApprox,
        },
        trace,
        final_beta: rap.fit().beta.iter().copied().collect(),
        final_lambda: rap.lambda(),
    })
}

fn run_fixed(
    cfg: &ExperimentConfig,
    samples: &[StreamSample],
    arm: Arm,
    schedule: impl Fn(usize) -> f64,
) -> Result<ArmRun> {
    let p = samples[0].x.len();
    let mut model = FixedLambda::new(cfg.family, p, cfg.r, PenaltyScale::Normalized)?;
    let mut trace = Vec::with_capacity(samples.len());
    let mut supports = Vec::with_capacity(samples.len());
    let mut last = f64::NAN;
    for (t, s) in samples.iter().enumerate() {
        supports.push(model.fit().active_set.clone());
        last = schedule(t);
        trace.push(model.step(&s.x, s.y, last)?);
    }
    annotate(&mut trace, samples, &supports);
    Ok(ArmRun {
        arm,
        trace,
        final_beta: model.fit().beta.iter().copied().collect(),
        final_lambda: last,
    })
}

/// Runs every arm on one simulated stream.
pub fn run_replication(cfg: &ExperimentConfig, rep: usize) -> Result<ReplicationResult> {
    let seed = cfg.replication_seed(rep);
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = simgen::make_piecewise_stream(&cfg.specs(), &mut data_rng)?;
    let lambda0 = match cfg.lambda0 {
        Some(l) => l,
        None => ChaCha8Rng::seed_from_u64(seed ^ 0xD1B5_4A32_D192_ED03).random_range(0.0..1.0),
    };

    let x: Vec<Vec<f64>> = samples.iter().map(|s| s.x.clone()).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let cv = cv::kfold_cv_lambda(&x, &y, cfg.family, cfg.k_folds, cfg.grid_size)?;
    let stepwise = cv::stepwise_cv_lambda(
        &x,
        &y,
        &simgen::changepoints(&samples),
        cfg.family,
        cfg.k_folds,
        cfg.grid_size,
    )?;

    let rap = run_rap(cfg, &samples, GradientMode::Exact, lambda0)?;
    let approx = run_rap(cfg, &samples, GradientMode::Approximate, lambda0)?;
    let fixed = run_fixed(cfg, &samples, Arm::FixedCv, |_| cv.lambda)?;
    let step = run_fixed(cfg, &samples, Arm::Stepwise, |t| {
        cv::step_value(&stepwise, t)
    })?;

    let (delta, cv_l1) = match cfg.preset {
        Preset::Stationary { .. } => {
            let beta_cv = cv::fit_full(&x, &y, cfg.family, cv.lambda)?;
            let per_unit = match cfg.scale {
                PenaltyScale::Normalized => rap.final_lambda,
                PenaltyScale::Raw => {
                    let omega: f64 = (0..samples.len()).map(|k| cfg.r.powi(k as i32)).sum();
                    rap.final_lambda / omega
                }
            };
            let beta_rap = cv::fit_full(&x, &y, cfg.family, per_unit)?;
            let a: Vec<f64> = beta_cv.beta.iter().copied().collect();
            let b: Vec<f64> = beta_rap.beta.iter().copied().collect();
            (Some(delta_l1(&a, &b)), Some(beta_cv.l1_norm()))
        }
        Preset::NonStationary => (None, None),
    };

    Ok(ReplicationResult {
        rep,
        seed,
        lambda0,
        cv,
        stepwise,
        arms: vec![rap, approx, fixed, step],
        delta_l1: delta,
        cv_l1,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub arm: Arm,
    pub mean_loss: f64,
    pub se_loss: Option<f64>,
    pub mean_f: f64,
    pub se_f: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSummary {
    pub mean: f64,
    pub se: Option<f64>,
    pub median_abs: f64,
    pub median_cv_l1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub completed: usize,
    pub failed: usize,
    pub arms: Vec<ArmSummary>,
    pub delta: Option<DeltaSummary>,
}

impl Summary {
    pub fn arm(&self, arm: Arm) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

pub fn summarize(results: &[ReplicationResult], failed: usize) -> Summary {
    let arms = Arm::ALL
        .iter()
        .map(|&arm| {
            let runs: Vec<&ArmRun> = results.iter().filter_map(|r| r.arm(arm)).collect();
            let losses: Vec<f64> = runs.iter().map(|a| a.mean_loss()).collect();
            let fs: Vec<f64> = runs.iter().filter_map(|a| a.mean_f()).collect();
            let (mean_loss, se_loss) = mean_and_se(&losses);
            let (mean_f, se_f) = mean_and_se(&fs);
            ArmSummary {
                arm,
                mean_loss,
                se_loss,
                mean_f,
                se_f,
            }
        })
        .collect();
    let deltas: Vec<f64> = results.iter().filter_map(|r| r.delta_l1).collect();
    let delta = (!deltas.is_empty()).then(|| {
        let (mean, se) = mean_and_se(&deltas);
        let abs: Vec<f64> = deltas.iter().map(|d| d.abs()).collect();
        let l1: Vec<f64> = results.iter().filter_map(|r| r.cv_l1).collect();
        DeltaSummary {
            mean,
            se,
            median_abs: median(&abs),
            median_cv_l1: median(&l1),
        }
    });
    Summary {
        completed: results.len(),
        failed,
        arms,
        delta,
    }
}

/// Runs `n_reps` independent replications in parallel. Failed replications
/// are dropped from the aggregates and counted in [`Summary::failed`].
pub fn run_replications(
    cfg: &ExperimentConfig,
    n_reps: usize,
) -> (Summary, Vec<ReplicationResult>) {
    let outcomes: Vec<Result<ReplicationResult>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep))
        .collect();
    let failed = outcomes.iter().filter(|o| o.is_err()).count();
    let results: Vec<ReplicationResult> = outcomes.into_iter().filter_map(|o| o.ok()).collect();
    (summarize(&results, failed), results)
}

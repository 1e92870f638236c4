//! Synthetic piecewise-stationary regression streams.
//!
//! Covariates are multivariate Gaussian with a block-diagonal, equicorrelated
//! covariance whose coordinate-to-block assignment is shuffled per regime.
//! Within a regime a fixed sparse coefficient vector drives a Gaussian or
//! Bernoulli response.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::glm::{sigmoid, Family};

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSpec {
    pub p: usize,
    /// Proportion of nonzero coefficients.
    pub rho: f64,
    pub n_blocks: usize,
    pub block_corr: f64,
    pub duration: usize,
    pub family: Family,
}

impl RegimeSpec {
    pub fn new(p: usize, rho: f64, duration: usize, family: Family) -> Self {
        Self {
            p,
            rho,
            n_blocks: 5,
            block_corr: 0.8,
            duration,
            family,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::EmptyDimension);
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!(
                "active proportion must lie in [0, 1], got {}",
                self.rho
            )));
        }
        if self.n_blocks < 1 {
            return Err(Error::InvalidConfig(
                "block count must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.block_corr) {
            return Err(Error::InvalidConfig(format!(
                "block correlation must lie in [0, 1), got {}",
                self.block_corr
            )));
        }
        Ok(())
    }

    pub fn active_count(&self) -> usize {
        (self.rho * self.p as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSample {
    pub x: Vec<f64>,
    pub y: f64,
    pub true_beta: Vec<f64>,
    pub true_support: Vec<usize>,
    pub regime_id: usize,
}

/// Block-diagonal covariance with unit diagonal and `block_corr` within
/// blocks. When `p` is not a multiple of `n_blocks` the leading blocks are
/// one coordinate larger; more blocks than coordinates collapse to `p`
/// singleton blocks.
pub fn make_covariance(p: usize, n_blocks: usize, block_corr: f64) -> Result<DMatrix<f64>> {
    if p < 1 {
        return Err(Error::EmptyDimension);
    }
    if n_blocks < 1 {
        return Err(Error::InvalidConfig(
            "block count must be at least 1".into(),
        ));
    }
    if !(0.0..1.0).contains(&block_corr) {
        return Err(Error::InvalidConfig(format!(
            "block correlation must lie in [0, 1), got {block_corr}"
        )));
    }
    let labels = block_labels(p, n_blocks);
    Ok(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if labels[i] == labels[j] {
            block_corr
        } else {
            0.0
        }
    }))
}

fn block_labels(p: usize, n_blocks: usize) -> Vec<usize> {
    let k = n_blocks.min(p);
    let base = p / k;
    let extra = p % k;
    let mut labels = Vec::with_capacity(p);
    for b in 0..k {
        let size = base + usize::from(b < extra);
        labels.extend(std::iter::repeat_n(b, size));
    }
    labels
}

/// Draws one regime: a sparse coefficient vector and `duration` samples.
pub fn sample_regime<R: Rng + ?Sized>(
    spec: &RegimeSpec,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<StreamSample>)> {
    sample_regime_with_id(spec, 0, rng)
}

fn sample_regime_with_id<R: Rng + ?Sized>(
    spec: &RegimeSpec,
    regime_id: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<StreamSample>)> {
    spec.validate()?;
    let p = spec.p;
    let sigma = make_covariance(p, spec.n_blocks, spec.block_corr)?;
    let chol = sigma
        .cholesky()
        .ok_or_else(|| Error::Degenerate("covariance is not positive definite".into()))?;
    let lower = chol.l();

    let mut perm: Vec<usize> = (0..p).collect();
    perm.shuffle(rng);

    let mut beta = vec![0.0; p];
    for j in sample(rng, p, spec.active_count()).iter() {
        beta[j] = rng.sample(StandardNormal);
    }
    let support: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();

    let mut samples = Vec::with_capacity(spec.duration);
    for _ in 0..spec.duration {
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        let raw = &lower * z;
        let mut x = vec![0.0; p];
        for (j, &pj) in perm.iter().enumerate() {
            x[pj] = raw[j];
        }
        let eta: f64 = x.iter().zip(&beta).map(|(a, b)| a * b).sum();
        let y = match spec.family {
            Family::Gaussian => eta + rng.sample::<f64, _>(StandardNormal),
            Family::Binomial => f64::from(u8::from(rng.random::<f64>() < sigmoid(eta))),
        };
        samples.push(StreamSample {
            x,
            y,
            true_beta: beta.clone(),
            true_support: support.clone(),
            regime_id,
        });
    }
    Ok((beta, samples))
}

/// Concatenates independently drawn regimes, each with its own block
/// assignment and coefficient vector.
pub fn make_piecewise_stream<R: Rng + ?Sized>(
    specs: &[RegimeSpec],
    rng: &mut R,
) -> Result<Vec<StreamSample>> {
    let first = specs
        .first()
        .ok_or_else(|| Error::InvalidConfig("at least one regime is required".into()))?;
    for s in specs {
        if s.p != first.p || s.family != first.family {
            return Err(Error::InvalidConfig(
                "all regimes must share dimension and family".into(),
            ));
        }
    }
    let mut out = Vec::with_capacity(specs.iter().map(|s| s.duration).sum());
    for (id, spec) in specs.iter().enumerate() {
        let (_, samples) = sample_regime_with_id(spec, id, rng)?;
        out.extend(samples);
    }
    Ok(out)
}

/// Dense/sparse/dense regimes of 100 observations each over 20 predictors.
pub fn alternating_regimes(family: Family) -> Vec<RegimeSpec> {
    vec![
        RegimeSpec::new(20, 0.8, 100, family),
        RegimeSpec::new(20, 0.2, 100, family),
        RegimeSpec::new(20, 0.8, 100, family),
    ]
}

/// Start offsets (0-based) of every regime after the first.
pub fn changepoints(samples: &[StreamSample]) -> Vec<usize> {
    samples
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].regime_id != w[1].regime_id)
        .map(|(i, _)| i + 1)
        .collect()
}

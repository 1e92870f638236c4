//! Offline K-fold cross-validation of a fixed penalty.
//!
//! Penalties are in the normalized units of [`PenaltyScale::Normalized`]:
//! the training objective is the mean loss plus `λ‖β‖₁`, so a value chosen
//! here can be handed directly to a normalized streaming fit.
//!
//! [`PenaltyScale::Normalized`]: crate::rap::PenaltyScale::Normalized

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::glm::{self, Family, ObsBuffer};
use crate::lasso::{self, LassoFit};
use crate::moments::WeightedMoments;

/// Smallest grid value as a fraction of `λ_max`.
pub const GRID_DEPTH: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub lambda: f64,
    /// Penalties tried, largest first.
    pub grid: Vec<f64>,
    /// Mean held-out loss per grid value.
    pub cv_loss: Vec<f64>,
}

/// Normalized `λ_max` of the full data set.
pub fn normalized_lambda_max(x: &[Vec<f64>], y: &[f64], family: Family) -> Result<f64> {
    let n = x.len();
    if n == 0 {
        return Err(Error::EmptyStream);
    }
    let p = x[0].len();
    let mu0 = family.mean(0.0);
    let mut score = DVector::<f64>::zeros(p);
    for (xi, yi) in x.iter().zip(y) {
        for j in 0..p {
            score[j] += (yi - mu0) * xi[j];
        }
    }
    Ok(score.amax() / n as f64)
}

/// Log-spaced grid from `lambda_max` down to `GRID_DEPTH·lambda_max`.
pub fn lambda_grid(lambda_max: f64, size: usize) -> Vec<f64> {
    match size {
        0 => Vec::new(),
        1 => vec![lambda_max],
        _ => (0..size)
            .map(|k| lambda_max * GRID_DEPTH.powf(k as f64 / (size - 1) as f64))
            .collect(),
    }
}

fn check_dataset(x: &[Vec<f64>], y: &[f64], family: Family, k: usize) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    if x.len() < k {
        return Err(Error::InvalidConfig(format!(
            "{} observations cannot be split into {k} folds",
            x.len()
        )));
    }
    let p = x[0].len();
    if p == 0 {
        return Err(Error::EmptyDimension);
    }
    for (xi, yi) in x.iter().zip(y) {
        if xi.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: xi.len(),
            });
        }
        family.check_response(*yi)?;
    }
    let first = y[0];
    if y.iter().all(|v| *v == first) {
        return Err(Error::Degenerate("response has zero variance".into()));
    }
    Ok(p)
}

/// Contiguous fold boundaries `[start, end)`.
pub fn fold_bounds(n: usize, k: usize) -> Vec<(usize, usize)> {
    (0..k).map(|f| (f * n / k, (f + 1) * n / k)).collect()
}

/// Selects the grid penalty with the lowest mean held-out loss over `k`
/// contiguous folds. Ties go to the larger penalty.
pub fn kfold_cv_lambda(
    x: &[Vec<f64>],
    y: &[f64],
    family: Family,
    k: usize,
    grid_size: usize,
) -> Result<CvResult> {
    let p = check_dataset(x, y, family, k)?;
    if grid_size == 0 {
        return Err(Error::InvalidConfig(
            "grid must have at least one value".into(),
        ));
    }
    let grid = lambda_grid(normalized_lambda_max(x, y, family)?, grid_size);
    let n = x.len();
    let mut total_loss = vec![0.0; grid.len()];

    // Gaussian folds reuse the full-data moments.
    let full = match family {
        Family::Gaussian => Some(batch_moments(x, y, p, 0, n)),
        Family::Binomial => None,
    };

    for (lo, hi) in fold_bounds(n, k) {
        let n_train = (n - (hi - lo)) as f64;
        let mut warm: Option<LassoFit> = None;
        match family {
            Family::Gaussian => {
                let (gram_all, cross_all) = full.as_ref().expect("gaussian moments");
                let (gram_f, cross_f) = batch_moments(x, y, p, lo, hi);
                let m = WeightedMoments::from_parts(
                    1.0,
                    gram_all - gram_f,
                    cross_all - cross_f,
                    n_train,
                    n - (hi - lo),
                )?;
                for (g, lam) in grid.iter().enumerate() {
                    let fit = lasso::fit(&m, lam * n_train, warm.as_ref())?;
                    total_loss[g] += held_out_loss(x, y, family, lo, hi, &fit.beta)?;
                    warm = Some(fit);
                }
            }
            Family::Binomial => {
                let mut buf = ObsBuffer::new(p, 1.0)?;
                for i in (0..lo).chain(hi..n) {
                    buf.push(&x[i], y[i])?;
                }
                for (g, lam) in grid.iter().enumerate() {
                    let fit = glm::fit_penalized(&buf, family, lam * n_train, warm.as_ref())?;
                    total_loss[g] += held_out_loss(x, y, family, lo, hi, &fit.beta)?;
                    warm = Some(fit);
                }
            }
        }
    }

    let cv_loss: Vec<f64> = total_loss.iter().map(|l| l / n as f64).collect();
    let mut best = 0;
    for (g, loss) in cv_loss.iter().enumerate() {
        if *loss < cv_loss[best] {
            best = g;
        }
    }
    Ok(CvResult {
        lambda: grid[best],
        grid,
        cv_loss,
    })
}

/// Cross-validates each segment between consecutive change points
/// separately. Returns `(start, λ)` pairs, one per segment.
pub fn stepwise_cv_lambda(
    x: &[Vec<f64>],
    y: &[f64],
    changepoints: &[usize],
    family: Family,
    k: usize,
    grid_size: usize,
) -> Result<Vec<(usize, f64)>> {
    let mut starts = vec![0];
    starts.extend(
        changepoints
            .iter()
            .copied()
            .filter(|c| *c > 0 && *c < x.len()),
    );
    starts.sort_unstable();
    starts.dedup();
    let mut out = Vec::with_capacity(starts.len());
    for (s, &lo) in starts.iter().enumerate() {
        let hi = starts.get(s + 1).copied().unwrap_or(x.len());
        if hi - lo < k {
            return Err(Error::InvalidConfig(format!(
                "segment [{lo}, {hi}) is shorter than {k} folds"
            )));
        }
        let cv = kfold_cv_lambda(&x[lo..hi], &y[lo..hi], family, k, grid_size)?;
        out.push((lo, cv.lambda));
    }
    Ok(out)
}

/// Evaluates a step function produced by [`stepwise_cv_lambda`] at
/// 0-based position `t`.
pub fn step_value(steps: &[(usize, f64)], t: usize) -> f64 {
    steps
        .iter()
        .rev()
        .find(|(start, _)| *start <= t)
        .map(|(_, l)| *l)
        .unwrap_or(f64::NAN)
}

/// Full-data fit with uniform weights at normalized penalty `lambda`.
pub fn fit_full(x: &[Vec<f64>], y: &[f64], family: Family, lambda: f64) -> Result<LassoFit> {
    let n = x.len();
    if n == 0 {
        return Err(Error::EmptyStream);
    }
    let p = x[0].len();
    match family {
        Family::Gaussian => {
            let (gram, cross) = batch_moments(x, y, p, 0, n);
            let m = WeightedMoments::from_parts(1.0, gram, cross, n as f64, n)?;
            lasso::fit(&m, lambda * n as f64, None)
        }
        Family::Binomial => {
            let mut buf = ObsBuffer::new(p, 1.0)?;
            for (xi, yi) in x.iter().zip(y) {
                buf.push(xi, *yi)?;
            }
            glm::fit_penalized(&buf, family, lambda * n as f64, None)
        }
    }
}

fn batch_moments(
    x: &[Vec<f64>],
    y: &[f64],
    p: usize,
    lo: usize,
    hi: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let mut gram = DMatrix::zeros(p, p);
    let mut cross = DVector::zeros(p);
    for i in lo..hi {
        let xi = DVector::from_column_slice(&x[i]);
        gram.ger(1.0, &xi, &xi, 1.0);
        cross.axpy(y[i], &xi, 1.0);
    }
    (gram, cross)
}

fn held_out_loss(
    x: &[Vec<f64>],
    y: &[f64],
    family: Family,
    lo: usize,
    hi: usize,
    beta: &DVector<f64>,
) -> Result<f64> {
    let mut total = 0.0;
    for i in lo..hi {
        total += glm::nll(family, &x[i], y[i], beta)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{self, RegimeSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dataset(spec: &RegimeSpec, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, s) = simgen::sample_regime(spec, &mut rng).unwrap();
        (
            s.iter().map(|v| v.x.clone()).collect(),
            s.iter().map(|v| v.y).collect(),
        )
    }

    #[test]
    fn grid_shape() {
        let g = lambda_grid(2.0, 50);
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 2.0);
        assert!((g[49] - 2e-3).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
        assert_eq!(lambda_grid(0.7, 1), vec![0.7]);
    }

    #[test]
    fn single_grid_value_is_returned() {
        let (x, y) = dataset(&RegimeSpec::new(10, 0.5, 100, Family::Gaussian), 1);
        let lmax = normalized_lambda_max(&x, &y, Family::Gaussian).unwrap();
        let cv = kfold_cv_lambda(&x, &y, Family::Gaussian, 10, 1).unwrap();
        assert_eq!(cv.lambda, lmax);
    }

    #[test]
    fn pure_noise_prefers_heavy_shrinkage() {
        let mut top_decile = 0;
        for seed in 0..20 {
            let (x, y) = dataset(&RegimeSpec::new(10, 0.0, 300, Family::Gaussian), seed);
            let cv = kfold_cv_lambda(&x, &y, Family::Gaussian, 10, 50).unwrap();
            let rank = cv.grid.iter().position(|l| *l == cv.lambda).unwrap();
            if rank < 5 {
                top_decile += 1;
            }
        }
        assert!(top_decile >= 15, "{top_decile}/20");
    }

    #[test]
    fn duplicating_each_row_keeps_the_choice() {
        for family in [Family::Gaussian, Family::Binomial] {
            let (x, y) = dataset(&RegimeSpec::new(10, 0.5, 200, family), 3);
            let x2: Vec<Vec<f64>> = x.iter().flat_map(|r| [r.clone(), r.clone()]).collect();
            let y2: Vec<f64> = y.iter().flat_map(|v| [*v, *v]).collect();
            let a = kfold_cv_lambda(&x, &y, family, 10, 30).unwrap();
            let b = kfold_cv_lambda(&x2, &y2, family, 10, 30).unwrap();
            assert!((a.lambda - b.lambda).abs() <= 1e-12 * a.lambda, "{family}");
        }
    }

    #[test]
    fn degenerate_inputs() {
        let x = vec![vec![1.0, 2.0]; 20];
        let y = vec![1.0; 20];
        assert!(matches!(
            kfold_cv_lambda(&x, &y, Family::Gaussian, 10, 5),
            Err(Error::Degenerate(_))
        ));
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert!(kfold_cv_lambda(&x[..5], &y[..5], Family::Gaussian, 10, 5).is_err());
        assert!(kfold_cv_lambda(&x, &y, Family::Gaussian, 1, 5).is_err());
        assert!(kfold_cv_lambda(&x, &y, Family::Binomial, 2, 5).is_err());
    }

    #[test]
    fn stepwise_segments() {
        let (x, y) = dataset(&RegimeSpec::new(10, 0.5, 120, Family::Gaussian), 5);
        let one = stepwise_cv_lambda(&x, &y, &[], Family::Gaussian, 10, 20).unwrap();
        let direct = kfold_cv_lambda(&x, &y, Family::Gaussian, 10, 20).unwrap();
        assert_eq!(one, vec![(0, direct.lambda)]);

        let three = stepwise_cv_lambda(&x, &y, &[40, 80], Family::Gaussian, 10, 20).unwrap();
        assert_eq!(three.len(), 3);
        assert_eq!(step_value(&three, 39), three[0].1);
        assert_eq!(step_value(&three, 80), three[2].1);

        assert!(stepwise_cv_lambda(&x, &y, &[115], Family::Gaussian, 10, 20).is_err());
    }
}

use std::collections::BTreeSet;

/// Harmonic mean of precision and recall of `est` against `truth`.
///
/// Two empty supports score 1; otherwise a zero precision or recall
/// scores 0.
pub fn f_score(est: &[usize], truth: &[usize]) -> f64 {
    if est.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let truth: BTreeSet<usize> = truth.iter().copied().collect();
    let est: BTreeSet<usize> = est.iter().copied().collect();
    let hits = est.intersection(&truth).count() as f64;
    let precision = if est.is_empty() {
        0.0
    } else {
        hits / est.len() as f64
    };
    let recall = if truth.is_empty() {
        0.0
    } else {
        hits / truth.len() as f64
    };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// `‖β_cv‖₁ - ‖β_rap‖₁`.
pub fn delta_l1(beta_cv: &[f64], beta_rap: &[f64]) -> f64 {
    assert_eq!(
        beta_cv.len(),
        beta_rap.len(),
        "coefficient vectors differ in length"
    );
    let l1 = |v: &[f64]| v.iter().map(|b| b.abs()).sum::<f64>();
    l1(beta_cv) - l1(beta_rap)
}

/// Sample mean and standard error of the mean. The standard error is
/// `None` with fewer than two values.
pub fn mean_and_se(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Some((var / n as f64).sqrt()))
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

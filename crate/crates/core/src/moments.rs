//! Exponentially weighted sufficient statistics for streaming linear models.
//!
//! Observation `i` carries weight `r^(t - i)` once `t` observations have been
//! absorbed. The Gram matrix and cross-moment are kept as raw weighted sums
//! (not divided by `omega`), so the smallest penalty yielding an all-zero
//! Lasso solution is `max_j |cross_j|`.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMoments {
    r: f64,
    omega: f64,
    mean: DVector<f64>,
    gram: DMatrix<f64>,
    cross: DVector<f64>,
    t: usize,
}

impl WeightedMoments {
    pub fn new(p: usize, r: f64) -> Result<Self> {
        if p < 1 {
            return Err(Error::EmptyDimension);
        }
        validate_forgetting_factor(r)?;
        Ok(Self {
            r,
            omega: 0.0,
            mean: DVector::zeros(p),
            gram: DMatrix::zeros(p, p),
            cross: DVector::zeros(p),
            t: 0,
        })
    }

    /// Absorbs one observation `(x, y)`.
    pub fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        let p = self.dim();
        if x.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: x.len(),
            });
        }
        ensure_finite(x, "predictor vector")?;
        ensure_finite(&[y], "response")?;

        let x = DVector::from_column_slice(x);
        self.omega = self.r * self.omega + 1.0;
        let step = 1.0 / self.omega;
        self.mean *= 1.0 - step;
        self.mean.axpy(step, &x, 1.0);
        // x xᵀ rank-one update keeps the matrix exactly symmetric
        self.gram *= self.r;
        self.gram.ger(1.0, &x, &x, 1.0);
        self.cross *= self.r;
        self.cross.axpy(y, &x, 1.0);
        self.t += 1;
        Ok(())
    }

    /// Weight `r^(t - i)` of the `i`-th observation (1-based).
    pub fn effective_weight(&self, i: usize) -> Result<f64> {
        if i < 1 || i > self.t {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.t,
            });
        }
        Ok(self.r.powi((self.t - i) as i32))
    }

    pub fn dim(&self) -> usize {
        self.cross.len()
    }

    pub fn forgetting_factor(&self) -> f64 {
        self.r
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn cross(&self) -> &DVector<f64> {
        &self.cross
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        self.t == 0
    }

    /// Builds moments directly from a Gram matrix and cross-moment, as if
    /// `t` observations with total weight `omega` had been absorbed.
    pub fn from_parts(
        r: f64,
        gram: DMatrix<f64>,
        cross: DVector<f64>,
        omega: f64,
        t: usize,
    ) -> Result<Self> {
        validate_forgetting_factor(r)?;
        let p = cross.len();
        if p < 1 {
            return Err(Error::EmptyDimension);
        }
        if gram.nrows() != p || gram.ncols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: gram.nrows(),
            });
        }
        ensure_finite(gram.as_slice(), "gram")?;
        ensure_finite(cross.as_slice(), "cross")?;
        Ok(Self {
            r,
            omega,
            mean: DVector::zeros(p),
            gram,
            cross,
            t,
        })
    }
}

pub(crate) fn validate_forgetting_factor(r: f64) -> Result<()> {
    if r > 0.0 && r <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidForgettingFactor(r))
    }
}

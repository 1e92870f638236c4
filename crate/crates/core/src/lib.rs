//! Streaming l1-regularized regression with a penalty that adapts online.
//!
//! The building blocks are exponentially weighted moments
//! ([`moments`]), a warm-started coordinate-descent Lasso ([`lasso`]), a
//! penalized GLM fitter for the binomial family ([`glm`]) and the adaptive
//! penalty learner itself ([`rap`]). [`simgen`] generates piecewise
//! stationary test streams and [`harness`] holds the cross-validation
//! baselines, metrics and replication driver used to benchmark them.
//! [`network`] runs one learner per node for neighborhood selection.

pub mod error;
pub mod glm;
pub mod harness;
pub mod lasso;
pub mod moments;
pub mod network;
pub mod rap;
pub mod simgen;

pub use error::{Error, Result};
pub use glm::{Family, ObsBuffer};
pub use lasso::LassoFit;
pub use moments::WeightedMoments;
pub use rap::{GradientMode, PenaltyScale, Rap, RapState, TraceRecord};

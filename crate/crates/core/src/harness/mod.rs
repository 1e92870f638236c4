//! Baselines, metrics and the replication driver for benchmarking the
//! adaptive penalty on simulated streams.

pub mod contraction;
pub mod cv;
pub mod experiment;
pub mod metrics;

pub use contraction::{contraction_probe, instance_scale, ProbeReport};
pub use cv::{kfold_cv_lambda, stepwise_cv_lambda, CvResult};
pub use experiment::{
    run_replication, run_replications, Arm, ArmRun, ArmSummary, ExperimentConfig, Preset,
    ReplicationResult, Summary,
};
pub use metrics::{delta_l1, f_score};

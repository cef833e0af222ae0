//! Online learning of a shared linear representation for ridge regression.
//!
//! A stream of small regression tasks arrives one dataset at a time. Each
//! incoming dataset costs one gradient step on the closed-form ridge
//! meta-loss followed by a projection onto the PSD trace ball, and the
//! averaged iterate is the learned representation — no dataset is kept in
//! memory once its step is taken. Batch, independent-task, and multitask
//! baselines plus the evaluation harness reproduce the accompanying
//! benchmarks.

pub mod batch;
pub mod envs;
pub mod error;
pub mod eval;
pub mod online;
pub mod projection;
pub mod ridge;
pub mod types;

pub use batch::{itl_fit, mtl_fit, solve as batch_solve, BatchSolution, MtlFit};
pub use envs::{load_schools, EnvironmentSpec, SampledTask, SchoolsData, TaskSplit};
pub use error::{Error, Result};
pub use eval::{
    covariance_norm_estimate, excess_risk_bound, explained_variance_pct, select_online,
    transfer_risk_estimate, LambdaGrid, ParallelSelection, SelectionOutcome, SelectionStep,
};
pub use online::{regret, regret_bound, run_online, OnlineLearner, RegretLedger};
pub use projection::{project, threshold_root};
pub use ridge::{empirical_risk, meta_gradient, meta_loss, ridge_solve, LossEval};
pub use types::{
    ExperimentRecord, LinearPredictor, Method, Representation, TaskDataset,
};

//! One-shot distributed logistic regression for rare-events data.
//!
//! Rows are split across `K` workers, each worker fits a weighted logistic
//! model by Newton's method, and the coordinator averages the local
//! estimates in a single round. Three estimators are supported:
//!
//! * `RMLE`: rows assigned at random, unweighted local fits.
//! * `US`: every worker keeps all positives plus a disjoint slice of the
//!   negatives; the averaged intercept is shifted by `−log K`.
//! * `IPW`: the same shards as `US`, with negatives weighted by `K`.
//!
//! The full-data fit (`GMLE`) serves as the reference.
//!
//! ```
//! use distlogit::{fit_estimator, generate_data, EngineConfig, EstimatorKind, SimConfig};
//!
//! let config = SimConfig::new(5_000, 8);
//! let data = generate_data(&config, 1).unwrap();
//! let fit = fit_estimator(&data, EstimatorKind::Ipw, 8, 42, &EngineConfig::default()).unwrap();
//! assert_eq!(fit.theta_hat.dim(), 5);
//! assert!(fit.converged());
//! ```

pub mod engine;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod simulate;
pub mod solver;
pub mod variance;

pub use engine::{
    debias_by, debias_us, fit_distributed, fit_estimator, fit_global, fit_local, fit_with_plan,
    one_shot_average, Communication, DistributedFit, EngineConfig, EstimatorKind, FailurePolicy,
    FitDocument, ShardSummary,
};
pub use error::{Error, Result};
pub use metrics::{accuracy, coverage, Accuracy};
pub use model::{
    evaluate, gradient, hessian, log_likelihood, predict_prob, sigmoid, softplus, Dataset,
    Evaluation, ObservationWeights, Theta,
};
pub use partition::{
    partition, partition_copy, partition_random, partition_random_with, shard_view, PartitionPlan,
    PlanSummary, RandomAssignment, ShardCounts, Strategy,
};
pub use simulate::{
    case_presets, generate_data, run_monte_carlo, Case, EstimatorSummary, MonteCarloReport,
    ReplicationRecord, SimConfig,
};
pub use solver::{fit, fit_warm, initial_theta, FitResult, FitStatus, SolverConfig};
pub use variance::{
    covariance_of, covariance_of_global, estimate_gamma, moment_matrices, sandwich, spd_inverse,
    CovarianceReport, InformationForm,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/partitioning.md")]
    mod partitioning {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/variance.md")]
    mod variance {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
}

//! Simulated K-worker system with one-shot aggregation.
//!
//! Each worker fits its shard with estimator-specific weights and sends back a
//! single (p+1)-vector. The centre averages those vectors and, for the
//! under-sampled estimator, subtracts `log K` from the intercept.
//!
//! | estimator | strategy | shard weights (positives / negatives) |
//! |-----------|----------|---------------------------------------|
//! | RMLE      | RANDOM   | 1 / 1                                 |
//! | US        | COPY     | 1 / 1, then intercept − log K         |
//! | IPW       | COPY     | 1 / K                                 |
//! | GMLE      | none     | 1 / 1 on the full data                |

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, ObservationWeights, Theta};
use crate::partition::{
    partition_copy, partition_random, partition_random_with, shard_view, PartitionPlan,
    PlanSummary, RandomAssignment, Strategy,
};
use crate::solver::{fit_warm, FitResult, FitStatus, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "GMLE")]
    Gmle,
    #[serde(rename = "RMLE")]
    Rmle,
    #[serde(rename = "US")]
    Us,
    #[serde(rename = "IPW")]
    Ipw,
}

impl EstimatorKind {
    pub const DISTRIBUTED: [EstimatorKind; 3] =
        [EstimatorKind::Rmle, EstimatorKind::Us, EstimatorKind::Ipw];

    /// Distribution strategy the estimator runs under. GMLE is paired with a
    /// single RANDOM shard holding all the data.
    pub fn strategy(self) -> Strategy {
        match self {
            EstimatorKind::Gmle | EstimatorKind::Rmle => Strategy::Random,
            EstimatorKind::Us | EstimatorKind::Ipw => Strategy::Copy,
        }
    }

    /// Weight applied to a shard's negatives when the plan has `k` shards.
    pub fn negative_weight(self, k: usize) -> f64 {
        match self {
            EstimatorKind::Ipw => k as f64,
            _ => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Gmle => "GMLE",
            EstimatorKind::Rmle => "RMLE",
            EstimatorKind::Us => "US",
            EstimatorKind::Ipw => "IPW",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gmle" => Ok(EstimatorKind::Gmle),
            "rmle" => Ok(EstimatorKind::Rmle),
            "us" => Ok(EstimatorKind::Us),
            "ipw" => Ok(EstimatorKind::Ipw),
            other => Err(Error::InvalidArgument(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Any non-converged local fit aborts the distributed fit.
    #[default]
    FailFast,
    /// Average over converged locals only and record a warning per failure.
    DropAndWarn,
}

impl FromStr for FailurePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "fail_fast" | "failfast" => Ok(FailurePolicy::FailFast),
            "drop_and_warn" | "dropandwarn" | "drop" => Ok(FailurePolicy::DropAndWarn),
            other => Err(Error::InvalidArgument(format!("unknown failure policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub solver: SolverConfig,
    pub failure_policy: FailurePolicy,
    /// Run the K local fits on the rayon pool. Results do not depend on it.
    pub parallel: bool,
    pub random_assignment: RandomAssignment,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            failure_policy: FailurePolicy::FailFast,
            parallel: true,
            random_assignment: RandomAssignment::Balanced,
        }
    }
}

/// Worker-to-centre traffic of the one-shot protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Communication {
    pub rounds: usize,
    pub messages: usize,
    pub floats: usize,
}

#[derive(Debug, Clone)]
pub struct DistributedFit {
    pub kind: EstimatorKind,
    pub k: usize,
    pub seed: u64,
    pub theta_hat: Theta,
    pub local_results: Vec<FitResult>,
    pub plan: PartitionPlan,
    pub n_failed: usize,
    pub debias_applied: bool,
    pub communication: Communication,
    pub warnings: Vec<String>,
}

impl DistributedFit {
    pub fn converged(&self) -> bool {
        self.n_failed == 0
    }

    /// The local estimate of shard `k_index` on the scale of the final
    /// estimator (debiased for US).
    pub fn local_estimate(&self, k_index: usize) -> Option<Theta> {
        let r = self.local_results.get(k_index)?;
        if self.debias_applied {
            debias_us(&r.theta_hat, self.k).ok()
        } else {
            Some(r.theta_hat.clone())
        }
    }

    pub fn document(&self) -> FitDocument {
        FitDocument {
            kind: self.kind,
            k: self.k,
            seed: self.seed,
            theta_hat: self.theta_hat.clone(),
            debias_applied: self.debias_applied,
            n_failed: self.n_failed,
            per_shard: self
                .local_results
                .iter()
                .zip(&self.plan.shards)
                .enumerate()
                .map(|(shard, (r, rows))| ShardSummary {
                    shard,
                    n_rows: rows.len(),
                    status: r.status,
                    iterations: r.iterations,
                    grad_norm: r.final_grad_norm,
                })
                .collect(),
            communication: self.communication,
            plan: self.plan.summary(false),
            warnings: self.warnings.clone(),
        }
    }
}

/// Serialised form of a [`DistributedFit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub kind: EstimatorKind,
    pub k: usize,
    pub seed: u64,
    pub theta_hat: Theta,
    pub debias_applied: bool,
    pub n_failed: usize,
    pub per_shard: Vec<ShardSummary>,
    pub communication: Communication,
    pub plan: PlanSummary,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShardSummary {
    pub shard: usize,
    pub n_rows: usize,
    pub status: FitStatus,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Fits shard `k_index` of `plan` with the weights `kind` prescribes.
pub fn fit_local(
    data: &Dataset,
    plan: &PartitionPlan,
    k_index: usize,
    kind: EstimatorKind,
    config: &SolverConfig,
) -> Result<FitResult> {
    if plan.strategy != kind.strategy() {
        return Err(Error::InvalidArgument(format!(
            "{kind} needs a {:?} plan, got {:?}",
            kind.strategy(),
            plan.strategy
        )));
    }
    let shard = shard_view(data, plan, k_index)?;
    let w = ObservationWeights::by_class(&shard, 1.0, kind.negative_weight(plan.k))?;
    fit_warm(&shard, &w, config)
}

/// Coordinatewise mean.
///
/// Each coordinate is summed in sorted order with Neumaier compensation, so
/// the result does not depend on the order of `locals`.
pub fn one_shot_average(locals: &[Theta]) -> Result<Theta> {
    let first = locals
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot average zero local estimates".into()))?;
    let d = first.dim();
    if let Some(bad) = locals.iter().find(|t| t.dim() != d) {
        return Err(Error::DimensionMismatch(format!(
            "local estimates have lengths {d} and {}",
            bad.dim()
        )));
    }
    let n = locals.len() as f64;
    let vectors: Vec<Vec<f64>> = locals.iter().map(Theta::to_vec).collect();
    let mean: Vec<f64> = (0..d)
        .map(|j| {
            let mut column: Vec<f64> = vectors.iter().map(|v| v[j]).collect();
            column.sort_by(f64::total_cmp);
            neumaier_sum(&column) / n
        })
        .collect();
    Theta::from_slice(&mean)
}

/// Subtracts `log k` from the intercept and leaves the slopes untouched.
pub fn debias_us(theta_bar: &Theta, k: usize) -> Result<Theta> {
    debias_by(theta_bar, k as f64)
}

/// [`debias_us`] for a real-valued split factor, e.g. `1/π` for a
/// Bernoulli(π) subsample.
pub fn debias_by(theta_bar: &Theta, k: f64) -> Result<Theta> {
    if !(k >= 1.0 && k.is_finite()) {
        return Err(Error::InvalidArgument(format!("split factor must be >= 1, got {k}")));
    }
    Ok(Theta { alpha: theta_bar.alpha - k.ln(), beta: theta_bar.beta.clone() })
}

/// Single-machine maximum likelihood on the full data.
pub fn fit_global(data: &Dataset, config: &SolverConfig) -> Result<FitResult> {
    fit_warm(data, &ObservationWeights::ones(data.n_rows()), config)
}

/// Builds the plan, runs the K local fits, averages, and debiases for US.
pub fn fit_distributed(
    data: &Dataset,
    kind: EstimatorKind,
    k: usize,
    seed: u64,
    config: &EngineConfig,
) -> Result<DistributedFit> {
    if kind == EstimatorKind::Gmle {
        return Err(Error::InvalidArgument(
            "GMLE is not distributed; use fit_global or fit_estimator".into(),
        ));
    }
    let plan = match kind.strategy() {
        Strategy::Random => partition_random_with(data, k, seed, config.random_assignment)?,
        Strategy::Copy => partition_copy(data, k, seed)?,
    };
    fit_with_plan(data, kind, plan, config)
}

/// Runs any estimator, GMLE included, and reports it in distributed form.
/// GMLE becomes a single RANDOM shard holding every row.
pub fn fit_estimator(
    data: &Dataset,
    kind: EstimatorKind,
    k: usize,
    seed: u64,
    config: &EngineConfig,
) -> Result<DistributedFit> {
    match kind {
        EstimatorKind::Gmle => fit_with_plan(data, kind, partition_random(data, 1, seed)?, config),
        _ => fit_distributed(data, kind, k, seed, config),
    }
}

/// Runs the local fits on an existing plan.
pub fn fit_with_plan(
    data: &Dataset,
    kind: EstimatorKind,
    plan: PartitionPlan,
    config: &EngineConfig,
) -> Result<DistributedFit> {
    config.solver.validate()?;
    let run = |j: usize| fit_local(data, &plan, j, kind, &config.solver);
    let local_results: Vec<FitResult> = if config.parallel {
        (0..plan.k).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..plan.k).map(run).collect::<Result<_>>()?
    };

    let mut warnings = Vec::new();
    let mut kept = Vec::with_capacity(plan.k);
    for (j, r) in local_results.iter().enumerate() {
        if r.converged {
            kept.push(r.theta_hat.clone());
            continue;
        }
        match config.failure_policy {
            FailurePolicy::FailFast => return Err(Error::LocalFit { shard: j, status: r.status }),
            FailurePolicy::DropAndWarn => {
                warnings.push(format!("shard {j} dropped: {}", r.status));
            }
        }
    }
    if kept.is_empty() {
        let status = local_results.first().map_or(FitStatus::MaxIters, |r| r.status);
        return Err(Error::LocalFit { shard: 0, status });
    }
    let n_failed = plan.k - kept.len();

    let averaged = one_shot_average(&kept)?;
    let debias_applied = kind == EstimatorKind::Us;
    let theta_hat = if debias_applied { debias_us(&averaged, plan.k)? } else { averaged };

    let d = data.dim();
    Ok(DistributedFit {
        kind,
        k: plan.k,
        seed: plan.seed,
        theta_hat,
        n_failed,
        debias_applied,
        communication: Communication { rounds: 1, messages: plan.k, floats: plan.k * d },
        warnings,
        local_results,
        plan,
    })
}

fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

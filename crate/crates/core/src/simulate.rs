//! Synthetic rare-events data and the Monte Carlo driver.
//!
//! Covariates are `N(0, Σ)` with `σᵢⱼ = ρ^|i−j|`; responses follow the
//! logistic model at `α* = −c·log N`. Each replication redraws both X and Y.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{fit_estimator, DistributedFit, EngineConfig, EstimatorKind, FailurePolicy};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, coverage};
use crate::model::{sigmoid, Dataset, Theta};
use crate::solver::SolverConfig;
use crate::variance::{covariance_of, InformationForm};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_total: usize,
    pub p: usize,
    /// `c` in `α* = −c·log N`.
    pub alpha_coef: f64,
    pub beta_star: Vec<f64>,
    pub ar_rho: f64,
    pub k_workers: usize,
    pub m_reps: usize,
    pub base_seed: u64,
    pub estimators: Vec<EstimatorKind>,
    /// Also summarise the first worker's local estimate of each distributed estimator.
    pub include_local: bool,
    pub failure_policy: FailurePolicy,
    pub information_form: InformationForm,
}

impl SimConfig {
    /// Defaults: p = 4, c = 0.45, β* = 1, ρ = 0.2, M = 500, RMLE/US/IPW.
    pub fn new(n_total: usize, k_workers: usize) -> Self {
        Self {
            n_total,
            p: 4,
            alpha_coef: 0.45,
            beta_star: vec![1.0; 4],
            ar_rho: 0.2,
            k_workers,
            m_reps: 500,
            base_seed: 0,
            estimators: EstimatorKind::DISTRIBUTED.to_vec(),
            include_local: false,
            failure_policy: FailurePolicy::DropAndWarn,
            information_form: InformationForm::FiniteSample,
        }
    }

    /// Defaults with K taken from the case presets.
    pub fn for_case(case: Case, n_total: usize) -> Result<Self> {
        Ok(Self::new(n_total, case_presets(case, n_total)?))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_total < 2 || self.p == 0 {
            return Err(Error::InvalidArgument("need N >= 2 and p >= 1".into()));
        }
        if self.beta_star.len() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "beta_star has {} entries for p = {}",
                self.beta_star.len(),
                self.p
            )));
        }
        if !(0.0..1.0).contains(&self.ar_rho) {
            return Err(Error::InvalidArgument(format!("rho must lie in [0, 1), got {}", self.ar_rho)));
        }
        if !(self.alpha_coef > 0.0 && self.alpha_coef.is_finite()) {
            return Err(Error::InvalidArgument("alpha coefficient must be positive".into()));
        }
        if self.m_reps == 0 || self.k_workers == 0 || self.k_workers > self.n_total {
            return Err(Error::InvalidArgument("need M >= 1 and 1 <= K <= N".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument("no estimators requested".into()));
        }
        if self.beta_star.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("beta_star".into()));
        }
        Ok(())
    }

    pub fn alpha_star(&self) -> f64 {
        -self.alpha_coef * (self.n_total as f64).ln()
    }

    pub fn theta_star(&self) -> Theta {
        Theta::new(self.alpha_star(), self.beta_star.clone())
    }

    /// `√(N e^{α*})`.
    pub fn scale(&self) -> f64 {
        (self.n_total as f64 * self.alpha_star().exp()).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// COPY shards hold roughly 1.5 positives per negative.
    Case1,
    /// COPY shards are dominated by negatives.
    Case2,
}

impl std::str::FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "case1" => Ok(Case::Case1),
            "2" | "case2" => Ok(Case::Case2),
            other => Err(Error::InvalidArgument(format!("unknown case '{other}'"))),
        }
    }
}

/// Worker count for the preset sample sizes 10⁴, 10⁵, 5·10⁵, 10⁶.
pub fn case_presets(case: Case, n_total: usize) -> Result<usize> {
    let slot = match n_total {
        10_000 => 0,
        100_000 => 1,
        500_000 => 2,
        1_000_000 => 3,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "no preset worker count for N = {n_total}; pass K explicitly"
            )))
        }
    };
    Ok(match case {
        Case::Case1 => [17, 36, 63, 81][slot],
        Case::Case2 => [2, 3, 4, 5][slot],
    })
}

/// Draws one dataset. Deterministic in `(config, seed)`.
pub fn generate_data(config: &SimConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let (n, p, rho) = (config.n_total, config.p, config.ar_rho);
    let innovation = (1.0 - rho * rho).sqrt();
    let theta = config.theta_star();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let start = x.len();
        let mut prev: f64 = rng.sample(StandardNormal);
        x.push(prev);
        for _ in 1..p {
            let e: f64 = rng.sample(StandardNormal);
            prev = rho * prev + innovation * e;
            x.push(prev);
        }
        let prob = sigmoid(theta.linear_predictor(&x[start..]));
        y.push(u8::from(rng.random::<f64>() < prob));
    }
    Dataset::new(x, p, y)
}

/// One estimator's outcome in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub seed: u64,
    pub estimator: String,
    pub status: String,
    pub theta: Option<Vec<f64>>,
    pub se: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: String,
    pub bias: f64,
    pub se: f64,
    pub rmse: f64,
    pub mean_estimated_se: Option<f64>,
    pub coverage: Option<f64>,
    pub n_ok: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub config: SimConfig,
    pub alpha_star: f64,
    pub theta_star: Theta,
    /// `√(N e^{α*})`.
    pub scale: f64,
    pub simulation: String,
    pub estimators: Vec<EstimatorSummary>,
    pub records: Vec<ReplicationRecord>,
}

impl MonteCarloReport {
    pub fn summary(&self, estimator: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|s| s.estimator == estimator)
    }

    pub const CSV_HEADER: &'static str =
        "N,scale,estimator,bias,se,rmse,K,M,mean_estimated_se,coverage,n_ok,n_failed";

    /// One row per estimator.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        for s in &self.estimators {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                self.config.n_total,
                self.scale,
                s.estimator,
                s.bias,
                s.se,
                s.rmse,
                self.config.k_workers,
                self.config.m_reps,
                opt(s.mean_estimated_se),
                opt(s.coverage),
                s.n_ok,
                s.n_failed
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

/// Seed of the data draw for replication `m` (1-based).
pub fn replication_seed(base_seed: u64, m: usize) -> u64 {
    base_seed.wrapping_add(m as u64)
}

/// Partition seed for a replication, decorrelated from its data seed.
fn plan_seed(data_seed: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = data_seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn local_label(kind: EstimatorKind) -> String {
    format!("{kind}_local")
}

/// Runs `m_reps` replications and summarises every requested estimator.
///
/// Replications run on the rayon pool; the report is identical for any pool size.
pub fn run_monte_carlo(config: &SimConfig) -> Result<MonteCarloReport> {
    config.validate()?;
    let engine = EngineConfig {
        solver: SolverConfig::default(),
        failure_policy: config.failure_policy,
        parallel: true,
        ..EngineConfig::default()
    };

    let per_rep: Vec<Vec<ReplicationRecord>> = (1..=config.m_reps)
        .into_par_iter()
        .map(|m| run_replication(config, &engine, m))
        .collect::<Result<_>>()?;
    let records: Vec<ReplicationRecord> = per_rep.into_iter().flatten().collect();

    let mut labels: Vec<String> = config.estimators.iter().map(ToString::to_string).collect();
    if config.include_local {
        labels.extend(
            config
                .estimators
                .iter()
                .filter(|k| **k != EstimatorKind::Gmle)
                .map(|&k| local_label(k)),
        );
    }
    let truth = config.theta_star().to_vec();
    let estimators = labels
        .iter()
        .map(|label| summarise(label, &records, &truth))
        .collect::<Result<_>>()?;

    Ok(MonteCarloReport {
        alpha_star: config.alpha_star(),
        theta_star: config.theta_star(),
        scale: config.scale(),
        simulation: "unconditional: X and Y redrawn every replication".into(),
        config: config.clone(),
        estimators,
        records,
    })
}

fn run_replication(
    config: &SimConfig,
    engine: &EngineConfig,
    m: usize,
) -> Result<Vec<ReplicationRecord>> {
    let seed = replication_seed(config.base_seed, m);
    let data = generate_data(config, seed)?;
    let pseed = plan_seed(seed);
    let mut out = Vec::new();
    for &kind in &config.estimators {
        let label = kind.to_string();
        match fit_estimator(&data, kind, config.k_workers, pseed, engine) {
            Ok(fit) => {
                out.push(record_for(m, seed, label, &fit, &data, config.information_form));
                if config.include_local && kind != EstimatorKind::Gmle {
                    out.push(local_record(m, seed, kind, &fit));
                }
            }
            Err(e) => {
                out.push(ReplicationRecord {
                    rep: m,
                    seed,
                    estimator: label,
                    status: format!("failed: {e}"),
                    theta: None,
                    se: None,
                });
                if config.include_local && kind != EstimatorKind::Gmle {
                    out.push(ReplicationRecord {
                        rep: m,
                        seed,
                        estimator: local_label(kind),
                        status: format!("failed: {e}"),
                        theta: None,
                        se: None,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn record_for(
    m: usize,
    seed: u64,
    label: String,
    fit: &DistributedFit,
    data: &Dataset,
    form: InformationForm,
) -> ReplicationRecord {
    let (status, se) = match covariance_of(fit, data, form) {
        Ok(report) => ("ok".to_string(), Some(report.se)),
        Err(e) => (format!("ok; no covariance: {e}"), None),
    };
    let status = if fit.n_failed > 0 { format!("{status}; {} shards dropped", fit.n_failed) } else { status };
    ReplicationRecord { rep: m, seed, estimator: label, status, theta: Some(fit.theta_hat.to_vec()), se }
}

fn local_record(m: usize, seed: u64, kind: EstimatorKind, fit: &DistributedFit) -> ReplicationRecord {
    let first = &fit.local_results[0];
    let theta = first.converged.then(|| fit.local_estimate(0)).flatten().map(|t| t.to_vec());
    ReplicationRecord {
        rep: m,
        seed,
        estimator: local_label(kind),
        status: if theta.is_some() { "ok".into() } else { format!("failed: {}", first.status) },
        theta,
        se: None,
    }
}

fn summarise(label: &str, records: &[ReplicationRecord], truth: &[f64]) -> Result<EstimatorSummary> {
    let mine: Vec<&ReplicationRecord> = records.iter().filter(|r| r.estimator == label).collect();
    let ok: Vec<&ReplicationRecord> = mine.iter().copied().filter(|r| r.theta.is_some()).collect();
    let n_failed = mine.len() - ok.len();
    if ok.is_empty() {
        return Ok(EstimatorSummary {
            estimator: label.to_string(),
            bias: f64::NAN,
            se: f64::NAN,
            rmse: f64::NAN,
            mean_estimated_se: None,
            coverage: None,
            n_ok: 0,
            n_failed,
        });
    }
    let estimates: Vec<Vec<f64>> = ok.iter().map(|r| r.theta.clone().unwrap_or_default()).collect();
    let acc = accuracy(&estimates, truth)?;

    let with_se: Vec<(&Vec<f64>, &Vec<f64>)> =
        ok.iter().filter_map(|r| Some((r.theta.as_ref()?, r.se.as_ref()?))).collect();
    let mean_estimated_se = (!with_se.is_empty()).then(|| {
        with_se.iter().map(|(_, se)| se.iter().sum::<f64>() / se.len() as f64).sum::<f64>()
            / with_se.len() as f64
    });
    let intervals: Vec<Vec<(f64, f64)>> = with_se
        .iter()
        .map(|(t, se)| t.iter().zip(se.iter()).map(|(t, s)| (t - Z_95 * s, t + Z_95 * s)).collect())
        .collect();

    Ok(EstimatorSummary {
        estimator: label.to_string(),
        bias: acc.bias,
        se: acc.se,
        rmse: acc.rmse,
        mean_estimated_se,
        coverage: coverage(&intervals, truth),
        n_ok: ok.len(),
        n_failed,
    })
}

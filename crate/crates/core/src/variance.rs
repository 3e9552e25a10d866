//! Plug-in asymptotic covariance for the global and distributed estimators.
//!
//! Write `eᵢ = exp(xᵢᵀβ)` and `γ = K·e^α`. In the rare-events limit the
//! covariance of every estimator is `(N e^α)⁻¹` times one of
//!
//! ```text
//! Σ*            = E{ e ZZᵀ }                          GMLE, RMLE (leading term), IPW
//! Σ₂⁻¹ Σ₁ Σ₂⁻¹  with Σⱼ = E{ (1 + γe)⁻ʲ e ZZᵀ }     US
//! ```
//!
//! [`moment_matrices`] computes those sample moments verbatim
//! ([`InformationForm::RareEventsLimit`]). At desk-scale sample sizes the
//! event probabilities are not small enough for `e^α·eᵢ ≈ pᵢ(1 − pᵢ)` to
//! hold, and the limit form overstates the information. The default
//! [`InformationForm::FiniteSample`] replaces the pieces by their exact
//! finite-sample counterparts,
//!
//! ```text
//! e^α eᵢ          →  pᵢ(1 − pᵢ)
//! (1 + γeᵢ)⁻¹     →  aᵢ = 1 − uᵢ(1 − 1/K),   uᵢ = σ(α + log K + xᵢᵀβ)
//! ```
//!
//! which is the observed information for GMLE/RMLE/IPW and the Godambe
//! sandwich of the averaged under-sampled score for US. Both forms share the
//! same limit and the same matrix ordering `Σ₂⁻¹Σ₁Σ₂⁻¹ ⪰ Σ*⁻¹`.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::engine::{Communication, DistributedFit, EstimatorKind};
use crate::error::{Error, Result};
use crate::model::{sigmoid, Dataset, Theta};
use crate::solver::FitResult;

/// RMLE reports whose `K/√(N e^α̂)` exceeds this are flagged as bias-dominated.
pub const RMLE_BIAS_RATIO_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InformationForm {
    #[default]
    FiniteSample,
    RareEventsLimit,
}

impl std::str::FromStr for InformationForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "finite" | "finite_sample" => Ok(InformationForm::FiniteSample),
            "limit" | "rare_events_limit" => Ok(InformationForm::RareEventsLimit),
            other => Err(Error::InvalidArgument(format!("unknown information form '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub kind: EstimatorKind,
    pub k: usize,
    pub information_form: InformationForm,
    #[serde(with = "matrix_rows")]
    pub sigma_star_hat: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub sigma1_hat: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub sigma2_hat: DMatrix<f64>,
    pub gamma_hat: f64,
    /// Estimated covariance of the estimator itself.
    #[serde(with = "matrix_rows")]
    pub cov_hat: DMatrix<f64>,
    pub se: Vec<f64>,
    /// `N e^α̂`, the effective sample size.
    pub scale: f64,
    /// `K/√(N e^α̂)` for RMLE.
    pub rmle_bias_ratio: Option<f64>,
    pub rmle_bias_warning: bool,
    /// Traffic of the moment-aggregation round.
    pub communication: Communication,
}

impl CovarianceReport {
    /// Two-sided Wald interval per coordinate at normal quantile `z`.
    pub fn wald_intervals(&self, theta_hat: &Theta, z: f64) -> Vec<(f64, f64)> {
        theta_hat.to_vec().iter().zip(&self.se).map(|(t, s)| (t - z * s, t + z * s)).collect()
    }
}

/// `γ̂ = k·e^α̂`.
pub fn estimate_gamma(k: usize, alpha_hat: f64) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if !alpha_hat.is_finite() {
        return Err(Error::NonFinite("alpha_hat".into()));
    }
    Ok(k as f64 * alpha_hat.exp())
}

/// Sample moments `Σ̂ⱼ = N⁻¹ Σᵢ (1 + γeᵢ)⁻ʲ eᵢ zᵢzᵢᵀ`, returned as `(Σ̂₁, Σ̂₂)`.
///
/// Only the slopes of `theta_hat` enter.
pub fn moment_matrices(
    data: &Dataset,
    theta_hat: &Theta,
    gamma: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_theta(data, theta_hat)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    let m = Moments::accumulate(data, &rows, theta_hat, Weighting::Limit { gamma });
    let n = data.n_rows() as f64;
    Ok((m.second / n, m.first / n))
}

/// `Σ₂⁻¹ Σ₁ Σ₂⁻¹`.
///
/// When `Σ₁` and `Σ₂` are bitwise equal this is `Σ₂⁻¹` exactly.
pub fn sandwich(sigma1: &DMatrix<f64>, sigma2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv2 = spd_inverse(sigma2)?;
    if sigma1 == sigma2 {
        return Ok(inv2);
    }
    Ok(symmetrize(&inv2 * sigma1 * &inv2))
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = Cholesky::<f64, Dyn>::new(m.clone())
        .ok_or_else(|| Error::Singular(format!("{}x{} moment matrix", m.nrows(), m.ncols())))?;
    Ok(symmetrize(chol.inverse()))
}

/// Covariance of a distributed (or wrapped global) fit.
///
/// Moment sums are formed per worker over the rows it owns and added up in
/// worker order, so no node ever needs the full data.
pub fn covariance_of(
    fit: &DistributedFit,
    data: &Dataset,
    form: InformationForm,
) -> Result<CovarianceReport> {
    if !fit.converged() {
        return Err(Error::Precondition(format!(
            "{} fit has {} non-converged shards",
            fit.kind, fit.n_failed
        )));
    }
    check_theta(data, &fit.theta_hat)?;
    let owned = fit.plan.owned_rows(data);
    build_report(fit.kind, fit.k, &fit.theta_hat, data, &owned, form)
}

/// Covariance of a single-machine fit, treated as GMLE.
pub fn covariance_of_global(
    fit: &FitResult,
    data: &Dataset,
    form: InformationForm,
) -> Result<CovarianceReport> {
    if !fit.converged {
        return Err(Error::Precondition(format!("fit status is {}", fit.status)));
    }
    check_theta(data, &fit.theta_hat)?;
    let rows = vec![(0..data.n_rows()).collect()];
    build_report(EstimatorKind::Gmle, 1, &fit.theta_hat, data, &rows, form)
}

fn build_report(
    kind: EstimatorKind,
    k: usize,
    theta_hat: &Theta,
    data: &Dataset,
    owned: &[Vec<usize>],
    form: InformationForm,
) -> Result<CovarianceReport> {
    let d = data.dim();
    let n = data.n_rows() as f64;
    let gamma_hat = estimate_gamma(k, theta_hat.alpha)?;
    let scale = n * theta_hat.alpha.exp();

    let weighting = match form {
        InformationForm::RareEventsLimit => Weighting::Limit { gamma: gamma_hat },
        InformationForm::FiniteSample => Weighting::Finite { k: k as f64 },
    };
    let mut total = Moments::zeros(d);
    for rows in owned {
        total.add(&Moments::accumulate(data, rows, theta_hat, weighting));
    }
    // Both forms are normalised so that cov = scale⁻¹ · (moment algebra).
    let norm = match form {
        InformationForm::RareEventsLimit => n,
        InformationForm::FiniteSample => scale,
    };
    let sigma_star_hat = total.base / norm;
    let sigma2_hat = total.first / norm;
    let sigma1_hat = total.second / norm;

    let core = if kind == EstimatorKind::Us {
        sandwich(&sigma1_hat, &sigma2_hat)?
    } else {
        spd_inverse(&sigma_star_hat)?
    };
    let cov_hat = core / scale;
    let se = cov_hat.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();

    let rmle_bias_ratio = (kind == EstimatorKind::Rmle).then(|| k as f64 / scale.sqrt());
    Ok(CovarianceReport {
        kind,
        k,
        information_form: form,
        sigma_star_hat,
        sigma1_hat,
        sigma2_hat,
        gamma_hat,
        cov_hat,
        se,
        scale,
        rmle_bias_ratio,
        rmle_bias_warning: rmle_bias_ratio.is_some_and(|r| r > RMLE_BIAS_RATIO_LIMIT),
        communication: Communication {
            rounds: 1,
            messages: owned.len(),
            floats: owned.len() * 3 * d * (d + 1) / 2,
        },
    })
}

#[derive(Debug, Clone, Copy)]
enum Weighting {
    /// base `eᵢ`, `aᵢ = (1 + γeᵢ)⁻¹`
    Limit { gamma: f64 },
    /// base `pᵢ(1 − pᵢ)`, `aᵢ = 1 − uᵢ(1 − 1/K)`
    Finite { k: f64 },
}

/// `Σ baseᵢ aᵢʲ zᵢzᵢᵀ` for j = 0, 1, 2.
struct Moments {
    base: DMatrix<f64>,
    first: DMatrix<f64>,
    second: DMatrix<f64>,
}

impl Moments {
    fn zeros(d: usize) -> Self {
        Self { base: DMatrix::zeros(d, d), first: DMatrix::zeros(d, d), second: DMatrix::zeros(d, d) }
    }

    fn add(&mut self, other: &Moments) {
        self.base += &other.base;
        self.first += &other.first;
        self.second += &other.second;
    }

    fn accumulate(data: &Dataset, rows: &[usize], theta: &Theta, weighting: Weighting) -> Self {
        let d = data.dim();
        let packed = d * (d + 1) / 2;
        let mut acc = [vec![0.0; packed], vec![0.0; packed], vec![0.0; packed]];
        let mut z = vec![1.0; d];
        let log_gamma_or_k = match weighting {
            Weighting::Limit { gamma } => gamma.ln(),
            Weighting::Finite { k } => k.ln(),
        };

        for &i in rows {
            let x = data.row(i);
            z[1..].copy_from_slice(x);
            let eta = theta.slope_predictor(x);
            let (base, a) = match weighting {
                Weighting::Limit { gamma } => {
                    // (1 + γe)⁻¹ = σ(−(log γ + xᵀβ)); γ = 0 gives exactly 1
                    let a = if gamma == 0.0 { 1.0 } else { sigmoid(-(log_gamma_or_k + eta)) };
                    (eta.exp(), a)
                }
                Weighting::Finite { k } => {
                    let s = theta.alpha + eta;
                    let u = sigmoid(s + log_gamma_or_k);
                    (sigmoid(s) * sigmoid(-s), 1.0 - u * (1.0 - 1.0 / k))
                }
            };
            let w = [base, base * a, base * a * a];
            let mut idx = 0;
            for r in 0..d {
                for c in r..d {
                    let zz = z[r] * z[c];
                    for j in 0..3 {
                        acc[j][idx] += w[j] * zz;
                    }
                    idx += 1;
                }
            }
        }
        let [b, f, s] = acc;
        Self { base: unpack(&b, d), first: unpack(&f, d), second: unpack(&s, d) }
    }
}

fn unpack(packed: &[f64], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    let mut idx = 0;
    for r in 0..d {
        for c in r..d {
            m[(r, c)] = packed[idx];
            m[(c, r)] = packed[idx];
            idx += 1;
        }
    }
    m
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn check_theta(data: &Dataset, theta: &Theta) -> Result<()> {
    if theta.beta.len() != data.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} slopes but data has {} columns",
            theta.beta.len(),
            data.n_features()
        )));
    }
    if !theta.is_finite() {
        return Err(Error::NonFinite("theta_hat".into()));
    }
    Ok(())
}

/// Serialises a square matrix as a list of rows.
mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> =
            (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(D::Error::custom("matrix rows must form a square"));
        }
        Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
    }
}

//! Weighted maximum likelihood by damped Newton-Raphson.
//!
//! Every estimator in the crate (global, per-shard random, under-sampled,
//! inverse probability weighted) is a call to [`fit`] with a different
//! weight vector.

use std::fmt;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{evaluate_unchecked, log_likelihood_unchecked, Dataset, ObservationWeights, Theta};

/// Iterates whose max-norm exceeds this while the score is still large are
/// taken as evidence that no finite maximiser exists.
pub const SEPARATION_BOUND: f64 = 30.0;

/// Relative slack on the ascent test, absorbing round-off near the optimum.
const ASCENT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Convergence threshold on the max-norm of the score.
    pub grad_tol: f64,
    pub step_halving_max: usize,
    /// Diagonal load added to the negative Hessian when its Cholesky
    /// factorisation fails, scaled by the largest diagonal entry.
    pub ridge_jitter: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iters: 100, grad_tol: 1e-8, step_halving_max: 30, ridge_jitter: 1e-10 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.step_halving_max == 0 {
            return Err(Error::InvalidArgument(
                "max_iters and step_halving_max must be positive".into(),
            ));
        }
        if !(self.grad_tol > 0.0 && self.grad_tol < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "grad_tol must lie in (0, 1), got {}",
                self.grad_tol
            )));
        }
        if !(self.ridge_jitter > 0.0 && self.ridge_jitter.is_finite()) {
            return Err(Error::InvalidArgument("ridge_jitter must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIters,
    Separation,
    SingularHessian,
}

impl fmt::Display for FitStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitStatus::Converged => "converged",
            FitStatus::MaxIters => "max_iters",
            FitStatus::Separation => "complete separation",
            FitStatus::SingularHessian => "singular hessian",
        })
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: Theta,
    pub converged: bool,
    pub iterations: usize,
    pub final_grad_norm: f64,
    /// Observed information `−∇²L_w(θ̂)`.
    pub neg_hessian_at_opt: DMatrix<f64>,
    pub log_likelihood: f64,
    pub status: FitStatus,
}

/// Closed-form intercept-only start: `α₀ = log(Σwᵢyᵢ / Σwᵢ(1 − yᵢ))`, `β₀ = 0`.
pub fn initial_theta(data: &Dataset, w: &ObservationWeights) -> Result<Theta> {
    check_weights(data, w)?;
    let (pos, neg) = weighted_class_totals(data, w.as_slice());
    if !(pos > 0.0 && neg > 0.0) {
        return Err(Error::Precondition(format!(
            "need positive weighted mass in both classes (positives {pos}, negatives {neg})"
        )));
    }
    Ok(Theta::new((pos / neg).ln(), vec![0.0; data.n_features()]))
}

/// Maximises the weighted log-likelihood from `theta0`.
///
/// Statistical failures (separation, singular information, iteration budget)
/// come back as a [`FitResult`] with the matching status; only malformed
/// inputs are errors.
pub fn fit(
    data: &Dataset,
    w: &ObservationWeights,
    config: &SolverConfig,
    theta0: &Theta,
) -> Result<FitResult> {
    config.validate()?;
    check_weights(data, w)?;
    if theta0.beta.len() != data.n_features() {
        return Err(Error::DimensionMismatch(format!(
            "theta0 has {} slopes but data has {} columns",
            theta0.beta.len(),
            data.n_features()
        )));
    }
    if !theta0.is_finite() {
        return Err(Error::NonFinite("theta0".into()));
    }
    let w = w.as_slice();

    let mut theta = theta0.clone();
    let mut eval = evaluate_unchecked(&theta, data, w);

    let (pos, neg) = weighted_class_totals(data, w);
    if !(pos > 0.0 && neg > 0.0) {
        return Ok(finish(theta, eval, 0, FitStatus::Separation));
    }

    let mut iterations = 0;
    let status = loop {
        if max_norm(&eval.gradient) <= config.grad_tol {
            break FitStatus::Converged;
        }
        if theta.max_abs() > SEPARATION_BOUND {
            break FitStatus::Separation;
        }
        if iterations == config.max_iters {
            break FitStatus::MaxIters;
        }

        let Some(direction) = newton_direction(&eval.hessian, &eval.gradient, config.ridge_jitter)
        else {
            break FitStatus::SingularHessian;
        };

        let floor = eval.log_likelihood - ASCENT_SLACK * eval.log_likelihood.abs().max(1.0);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=config.step_halving_max {
            let candidate = advance(&theta, &direction, step);
            let ll = log_likelihood_unchecked(&candidate, data, w);
            if ll.is_finite() && ll >= floor {
                accepted = Some(candidate);
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some(next) => {
                theta = next;
                eval = evaluate_unchecked(&theta, data, w);
            }
            // No ascent along the Newton direction at any step length.
            None => break FitStatus::MaxIters,
        }
    };

    Ok(finish(theta, eval, iterations, status))
}

/// [`fit`] started from [`initial_theta`], or from zero when a class has no
/// weighted mass (the fit then reports separation immediately).
pub fn fit_warm(data: &Dataset, w: &ObservationWeights, config: &SolverConfig) -> Result<FitResult> {
    let start = initial_theta(data, w).unwrap_or_else(|_| Theta::zeros(data.n_features()));
    fit(data, w, config, &start)
}

fn finish(
    theta: Theta,
    eval: crate::model::Evaluation,
    iterations: usize,
    status: FitStatus,
) -> FitResult {
    FitResult {
        converged: status == FitStatus::Converged,
        final_grad_norm: max_norm(&eval.gradient),
        neg_hessian_at_opt: -eval.hessian,
        log_likelihood: eval.log_likelihood,
        theta_hat: theta,
        iterations,
        status,
    }
}

/// Solves `(−H) δ = g`, retrying once with a diagonal load.
fn newton_direction(
    hessian: &DMatrix<f64>,
    gradient: &DVector<f64>,
    jitter: f64,
) -> Option<DVector<f64>> {
    let info = -hessian;
    if let Some(chol) = Cholesky::<f64, Dyn>::new(info.clone()) {
        return Some(chol.solve(gradient));
    }
    let scale = info.diagonal().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let mut loaded = info;
    for i in 0..loaded.nrows() {
        loaded[(i, i)] += jitter * scale;
    }
    Cholesky::<f64, Dyn>::new(loaded).map(|chol| chol.solve(gradient))
}

fn advance(theta: &Theta, direction: &DVector<f64>, step: f64) -> Theta {
    Theta {
        alpha: theta.alpha + step * direction[0],
        beta: theta.beta.iter().zip(direction.iter().skip(1)).map(|(b, d)| b + step * d).collect(),
    }
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m: f64, x| m.max(x.abs()))
}

fn weighted_class_totals(data: &Dataset, w: &[f64]) -> (f64, f64) {
    data.labels().iter().zip(w).fold((0.0, 0.0), |(pos, neg), (&y, &wi)| {
        if y == 1 {
            (pos + wi, neg)
        } else {
            (pos, neg + wi)
        }
    })
}

fn check_weights(data: &Dataset, w: &ObservationWeights) -> Result<()> {
    if w.len() != data.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} rows",
            w.len(),
            data.n_rows()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::log_likelihood;

    fn small() -> Dataset {
        let x = [-1.3, 0.4, 2.1, -0.2, 0.9, -2.2, 1.5, 0.1, -0.6, 1.1, 0.3, -1.0];
        let y = vec![0, 1, 1, 0, 0, 0, 1, 1, 0, 1, 0, 0];
        Dataset::new(x.to_vec(), 1, y).unwrap()
    }

    #[test]
    fn all_positive_is_separation() {
        let d = Dataset::new(vec![0.1, 0.2, 0.3], 1, vec![1, 1, 1]).unwrap();
        let r = fit_warm(&d, &ObservationWeights::ones(3), &SolverConfig::default()).unwrap();
        assert_eq!(r.status, FitStatus::Separation);
        assert!(!r.converged);
    }

    #[test]
    fn zero_weight_on_one_class_is_separation() {
        let d = small();
        let w = ObservationWeights::by_class(&d, 1.0, 0.0).unwrap();
        let r = fit_warm(&d, &w, &SolverConfig::default()).unwrap();
        assert_eq!(r.status, FitStatus::Separation);
    }

    #[test]
    fn perfectly_separable_data_is_detected() {
        let d = Dataset::new(vec![-2.0, -1.0, -0.5, 0.5, 1.0, 2.0], 1, vec![0, 0, 0, 1, 1, 1])
            .unwrap();
        let r = fit_warm(&d, &ObservationWeights::ones(6), &SolverConfig::default()).unwrap();
        assert_eq!(r.status, FitStatus::Separation);
    }

    #[test]
    fn intercept_only_mle_is_log_odds() {
        let y = vec![1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0];
        let d = Dataset::new(vec![], 0, y).unwrap();
        let r = fit(&d, &ObservationWeights::ones(11), &SolverConfig::default(), &Theta::zeros(0))
            .unwrap();
        assert_eq!(r.status, FitStatus::Converged);
        assert!((r.theta_hat.alpha - (3.0f64 / 8.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn initial_theta_values() {
        let d = small();
        let w = ObservationWeights::ones(d.n_rows());
        let t = initial_theta(&d, &w).unwrap();
        assert!((t.alpha - (5.0f64 / 7.0).ln()).abs() < 1e-15);

        let eq = ObservationWeights::by_class(&d, 7.0, 5.0).unwrap();
        let t = initial_theta(&d, &eq).unwrap();
        assert_eq!(t.alpha, 0.0);
        assert_eq!(t.beta, vec![0.0]);

        // 10 vs 1000 weighted counts
        let d = Dataset::new(vec![], 0, vec![1, 0]).unwrap();
        let w = ObservationWeights::new(vec![10.0, 1000.0]).unwrap();
        assert!((initial_theta(&d, &w).unwrap().alpha - 0.01f64.ln()).abs() < 1e-15);
        assert!((0.01f64.ln() + 4.605_17).abs() < 1e-5);

        let w = ObservationWeights::by_class(&small(), 1.0, 0.0).unwrap();
        assert!(initial_theta(&small(), &w).is_err());
    }

    #[test]
    fn ipw_start_is_us_start_shifted_by_log_k() {
        let d = small();
        let k = 6.0;
        let us = initial_theta(&d, &ObservationWeights::by_class(&d, 1.0, 1.0).unwrap()).unwrap();
        let ipw = initial_theta(&d, &ObservationWeights::by_class(&d, 1.0, k).unwrap()).unwrap();
        assert!((us.alpha - ipw.alpha - k.ln()).abs() < 1e-14);
    }

    #[test]
    fn converged_fit_is_stationary_and_improves_on_start() {
        let d = small();
        let w = ObservationWeights::ones(d.n_rows());
        let cfg = SolverConfig::default();
        let start = initial_theta(&d, &w).unwrap();
        let r = fit(&d, &w, &cfg, &start).unwrap();
        assert_eq!(r.status, FitStatus::Converged);
        assert!(r.final_grad_norm <= cfg.grad_tol);
        let ll0 = log_likelihood(&start, &d, &w).unwrap();
        assert!(r.log_likelihood >= ll0);
        let h = &r.neg_hessian_at_opt;
        assert_eq!(h, &h.transpose());
        assert!(h.clone().symmetric_eigen().eigenvalues.iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn max_iters_is_flagged_with_estimate() {
        let d = small();
        let w = ObservationWeights::ones(d.n_rows());
        let cfg = SolverConfig { max_iters: 1, ..SolverConfig::default() };
        let r = fit(&d, &w, &cfg, &Theta::new(3.0, vec![-3.0])).unwrap();
        assert_eq!(r.status, FitStatus::MaxIters);
        assert_eq!(r.iterations, 1);
        assert!(r.theta_hat.is_finite());
    }

    #[test]
    fn rejects_bad_config_and_dims() {
        let d = small();
        let w = ObservationWeights::ones(d.n_rows());
        let bad = SolverConfig { grad_tol: 2.0, ..SolverConfig::default() };
        assert!(fit(&d, &w, &bad, &Theta::zeros(1)).is_err());
        assert!(fit(&d, &w, &SolverConfig::default(), &Theta::zeros(2)).is_err());
        assert!(fit(&d, &ObservationWeights::ones(3), &SolverConfig::default(), &Theta::zeros(1))
            .is_err());
    }

    #[test]
    fn collinear_columns_report_singular_hessian() {
        let x: Vec<f64> = (0..10).flat_map(|i| [f64::from(i) * 0.1, f64::from(i) * 0.2]).collect();
        let y = vec![0, 1, 0, 0, 1, 1, 0, 1, 1, 0];
        let d = Dataset::new(x, 2, y).unwrap();
        let cfg = SolverConfig { ridge_jitter: 1e-300, ..SolverConfig::default() };
        let r = fit_warm(&d, &ObservationWeights::ones(10), &cfg).unwrap();
        assert_eq!(r.status, FitStatus::SingularHessian);
    }
}

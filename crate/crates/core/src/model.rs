//! Logistic model primitives shared by every estimator.
//!
//! Every estimator in this crate maximises a *weighted* log-likelihood
//!
//! ```text
//! L_w(θ) = Σᵢ wᵢ { yᵢ log pᵢ(θ) + (1 − yᵢ) log(1 − pᵢ(θ)) },   pᵢ(θ) = σ(α + xᵢᵀβ)
//! ```
//!
//! The global likelihood, the under-sampled objective, the inverse probability
//! weighted objective and every per-shard objective differ only in `w`.
//! Parameter vectors always carry the intercept at index 0, so gradients and
//! Hessians are indexed over the augmented row `zᵢ = (1, xᵢᵀ)ᵀ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense covariates (row-major) plus binary responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<u8>,
    n_features: usize,
}

impl Dataset {
    /// Builds a dataset from a row-major covariate buffer.
    ///
    /// `n_features` may be zero, which gives an intercept-only design.
    pub fn new(x: Vec<f64>, n_features: usize, y: Vec<u8>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidArgument("dataset needs at least one row".into()));
        }
        if x.len() != y.len() * n_features {
            return Err(Error::DimensionMismatch(format!(
                "covariate buffer has {} values, expected {} rows x {} columns",
                x.len(),
                y.len(),
                n_features
            )));
        }
        if let Some((row, &value)) = y.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::NonBinaryResponse { row, value: f64::from(value) });
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            let (row, col) = (pos / n_features, pos % n_features);
            return Err(Error::NonFinite(format!("covariate at row {row}, column {col}")));
        }
        Ok(Self { x, y, n_features })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<u8>) -> Result<Self> {
        let n_features = rows.first().map_or(0, Vec::len);
        if rows.len() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} covariate rows but {} responses",
                rows.len(),
                y.len()
            )));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != n_features) {
            return Err(Error::DimensionMismatch(format!(
                "row {bad} has {} columns, expected {n_features}",
                rows[bad].len()
            )));
        }
        Self::new(rows.concat(), n_features, y)
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Length of θ for this design: intercept plus one slope per column.
    pub fn dim(&self) -> usize {
        self.n_features + 1
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    #[inline]
    pub fn label(&self, i: usize) -> u8 {
        self.y[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|&&v| v == 1).count()
    }

    pub fn n_negative(&self) -> usize {
        self.n_rows() - self.n_positive()
    }

    pub fn positive_indices(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.y[i] == 1).collect()
    }

    pub fn negative_indices(&self) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.y[i] == 0).collect()
    }

    /// Copies the given rows, in the given order, into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_rows()) {
            return Err(Error::InvalidArgument(format!(
                "row index {bad} out of range for {} rows",
                self.n_rows()
            )));
        }
        let mut x = Vec::with_capacity(indices.len() * self.n_features);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Self::new(x, self.n_features, y)
    }
}

/// Parameter vector θ = (α, βᵀ)ᵀ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct Theta {
    pub alpha: f64,
    pub beta: Vec<f64>,
}

impl Theta {
    pub fn new(alpha: f64, beta: Vec<f64>) -> Self {
        Self { alpha, beta }
    }

    pub fn zeros(n_features: usize) -> Self {
        Self { alpha: 0.0, beta: vec![0.0; n_features] }
    }

    /// Interprets `v[0]` as the intercept and the rest as slopes.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        match v.split_first() {
            Some((&alpha, beta)) => Ok(Self { alpha, beta: beta.to_vec() }),
            None => Err(Error::InvalidArgument("theta needs at least an intercept".into())),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.alpha);
        v.extend_from_slice(&self.beta);
        v
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_vec(self.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.beta.len() + 1
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.is_finite() && self.beta.iter().all(|b| b.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.beta.iter().fold(self.alpha.abs(), |m, b| m.max(b.abs()))
    }

    /// α + xᵀβ, without dimension checks.
    #[inline]
    pub fn linear_predictor(&self, x_row: &[f64]) -> f64 {
        self.alpha + x_row.iter().zip(&self.beta).map(|(x, b)| x * b).sum::<f64>()
    }

    /// xᵀβ alone.
    #[inline]
    pub fn slope_predictor(&self, x_row: &[f64]) -> f64 {
        x_row.iter().zip(&self.beta).map(|(x, b)| x * b).sum()
    }

    fn check_against(&self, data: &Dataset) -> Result<()> {
        if self.beta.len() != data.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "theta has {} slopes but data has {} columns",
                self.beta.len(),
                data.n_features()
            )));
        }
        if !self.is_finite() {
            return Err(Error::NonFinite("theta has a non-finite entry".into()));
        }
        Ok(())
    }
}

impl From<Theta> for Vec<f64> {
    fn from(t: Theta) -> Self {
        t.to_vec()
    }
}

impl TryFrom<Vec<f64>> for Theta {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Theta::from_slice(&v)
    }
}

/// Per-observation multipliers on log-likelihood terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWeights(Vec<f64>);

impl ObservationWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(i) = w.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weight {i} is {}, weights must be finite and non-negative",
                w[i]
            )));
        }
        Ok(Self(w))
    }

    /// All-ones weights: the unweighted likelihood.
    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    /// Weight `positive` on every y = 1 row and `negative` on every y = 0 row.
    pub fn by_class(data: &Dataset, positive: f64, negative: f64) -> Result<Self> {
        Self::new(
            data.labels().iter().map(|&y| if y == 1 { positive } else { negative }).collect(),
        )
    }

    /// Positives weighted 1, the `selected` negatives weighted `negative_weight`,
    /// every other negative weighted 0.
    ///
    /// `negative_weight = 1` gives the under-sampled objective, `1/π` (or `K`
    /// for a K-way split) the inverse probability weighted one.
    pub fn subsampled(data: &Dataset, selected: &[usize], negative_weight: f64) -> Result<Self> {
        let mut w: Vec<f64> =
            data.labels().iter().map(|&y| if y == 1 { 1.0 } else { 0.0 }).collect();
        for &i in selected {
            if i >= w.len() {
                return Err(Error::InvalidArgument(format!("selected index {i} out of range")));
            }
            if data.label(i) == 0 {
                w[i] = negative_weight;
            }
        }
        Self::new(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Multiplies every weight by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|w| w * c).collect())
    }

    fn check_against(&self, data: &Dataset) -> Result<()> {
        if self.len() != data.n_rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} rows",
                self.len(),
                data.n_rows()
            )));
        }
        Ok(())
    }
}

/// `log(1 + eᵗ)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Logistic function `eˢ / (1 + eˢ)`, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `P(Y = 1 | x)` under θ.
///
/// The result lies strictly inside (0, 1): saturated predictors are clamped to
/// the smallest positive normal double and to the largest double below one.
pub fn predict_prob(theta: &Theta, x_row: &[f64]) -> Result<f64> {
    if x_row.len() != theta.beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "row has {} entries, theta has {} slopes",
            x_row.len(),
            theta.beta.len()
        )));
    }
    let s = theta.linear_predictor(x_row);
    if !s.is_finite() {
        return Err(Error::NonFinite("linear predictor".into()));
    }
    Ok(sigmoid(s).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// Weighted log-likelihood.
pub fn log_likelihood(theta: &Theta, data: &Dataset, w: &ObservationWeights) -> Result<f64> {
    theta.check_against(data)?;
    w.check_against(data)?;
    Ok(log_likelihood_unchecked(theta, data, w.as_slice()))
}

pub(crate) fn log_likelihood_unchecked(theta: &Theta, data: &Dataset, w: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        let s = theta.linear_predictor(data.row(i));
        // y log σ(s) + (1 − y) log(1 − σ(s)) = y·s − log(1 + eˢ)
        ll += wi * (f64::from(data.label(i)) * s - softplus(s));
    }
    ll
}

/// Score `Σ wᵢ (yᵢ − pᵢ) zᵢ`.
pub fn gradient(theta: &Theta, data: &Dataset, w: &ObservationWeights) -> Result<DVector<f64>> {
    Ok(evaluate(theta, data, w)?.gradient)
}

/// `−Σ wᵢ pᵢ(1 − pᵢ) zᵢzᵢᵀ`.
pub fn hessian(theta: &Theta, data: &Dataset, w: &ObservationWeights) -> Result<DMatrix<f64>> {
    Ok(evaluate(theta, data, w)?.hessian)
}

/// Log-likelihood, score and Hessian from a single pass over the rows.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub log_likelihood: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

pub fn evaluate(theta: &Theta, data: &Dataset, w: &ObservationWeights) -> Result<Evaluation> {
    theta.check_against(data)?;
    w.check_against(data)?;
    Ok(evaluate_unchecked(theta, data, w.as_slice()))
}

pub(crate) fn evaluate_unchecked(theta: &Theta, data: &Dataset, w: &[f64]) -> Evaluation {
    let d = data.dim();
    let mut ll = 0.0;
    let mut grad = vec![0.0; d];
    // upper triangle of Σ wᵢ pᵢ(1 − pᵢ) zᵢzᵢᵀ, row-major packed
    let mut info = vec![0.0; d * (d + 1) / 2];
    let mut z = vec![1.0; d];

    for (i, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        let x = data.row(i);
        z[1..].copy_from_slice(x);
        let s = theta.linear_predictor(x);
        let y = f64::from(data.label(i));
        let p = sigmoid(s);
        let q = sigmoid(-s);

        ll += wi * (y * s - softplus(s));
        let r = wi * (y - p);
        let c = wi * p * q;
        let mut k = 0;
        for a in 0..d {
            grad[a] += r * z[a];
            let cza = c * z[a];
            for &zb in &z[a..d] {
                info[k] += cza * zb;
                k += 1;
            }
        }
    }

    let mut hessian = DMatrix::zeros(d, d);
    let mut k = 0;
    for a in 0..d {
        for b in a..d {
            hessian[(a, b)] = -info[k];
            hessian[(b, a)] = -info[k];
            k += 1;
        }
    }
    Evaluation { log_likelihood: ll, gradient: DVector::from_vec(grad), hessian }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::from_rows(
            &[vec![0.5], vec![-1.2], vec![2.0], vec![0.1], vec![-0.7]],
            vec![1, 0, 1, 0, 0],
        )
        .unwrap()
    }

    #[test]
    fn prob_at_zero_is_half() {
        let t = Theta::zeros(3);
        assert_eq!(predict_prob(&t, &[1.0, -2.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn prob_at_rare_events_intercept() {
        // σ(−4.1447) to 12 digits, computed with 50-digit arithmetic
        let t = Theta::new(-4.1447, vec![0.0, 0.0]);
        let p = predict_prob(&t, &[0.3, 9.0]).unwrap();
        assert!((p - 0.015_600_942_991_185_176).abs() < 1e-15, "{p}");
    }

    #[test]
    fn prob_saturates_without_nan() {
        let t = Theta::new(-1000.0, vec![]);
        let p = predict_prob(&t, &[]).unwrap();
        assert!(p > 0.0 && p <= 1e-300);
        let t = Theta::new(700.0, vec![]);
        let p = predict_prob(&t, &[]).unwrap();
        assert!(p < 1.0 && p > 0.5);
    }

    #[test]
    fn prob_rejects_non_finite_and_bad_lengths() {
        let t = Theta::new(f64::INFINITY, vec![1.0]);
        assert!(matches!(predict_prob(&t, &[0.0]), Err(Error::NonFinite(_))));
        let t = Theta::zeros(2);
        assert!(matches!(predict_prob(&t, &[0.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn loglik_at_zero_is_minus_n_log2() {
        let d = toy();
        let ll = log_likelihood(&Theta::zeros(1), &d, &ObservationWeights::ones(5)).unwrap();
        assert!((ll + 5.0 * std::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn loglik_matches_high_precision_reference() {
        // Σ log-terms at θ = (0.3, 0.7), summed with 50-digit arithmetic
        let d = toy();
        let ll = log_likelihood(&Theta::new(0.3, vec![0.7]), &d, &ObservationWeights::ones(5))
            .unwrap();
        let reference = -2.544_819_960_389_123;
        assert!(((ll - reference) / reference).abs() < 1e-14, "{ll}");
    }

    #[test]
    fn zero_weights_give_zero_everything() {
        let d = toy();
        let w = ObservationWeights::new(vec![0.0; 5]).unwrap();
        let e = evaluate(&Theta::new(0.4, vec![-0.3]), &d, &w).unwrap();
        assert_eq!(e.log_likelihood, 0.0);
        assert!(e.gradient.iter().all(|&g| g == 0.0));
        assert!(e.hessian.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn symmetric_pair_gradient() {
        let d = Dataset::from_rows(&[vec![1.0], vec![-1.0]], vec![1, 0]).unwrap();
        let g = gradient(&Theta::zeros(1), &d, &ObservationWeights::ones(2)).unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], 1.0);
    }

    #[test]
    fn single_row_hessian() {
        let d = Dataset::from_rows(&[vec![0.0]], vec![1]).unwrap();
        let h = hessian(&Theta::zeros(1), &d, &ObservationWeights::ones(1)).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[-0.25, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn dataset_validation() {
        assert!(matches!(
            Dataset::new(vec![1.0, 2.0], 1, vec![0, 2]),
            Err(Error::NonBinaryResponse { row: 1, .. })
        ));
        assert!(matches!(Dataset::new(vec![f64::NAN], 1, vec![0]), Err(Error::NonFinite(_))));
        assert!(matches!(Dataset::new(vec![1.0], 2, vec![0]), Err(Error::DimensionMismatch(_))));
        assert!(Dataset::new(vec![], 1, vec![]).is_err());
        let d = toy();
        assert_eq!(d.n_positive() + d.n_negative(), d.n_rows());
        assert_eq!(d.n_positive(), 2);
    }

    #[test]
    fn weights_validation_and_constructions() {
        assert!(ObservationWeights::new(vec![1.0, -0.1]).is_err());
        assert!(ObservationWeights::new(vec![f64::NAN]).is_err());
        let d = toy();
        let us = ObservationWeights::subsampled(&d, &[1, 4], 1.0).unwrap();
        assert_eq!(us.as_slice(), &[1.0, 1.0, 1.0, 0.0, 1.0]);
        let ipw = ObservationWeights::subsampled(&d, &[1, 4], 3.0).unwrap();
        assert_eq!(ipw.as_slice(), &[1.0, 3.0, 1.0, 0.0, 3.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let d = toy();
        assert!(log_likelihood(&Theta::zeros(2), &d, &ObservationWeights::ones(5)).is_err());
        assert!(gradient(&Theta::zeros(1), &d, &ObservationWeights::ones(4)).is_err());
    }

    #[test]
    fn theta_serializes_as_flat_vector() {
        let t = Theta::new(-1.5, vec![0.25, 2.0]);
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, "[-1.5,0.25,2.0]");
        let back: Theta = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<Theta>("[]").is_err());
    }
}

//! Replication summaries, each averaged over the p+1 coordinates:
//!
//! ```text
//! BIAS = mean_j |θ̄ⱼ − θⱼ*|
//! SE   = mean_j { M⁻¹ Σₘ (θ̂ⱼ⁽ᵐ⁾ − θ̄ⱼ)² }^{1/2}
//! RMSE = mean_j { M⁻¹ Σₘ (θ̂ⱼ⁽ᵐ⁾ − θⱼ*)² }^{1/2}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub bias: f64,
    pub se: f64,
    pub rmse: f64,
}

pub fn accuracy(estimates: &[Vec<f64>], truth: &[f64]) -> Result<Accuracy> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no estimates to summarise".into()));
    }
    let d = truth.len();
    if d == 0 || estimates.iter().any(|e| e.len() != d) {
        return Err(Error::DimensionMismatch("estimates and truth differ in length".into()));
    }
    let m = estimates.len() as f64;
    let (mut bias, mut se, mut rmse) = (0.0, 0.0, 0.0);
    for j in 0..d {
        // shifted by the first estimate so identical inputs give an exact mean
        let shift = estimates[0][j];
        let mean = shift + estimates.iter().map(|e| e[j] - shift).sum::<f64>() / m;
        let var = estimates.iter().map(|e| (e[j] - mean).powi(2)).sum::<f64>() / m;
        let mse = estimates.iter().map(|e| (e[j] - truth[j]).powi(2)).sum::<f64>() / m;
        bias += (mean - truth[j]).abs();
        se += var.sqrt();
        rmse += mse.sqrt();
    }
    let d = d as f64;
    Ok(Accuracy { bias: bias / d, se: se / d, rmse: rmse / d })
}

/// Fraction of (replication, coordinate) pairs whose interval holds the truth.
pub fn coverage(intervals: &[Vec<(f64, f64)>], truth: &[f64]) -> Option<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for rep in intervals {
        for ((lo, hi), t) in rep.iter().zip(truth) {
            total += 1;
            hits += usize::from(lo <= t && t <= hi);
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_estimates_have_zero_error() {
        let truth = vec![-4.1, 1.0, 1.0];
        let a = accuracy(&vec![truth.clone(); 7], &truth).unwrap();
        assert_eq!(a, Accuracy { bias: 0.0, se: 0.0, rmse: 0.0 });
    }

    #[test]
    fn single_replication_has_zero_se() {
        let a = accuracy(&[vec![1.5, -0.5]], &[1.0, 0.0]).unwrap();
        assert_eq!(a.se, 0.0);
        assert_eq!(a.bias, 0.5);
        assert_eq!(a.rmse, 0.5);
    }

    #[test]
    fn hand_computed() {
        // coordinate 0: {0, 2} around truth 0 -> bias 1, se 1, rmse √2
        // coordinate 1: {1, 1} around truth 0 -> bias 1, se 0, rmse 1
        let a = accuracy(&[vec![0.0, 1.0], vec![2.0, 1.0]], &[0.0, 0.0]).unwrap();
        assert!((a.bias - 1.0).abs() < 1e-15);
        assert!((a.se - 0.5).abs() < 1e-15);
        assert!((a.rmse - (2f64.sqrt() + 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn coverage_counts_pairs() {
        let iv = vec![vec![(-1.0, 1.0), (2.0, 3.0)], vec![(-0.5, 0.5), (0.0, 0.1)]];
        assert_eq!(coverage(&iv, &[0.0, 0.05]), Some(0.75));
        assert_eq!(coverage(&[], &[0.0]), None);
    }

    #[test]
    fn errors() {
        assert!(accuracy(&[], &[1.0]).is_err());
        assert!(accuracy(&[vec![1.0]], &[1.0, 2.0]).is_err());
    }
}

//! Reference computations that share no code with the library beyond the
//! `Dataset` and `Theta` containers.
#![allow(dead_code)]

use distlogit::{Dataset, Theta};

/// Direct evaluation, no shared code with the library.
pub fn naive_loglik(theta: &Theta, data: &Dataset, w: &[f64]) -> f64 {
    (0..data.n_rows())
        .map(|i| {
            let s = theta.alpha + theta.beta.iter().zip(data.row(i)).map(|(b, x)| b * x).sum::<f64>();
            let p = 1.0 / (1.0 + (-s).exp());
            let y = f64::from(data.label(i));
            w[i] * (y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Maximises a concave objective over `[lo, hi]²` by successively finer
/// grids: resolution 0.1, then 1e-2, 1e-3 and 1e-4 around the incumbent.
pub fn grid_argmax_2d(f: impl Fn(f64, f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let mut best = (lo, lo);
    let mut best_val = f64::NEG_INFINITY;
    let (mut a0, mut a1, mut b0, mut b1) = (lo, hi, lo, hi);
    for step in [0.1, 1e-2, 1e-3, 1e-4] {
        let na = ((a1 - a0) / step).round() as i64;
        let nb = ((b1 - b0) / step).round() as i64;
        for i in 0..=na {
            let a = a0 + i as f64 * step;
            for j in 0..=nb {
                let b = b0 + j as f64 * step;
                let v = f(a, b);
                if v > best_val {
                    best_val = v;
                    best = (a, b);
                }
            }
        }
        let r = 20.0 * step;
        a0 = (best.0 - r).max(lo);
        a1 = (best.0 + r).min(hi);
        b0 = (best.1 - r).max(lo);
        b1 = (best.1 + r).min(hi);
    }
    best
}

/// Unweighted maximum likelihood for one covariate by grid search on `[-5, 5]²`.
pub fn grid_mle_p1(data: &Dataset) -> (f64, f64) {
    assert_eq!(data.n_features(), 1);
    let w = vec![1.0; data.n_rows()];
    grid_argmax_2d(|a, b| naive_loglik(&Theta::new(a, vec![b]), data, &w), -5.0, 5.0)
}

/// `Σ v` with Neumaier compensation.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    }
    s + c
}

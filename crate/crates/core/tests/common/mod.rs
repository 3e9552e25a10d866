#![allow(dead_code)]

mod oracle;

#[allow(unused_imports)]
pub use oracle::*;

use distlogit::{Dataset, Theta};
use proptest::prelude::*;

/// Rows with both classes present, covariates in [-3, 3].
pub fn dataset(n: std::ops::Range<usize>, p: std::ops::Range<usize>) -> impl Strategy<Value = Dataset> {
    (n, p).prop_flat_map(|(n, p)| {
        (
            prop::collection::vec(-3.0..3.0f64, n * p),
            prop::collection::vec(any::<bool>(), n),
            Just(p),
        )
            .prop_map(|(x, mut y, p)| {
                y[0] = true;
                let last = y.len() - 1;
                y[last] = false;
                Dataset::new(x, p, y.into_iter().map(u8::from).collect()).unwrap()
            })
    })
}

/// Rare-events style data: positives with probability ~ `rate`.
pub fn rare_dataset(n: usize, p: usize, seed: u64, intercept: f64) -> Dataset {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let mut s = intercept;
        for _ in 0..p {
            let v: f64 = rng.random_range(-2.0..2.0);
            s += 0.8 * v;
            x.push(v);
        }
        y.push(u8::from(rng.random::<f64>() < 1.0 / (1.0 + (-s).exp())));
    }
    Dataset::new(x, p, y).unwrap()
}

pub fn theta(p: usize) -> impl Strategy<Value = Theta> {
    (-3.0..1.0f64, prop::collection::vec(-1.5..1.5f64, p)).prop_map(|(a, b)| Theta::new(a, b))
}

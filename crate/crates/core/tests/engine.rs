mod common;

use common::{dataset, rare_dataset};
use distlogit::{
    fit_distributed, fit_estimator, fit_global, fit_local, generate_data, one_shot_average,
    partition_copy, EngineConfig, Error, EstimatorKind, FailurePolicy, FitStatus, SimConfig,
    SolverConfig, Theta,
};
use proptest::prelude::*;

fn serial() -> EngineConfig {
    EngineConfig { parallel: false, ..EngineConfig::default() }
}

fn max_diff(a: &Theta, b: &Theta) -> f64 {
    a.to_vec().iter().zip(b.to_vec()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn single_worker_collapses_to_the_global_fit() {
    for seed in 0..20u64 {
        let n = 200 + 37 * seed as usize;
        let data = rare_dataset(n, 1 + seed as usize % 4, seed, -2.5);
        let g = fit_global(&data, &SolverConfig::default()).unwrap();
        assert_eq!(g.status, FitStatus::Converged, "seed {seed}");
        for kind in [EstimatorKind::Ipw, EstimatorKind::Us, EstimatorKind::Rmle] {
            let f = fit_distributed(&data, kind, 1, seed, &EngineConfig::default()).unwrap();
            assert!(max_diff(&f.theta_hat, &g.theta_hat) < 1e-8, "{kind} seed {seed}");
        }
    }
}

#[test]
fn serial_and_parallel_runs_agree_bitwise() {
    let data = generate_data(&SimConfig::new(20_000, 17), 11).unwrap();
    for kind in EstimatorKind::DISTRIBUTED {
        let a = fit_distributed(&data, kind, 17, 5, &serial()).unwrap();
        let b = fit_distributed(&data, kind, 17, 5, &EngineConfig::default()).unwrap();
        assert_eq!(a.theta_hat.to_vec(), b.theta_hat.to_vec());
        assert_eq!(
            serde_json::to_string(&a.document()).unwrap(),
            serde_json::to_string(&b.document()).unwrap()
        );
    }
}

#[test]
fn debias_moves_only_the_intercept() {
    let data = generate_data(&SimConfig::new(10_000, 17), 3).unwrap();
    let f = fit_distributed(&data, EstimatorKind::Us, 17, 9, &EngineConfig::default()).unwrap();
    assert!(f.debias_applied);
    let locals: Vec<Theta> = f.local_results.iter().map(|r| r.theta_hat.clone()).collect();
    let avg = one_shot_average(&locals).unwrap();
    assert_eq!(avg.beta, f.theta_hat.beta);
    assert!((avg.alpha - f.theta_hat.alpha - 17f64.ln()).abs() < 1e-12);
}

#[test]
fn us_local_intercept_exceeds_ipw_by_about_log_k() {
    // one shard of the N = 10⁴, K = 17 setting
    let data = generate_data(&SimConfig::new(10_000, 17), 21).unwrap();
    let plan = partition_copy(&data, 17, 4).unwrap();
    let cfg = SolverConfig::default();
    let log_k = 17f64.ln();
    for j in [0, 8, 16] {
        let us = fit_local(&data, &plan, j, EstimatorKind::Us, &cfg).unwrap();
        let ipw = fit_local(&data, &plan, j, EstimatorKind::Ipw, &cfg).unwrap();
        let gap = us.theta_hat.alpha - ipw.theta_hat.alpha;
        assert!((gap - log_k).abs() < 0.35, "shard {j}: gap {gap}, log K {log_k}");
        for (a, b) in us.theta_hat.beta.iter().zip(&ipw.theta_hat.beta) {
            assert!((a - b).abs() < 0.35);
        }
    }
}

#[test]
fn communication_is_one_vector_per_worker() {
    let data = rare_dataset(2_000, 3, 1, -2.0);
    let f = fit_distributed(&data, EstimatorKind::Ipw, 6, 0, &EngineConfig::default()).unwrap();
    assert_eq!(f.communication.rounds, 1);
    assert_eq!(f.communication.messages, 6);
    assert_eq!(f.communication.floats, 6 * 4);
}

#[test]
fn gmle_goes_through_fit_estimator_only() {
    let data = rare_dataset(500, 2, 1, -1.0);
    assert!(fit_distributed(&data, EstimatorKind::Gmle, 3, 0, &EngineConfig::default()).is_err());
    let f = fit_estimator(&data, EstimatorKind::Gmle, 3, 0, &EngineConfig::default()).unwrap();
    assert_eq!(f.k, 1);
    let g = fit_global(&data, &SolverConfig::default()).unwrap();
    assert_eq!(f.theta_hat, g.theta_hat);
}

#[test]
fn failure_policies() {
    // 40 rows, 2 positives: most RANDOM shards of 10 have no positive at all
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..40 {
        rows.push(vec![(i as f64 * 0.37).sin()]);
        y.push(u8::from(i == 3 || i == 29));
    }
    let data = distlogit::Dataset::from_rows(&rows, y).unwrap();
    let err = fit_distributed(&data, EstimatorKind::Rmle, 10, 1, &EngineConfig::default()).unwrap_err();
    assert!(matches!(err, Error::LocalFit { status: FitStatus::Separation, .. }));
    assert!(err.to_string().contains("complete separation"));

    let drop = EngineConfig { failure_policy: FailurePolicy::DropAndWarn, ..EngineConfig::default() };
    match fit_distributed(&data, EstimatorKind::Rmle, 10, 1, &drop) {
        Ok(f) => {
            assert!(f.n_failed > 0);
            assert_eq!(f.warnings.len(), f.n_failed);
        }
        Err(e) => assert!(matches!(e, Error::LocalFit { .. })),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn average_ignores_shard_order(
        locals in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 3), 1..40),
        rot in 0usize..40,
    ) {
        let thetas: Vec<Theta> = locals.iter().map(|v| Theta::from_slice(v).unwrap()).collect();
        let mut shuffled = thetas.clone();
        shuffled.reverse();
        let r = rot % shuffled.len();
        shuffled.rotate_left(r);
        prop_assert_eq!(one_shot_average(&thetas).unwrap(), one_shot_average(&shuffled).unwrap());
    }

    #[test]
    fn k1_collapse_on_fuzzed_data(data in dataset(20..80, 1..3), seed in any::<u64>()) {
        let g = fit_global(&data, &SolverConfig::default()).unwrap();
        prop_assume!(g.status == FitStatus::Converged);
        for kind in [EstimatorKind::Ipw, EstimatorKind::Us] {
            let f = fit_distributed(&data, kind, 1, seed, &EngineConfig::default()).unwrap();
            prop_assert!(max_diff(&f.theta_hat, &g.theta_hat) < 1e-8);
        }
    }
}

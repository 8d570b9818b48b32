use proptest::prelude::*;

use tivac::simulation::{
    draw_pair, empirical_baseline, generate, loess_at, pearson, rmse, run_benchmark, BenchmarkOptions, BenchmarkReport,
    CovariateKind, EmpiricalEstimator, ScenarioSpec, Shape, TimeDesign, TivacEstimator,
};
use tivac::rng::{stream, StreamKind};
use tivac::{Correlation, FitConfig, LongitudinalDataset, SubjectRecord};

#[test]
fn generated_pairs_have_target_correlation() {
    let rho = Correlation::new(0.6).unwrap();
    let mut rng = stream(99, StreamKind::Simulation, &[0]);
    let pairs: Vec<[f64; 2]> = (0..100_000).map(|_| draw_pair(&mut rng, rho, 1.0, 2.0)).collect();
    assert!((pearson(&pairs).unwrap() - 0.6).abs() < 0.01);
}

#[test]
fn generated_variances_match_spec() {
    let mut spec = ScenarioSpec::new(CovariateKind::Continuous, Shape::Logistic);
    spec.n = 4000;
    spec.t_max = 50;
    spec.time_design = TimeDesign::Custom { min_m: 5, max_m: 5 };
    let g = generate(&spec, 0).unwrap();
    let pairs: Vec<[f64; 2]> = g.data.pooled_outcomes().collect();
    let n = pairs.len() as f64;
    let v1 = pairs.iter().map(|p| p[0] * p[0]).sum::<f64>() / n;
    let v2 = pairs.iter().map(|p| p[1] * p[1]).sum::<f64>() / n;
    assert!((v1 - 1.0).abs() < 0.05, "{v1}");
    assert!((v2 - 4.0).abs() < 0.2, "{v2}");
}

#[test]
fn empirical_recovers_strong_constant_correlation() {
    let rho: f64 = 0.9;
    let mut state = 12345u64;
    let mut normal = move || {
        // Box-Muller on a splitmix stream keeps this oracle independent of the crate's generator
        let mut u = || {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
            ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
        };
        let (a, b) = (u().max(1e-300), u());
        (-2.0 * a.ln()).sqrt() * (std::f64::consts::TAU * b).cos()
    };
    let subjects: Vec<SubjectRecord> = (0..200)
        .map(|i| {
            let times: Vec<f64> = (1..=20).map(|t| t as f64).collect();
            let outcomes = times
                .iter()
                .map(|_| {
                    let z1 = normal();
                    let z2 = normal();
                    [z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2]
                })
                .collect();
            SubjectRecord {
                subject_id: format!("s{i}"),
                times,
                outcomes,
            }
        })
        .collect();
    let covariates = (0..200).map(|i| vec![1.0, (i % 2) as f64]).collect();
    let data = LongitudinalDataset::new(subjects, covariates, vec!["intercept".into(), "x".into()]).unwrap();
    let grid: Vec<f64> = (1..=20).map(|t| t as f64).collect();
    let curves = empirical_baseline(&data, Some(1), &grid).unwrap();
    assert_eq!(curves.len(), 2);
    for c in &curves {
        assert!(c.values.iter().all(|v| (v - 0.9).abs() < 0.05), "{:?}", c.values);
    }
    assert!(empirical_baseline(&data, Some(5), &grid).is_err());
}

#[test]
fn empirical_rejects_continuous_groupings_and_sparse_times() {
    let mut spec = ScenarioSpec::new(CovariateKind::Continuous, Shape::Linear);
    spec.n = 10;
    spec.t_max = 100;
    spec.time_design = TimeDesign::Low;
    let g = generate(&spec, 0).unwrap();
    assert!(empirical_baseline(&g.data, Some(1), &[10.0]).is_err());
    // 10 subjects with few times spread over 100: some time may still have 3 pairs, force none
    let sparse: Vec<SubjectRecord> = (0..4)
        .map(|i| SubjectRecord {
            subject_id: format!("s{i}"),
            times: vec![i as f64, 10.0 + i as f64],
            outcomes: vec![[0.1, 0.2], [0.3, 0.1]],
        })
        .collect();
    let data = LongitudinalDataset::new(sparse, vec![vec![1.0]; 4], vec!["intercept".into()]).unwrap();
    assert!(empirical_baseline(&data, None, &[1.0]).is_err());
}

#[test]
fn loess_reproduces_constants() {
    let pts: Vec<(f64, f64)> = (0..25).map(|i| (i as f64 * 0.7, 0.42)).collect();
    for span in [0.1, 0.5, 1.0] {
        for t in [0.0, 3.3, 16.8] {
            assert!((loess_at(&pts, span, t) - 0.42).abs() < 1e-14);
        }
    }
}

#[test]
fn rmse_examples() {
    assert!((rmse(&[0.3, 0.4], &[0.0, 0.0]) - 0.125f64.sqrt()).abs() < 1e-15);
    let truth = [0.1, -0.2, 0.5];
    let shifted: Vec<f64> = truth.iter().map(|t| t + 0.1).collect();
    assert!((rmse(&shifted, &truth) - 0.1).abs() < 1e-12);
    assert_eq!(rmse(&truth, &truth), 0.0);
}

fn benchmark_spec(replications: usize) -> ScenarioSpec {
    let mut spec = ScenarioSpec::new(CovariateKind::Binary, Shape::Linear);
    spec.n = 30;
    spec.t_max = 20;
    spec.time_design = TimeDesign::Custom { min_m: 8, max_m: 12 };
    spec.replications = replications;
    spec.seed = 5;
    spec
}

#[test]
fn benchmark_counts_and_round_trips() {
    let tivac = TivacEstimator {
        config: FitConfig {
            interior_knots: Some(2),
            cv_folds: 3,
            lambda_grid: vec![1.0, 100.0],
            ..FitConfig::default()
        },
    };
    let options = BenchmarkOptions {
        methods: vec![&tivac, &EmpiricalEstimator],
        record_timing: false,
    };
    let report = run_benchmark(&[benchmark_spec(2)], &options).unwrap();
    // 2 replications x 2 methods x 2 groups
    assert_eq!(report.rows.len(), 8);
    assert!(report.rows.iter().all(|r| r.rmse.is_some_and(|v| v >= 0.0)));
    let again = run_benchmark(&[benchmark_spec(2)], &options).unwrap();
    assert_eq!(report, again);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    report.write_csv(&path).unwrap();
    assert_eq!(BenchmarkReport::read_csv(&path).unwrap(), report);
    let agg = report.aggregate();
    assert_eq!(agg.len(), 4);
    assert!(agg.iter().all(|a| a.replications == 2 && a.missing == 0));

    let empty = run_benchmark(&[benchmark_spec(0)], &options).unwrap();
    assert!(empty.rows.is_empty());
}

#[test]
fn empirical_is_missing_for_continuous_covariates() {
    let mut spec = benchmark_spec(1);
    spec.covariate_kind = CovariateKind::Continuous;
    let options = BenchmarkOptions {
        methods: vec![&EmpiricalEstimator],
        record_timing: false,
    };
    let report = run_benchmark(&[spec], &options).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.rows[0].group, "pooled");
    assert_eq!(report.rows[0].rmse, None);
}

proptest! {
    #[test]
    fn rmse_symmetric_and_permutation_invariant(
        pairs in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..40),
        rot in 0usize..40,
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let r = rmse(&a, &b);
        prop_assert!(r >= 0.0);
        prop_assert_eq!(r, rmse(&b, &a));
        let k = rot % a.len();
        let (mut ar, mut br) = (a.clone(), b.clone());
        ar.rotate_left(k);
        br.rotate_left(k);
        prop_assert!((rmse(&ar, &br) - r).abs() <= 1e-12);
    }

    #[test]
    fn generated_truth_stays_inside(seed in 0u64..200, shape in 0usize..3, noise in 0.0f64..0.5) {
        let shape = [Shape::Linear, Shape::Seasonal, Shape::Logistic][shape];
        let mut spec = ScenarioSpec::new(CovariateKind::Continuous, shape);
        spec.n = 6;
        spec.t_max = 40;
        spec.noise_sd = noise;
        spec.seed = seed;
        let g = generate(&spec, 0).unwrap();
        for (i, s) in g.data.subjects().iter().enumerate() {
            let x = g.data.covariate_row(i)[1];
            for (t, y) in s.times.iter().zip(&s.outcomes) {
                let r = g.truth.rho(*t, x);
                prop_assert!(r > -1.0 && r < 1.0);
                prop_assert!(y[0].is_finite() && y[1].is_finite());
            }
        }
    }
}

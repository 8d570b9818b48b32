use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tivac::likelihood::{
    estimate_variances, gradient, hessian, loglik, newton_raphson, observation_loglik, penalized_loglik, Design,
    NewtonControls, VarianceEstimates,
};
use tivac::{difference_penalty, make_spec, LongitudinalDataset, SubjectRecord};

fn random_dataset(rng: &mut ChaCha8Rng, p: usize) -> LongitudinalDataset {
    let n = rng.random_range(3..=10).max(p + 1);
    let subjects = (0..n)
        .map(|i| {
            let m = rng.random_range(1..=5);
            let mut times: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..10.0)).collect();
            times.sort_by(f64::total_cmp);
            times.dedup();
            let outcomes = times.iter().map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
            SubjectRecord {
                subject_id: format!("s{i}"),
                times,
                outcomes,
            }
        })
        .collect();
    let covariates = (0..n)
        .map(|_| (0..p).map(|k| if k == 0 { 1.0 } else { rng.random_range(-1.0..1.0) }).collect())
        .collect();
    LongitudinalDataset::new(subjects, covariates, (0..p).map(|k| format!("x{k}")).collect()).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[test]
fn gradient_and_hessian_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let p = rng.random_range(1..=2);
        let data = random_dataset(&mut rng, p);
        let q = rng.random_range(3..=6);
        let (lo, hi) = data.time_range();
        let spec = make_spec(lo, hi, q - 3, 3).unwrap();
        let design = Design::new(&data, &spec).unwrap();
        let pen = difference_penalty(q, 2).unwrap();
        let v = estimate_variances(&data).unwrap();
        let lambdas: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..5.0)).collect();
        let theta: Vec<f64> = (0..q * p).map(|_| rng.random_range(-1.0..1.0)).collect();

        let f = |t: &[f64]| penalized_loglik(t, &lambdas, &design, &v, &pen);
        let g = gradient(&theta, &lambdas, &design, &v, &pen);
        let h = hessian(&theta, &lambdas, &design, &v, &pen);
        let eps = 1e-5;
        for i in 0..theta.len() {
            let (mut up, mut dn) = (theta.clone(), theta.clone());
            up[i] += eps;
            dn[i] -= eps;
            let fd = (f(&up) - f(&dn)) / (2.0 * eps);
            assert!(rel_err(g[i], fd) < 1e-6, "gradient {i}: {} vs {fd}", g[i]);
            let gu = gradient(&up, &lambdas, &design, &v, &pen);
            let gd = gradient(&dn, &lambdas, &design, &v, &pen);
            for j in 0..theta.len() {
                let fd = (gu[j] - gd[j]) / (2.0 * eps);
                assert!(rel_err(h[(j, i)], fd) < 1e-5, "hessian ({j},{i}): {} vs {fd}", h[(j, i)]);
            }
        }
    }
}

#[test]
fn hessian_is_exactly_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = random_dataset(&mut rng, 2);
    let (lo, hi) = data.time_range();
    let spec = make_spec(lo, hi, 2, 4).unwrap();
    let design = Design::new(&data, &spec).unwrap();
    let pen = difference_penalty(spec.q(), 2).unwrap();
    let v = VarianceEstimates::new(1.0, 1.0).unwrap();
    let theta = vec![0.0; design.dim()];
    let h = hessian(&theta, &[1.0, 1.0], &design, &v, &pen);
    assert_eq!(h, h.transpose());
}

/// With one covariate fixed at 1, `lambda = 0`, and a sample whose pairs repeat
/// identically at every observed time, the spline MLE is the constant `eta`
/// maximizing the one-parameter likelihood, which a brute-force scan finds.
#[test]
fn newton_matches_grid_search_for_constant_correlation() {
    let rho: f64 = 0.6;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base: Vec<[f64; 2]> = (0..40)
        .map(|_| {
            let z1: f64 = rng.random_range(-1.7..1.7);
            let z2: f64 = rng.random_range(-1.7..1.7);
            [z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2]
        })
        .collect();
    let times = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let subjects: Vec<SubjectRecord> = base
        .iter()
        .enumerate()
        .map(|(i, y)| SubjectRecord {
            subject_id: format!("s{i}"),
            times: times.to_vec(),
            outcomes: vec![*y; times.len()],
        })
        .collect();
    let data = LongitudinalDataset::new(subjects, vec![vec![1.0]; base.len()], vec!["one".into()]).unwrap();
    let spec = make_spec(1.0, 6.0, 1, 4).unwrap();
    let design = Design::new(&data, &spec).unwrap();
    let pen = difference_penalty(spec.q(), 2).unwrap();
    let v = estimate_variances(&data).unwrap();
    let (theta, report) =
        newton_raphson(&vec![0.0; spec.q()], &[0.0], &design, &v, &pen, &NewtonControls::default()).unwrap();
    assert!(report.converged);

    let mut best = (f64::NEG_INFINITY, 0.0);
    for i in 0..=100_000 {
        let eta = -5.0 + i as f64 * 1e-4;
        let ll: f64 = base.iter().map(|y| observation_loglik(eta, *y, &v)).sum();
        if ll > best.0 {
            best = (ll, eta);
        }
    }
    for t in [1.0, 2.5, 4.0, 6.0] {
        let b = spec.eval_basis(t).unwrap();
        let eta: f64 = b.iter().zip(&theta).map(|(a, c)| a * c).sum();
        assert!((eta - best.1).abs() < 1e-3, "t={t}: {eta} vs {}", best.1);
    }
}

#[test]
fn huge_lambda_forces_affine_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let subjects: Vec<SubjectRecord> = (0..30)
        .map(|i| {
            let times: Vec<f64> = (0..8).map(|j| j as f64 + rng.random_range(0.0..0.5)).collect();
            let outcomes = times
                .iter()
                .map(|t| {
                    let r: f64 = (t / 8.0 - 0.3).tanh();
                    let z1: f64 = rng.random_range(-1.7..1.7);
                    let z2: f64 = rng.random_range(-1.7..1.7);
                    [z1, r * z1 + (1.0 - r * r).sqrt() * z2]
                })
                .collect();
            SubjectRecord {
                subject_id: format!("s{i}"),
                times,
                outcomes,
            }
        })
        .collect();
    let data = LongitudinalDataset::new(subjects, vec![vec![1.0]; 30], vec!["one".into()]).unwrap();
    let (lo, hi) = data.time_range();
    let spec = make_spec(lo, hi, 5, 4).unwrap();
    let design = Design::new(&data, &spec).unwrap();
    let pen = difference_penalty(spec.q(), 2).unwrap();
    let v = estimate_variances(&data).unwrap();
    let (theta, report) =
        newton_raphson(&vec![0.0; spec.q()], &[1e9], &design, &v, &pen, &NewtonControls::default()).unwrap();
    assert!(report.converged, "{report:?}");
    let second: Vec<f64> = theta.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect();
    assert!(second.iter().all(|d| d.abs() < 1e-5), "{second:?}");
}

proptest! {
    #[test]
    fn loglik_is_permutation_invariant(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_dataset(&mut rng, 1);
        let (lo, hi) = data.time_range();
        let spec = make_spec(lo, hi, 1, 4).unwrap();
        let design = Design::new(&data, &spec).unwrap();
        let theta: Vec<f64> = (0..spec.q()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = estimate_variances(&data).unwrap();
        let mut order: Vec<usize> = (0..data.n_subjects()).collect();
        order.reverse();
        let a = loglik(&theta, &design, &v);
        let b = loglik(&theta, &design.select(&order), &v);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}

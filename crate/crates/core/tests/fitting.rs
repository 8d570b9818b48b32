use tivac::model::fit_with_lambdas;
use tivac::simulation::{generate, CovariateKind, ScenarioSpec, Shape, TimeDesign};
use tivac::{fit, FitConfig, FittedModel, LongitudinalDataset, SubjectRecord, TivacError};

fn scenario(kind: CovariateKind, shape: Shape, n: usize, seed: u64) -> ScenarioSpec {
    let mut spec = ScenarioSpec::new(kind, shape);
    spec.n = n;
    spec.t_max = 60;
    spec.time_design = TimeDesign::Custom { min_m: 5, max_m: 15 };
    spec.seed = seed;
    spec
}

fn small_config(seed: u64) -> FitConfig {
    FitConfig {
        interior_knots: Some(4),
        cv_folds: 5,
        seed,
        ..FitConfig::default()
    }
}

#[test]
fn constant_effect_selects_large_lambda() {
    let spec = scenario(CovariateKind::Binary, Shape::Zero, 80, 21);
    let generated = generate(&spec, 0).unwrap();
    // keep only the intercept column so p = 1
    let data = LongitudinalDataset::new(
        generated.data.subjects().to_vec(),
        vec![vec![1.0]; generated.data.n_subjects()],
        vec!["intercept".into()],
    )
    .unwrap();
    let config = small_config(3);
    let model = fit(&data, &config).unwrap();
    let top = config.lambda_grid.len() - 1;
    let chosen = config.lambda_grid.iter().position(|l| *l == model.lambdas_hat[0]).unwrap();
    assert!(chosen + 2 >= top, "selected lambda {}", model.lambdas_hat[0]);
}

#[test]
fn selected_lambdas_dominate_cv_table() {
    let spec = scenario(CovariateKind::Binary, Shape::Linear, 60, 4);
    let data = generate(&spec, 1).unwrap().data;
    let model = fit(&data, &small_config(8)).unwrap();
    assert!(model.report.converged);
    assert!(!model.cv_table.is_empty());
    let selected = model
        .cv_table
        .iter()
        .find(|r| r.lambdas == model.lambdas_hat)
        .and_then(|r| r.heldout_loglik)
        .unwrap();
    for r in &model.cv_table {
        assert!(r.heldout_loglik.unwrap_or(f64::NEG_INFINITY) <= selected);
        assert_eq!(r.folds.len(), 5);
    }
    for l in &model.lambdas_hat {
        assert!(model.cv_table[0].lambdas.len() == 2 && small_config(0).lambda_grid.contains(l));
    }
}

#[test]
fn fit_is_bitwise_deterministic() {
    let spec = scenario(CovariateKind::Continuous, Shape::Seasonal, 40, 6);
    let data = generate(&spec, 0).unwrap().data;
    let a = fit(&data, &small_config(7)).unwrap();
    let b = fit(&data, &small_config(7)).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    let reloaded = FittedModel::from_json(&a.to_json().unwrap()).unwrap();
    let grid = a.default_grid(50);
    assert_eq!(
        a.correlation_surface(&[1.0, 0.3], &grid).unwrap(),
        reloaded.correlation_surface(&[1.0, 0.3], &grid).unwrap()
    );
}

#[test]
fn linear_binary_scenario_recovers_truth() {
    let mut spec = ScenarioSpec::new(CovariateKind::Binary, Shape::Linear);
    spec.n = 100;
    spec.t_max = 200;
    spec.seed = 12;
    let g = generate(&spec, 0).unwrap();
    let model = fit(&g.data, &FitConfig { seed: 1, ..FitConfig::default() }).unwrap();
    let grid = model.default_grid(200);
    for x in [0.0, 1.0] {
        let est = model.correlation_surface(&[1.0, x], &grid).unwrap();
        let truth: Vec<f64> = grid.iter().map(|&t| g.truth.rho(t, x)).collect();
        let rmse = tivac::simulation::rmse(&est, &truth);
        assert!(rmse < 0.05, "x = {x}: rmse {rmse}");
    }
}

#[test]
fn n_equal_p_is_rejected() {
    let subjects = vec![
        SubjectRecord {
            subject_id: "a".into(),
            times: vec![0.0, 1.0],
            outcomes: vec![[0.1, 0.2], [0.3, -0.1]],
        },
        SubjectRecord {
            subject_id: "b".into(),
            times: vec![0.5, 2.0],
            outcomes: vec![[-0.4, 0.2], [0.2, 0.6]],
        },
    ];
    let err = LongitudinalDataset::new(subjects, vec![vec![1.0, 0.0], vec![1.0, 1.0]], vec!["a".into(), "b".into()]);
    assert!(matches!(err, Err(TivacError::InvalidData(_))));
}

#[test]
fn fixed_lambdas_validate_length() {
    let spec = scenario(CovariateKind::Binary, Shape::Linear, 20, 1);
    let data = generate(&spec, 0).unwrap().data;
    assert!(fit_with_lambdas(&data, &small_config(0), &[1.0]).is_err());
    assert!(fit_with_lambdas(&data, &small_config(0), &[1.0, -1.0]).is_err());
    assert!(fit_with_lambdas(&data, &small_config(0), &[10.0, 10.0]).is_ok());
}

#[test]
fn bad_fold_counts_are_rejected() {
    let spec = scenario(CovariateKind::Binary, Shape::Linear, 20, 1);
    let data = generate(&spec, 0).unwrap().data;
    for folds in [1, 21] {
        let config = FitConfig {
            cv_folds: folds,
            ..small_config(0)
        };
        assert!(matches!(fit(&data, &config), Err(TivacError::InvalidConfig(_))));
    }
}

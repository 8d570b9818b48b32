//! End-to-end fitting: cross-validated smoothing parameters, the final
//! Newton-Raphson fit, and evaluation of coefficient curves and correlation
//! surfaces.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LongitudinalDataset;
use crate::error::{Result, TivacError};
use crate::likelihood::{
    estimate_variances, loglik, newton_raphson, rho_of_eta, Design, NewtonControls, NewtonReport, ThetaVector,
    VarianceEstimates,
};
use crate::rng::{stream, StreamKind};
use crate::splines::{default_interior_knots, difference_penalty, make_spec, PenaltyMatrix, SplineSpec, DEFAULT_ORDER};

pub const DEFAULT_GRID_POINTS: usize = 200;

/// `10^-2, 10^-1, ..., 10^6`.
pub fn default_lambda_grid() -> Vec<f64> {
    (-2..=6).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// `None` picks about 20 observations per knot interval, at most 10 interior knots.
    pub interior_knots: Option<usize>,
    pub order: usize,
    pub difference_order: usize,
    pub lambda_grid: Vec<f64>,
    pub cv_folds: usize,
    pub newton: NewtonControls,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            interior_knots: None,
            order: DEFAULT_ORDER,
            difference_order: 2,
            lambda_grid: default_lambda_grid(),
            cv_folds: 10,
            newton: NewtonControls::default(),
            seed: 0,
        }
    }
}

impl FitConfig {
    fn validate(&self, n_subjects: usize) -> Result<()> {
        let bad = |m: String| Err(TivacError::InvalidConfig(m));
        if self.lambda_grid.is_empty() {
            return bad("lambda grid is empty".into());
        }
        if let Some(l) = self.lambda_grid.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return bad(format!("lambda grid values must be positive, found {l}"));
        }
        if self.cv_folds < 2 || self.cv_folds > n_subjects {
            return bad(format!("cv_folds must be in 2..={n_subjects}, got {}", self.cv_folds));
        }
        Ok(())
    }

    pub fn spline_for(&self, data: &LongitudinalDataset) -> Result<SplineSpec> {
        let (t_min, t_max) = data.time_range();
        let interior = self
            .interior_knots
            .unwrap_or_else(|| default_interior_knots(data.n_observations()).max(3usize.saturating_sub(self.order)));
        make_spec(t_min, t_max, interior, self.order)
    }
}

/// One visited smoothing-parameter combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRecord {
    pub lambdas: Vec<f64>,
    /// Summed held-out log-likelihood; `None` when some fold failed to converge.
    pub heldout_loglik: Option<f64>,
    /// Per-fold held-out log-likelihood, `None` for a non-converged fold.
    pub folds: Vec<Option<f64>>,
}

impl CvRecord {
    fn score(&self) -> f64 {
        self.heldout_loglik.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: SplineSpec,
    pub difference_order: usize,
    pub covariate_names: Vec<String>,
    pub theta_hat: ThetaVector,
    pub lambdas_hat: Vec<f64>,
    pub variances: VarianceEstimates,
    pub report: NewtonReport,
    pub cv_table: Vec<CvRecord>,
    pub seed: u64,
}

/// Subject-level folds: a seeded permutation cut into contiguous blocks.
pub fn assign_folds(n_subjects: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n_subjects).collect();
    order.shuffle(&mut stream(seed, StreamKind::Folds, &[]));
    (0..folds)
        .map(|f| {
            let (lo, hi) = (f * n_subjects / folds, (f + 1) * n_subjects / folds);
            let mut block = order[lo..hi].to_vec();
            block.sort_unstable();
            block
        })
        .collect()
}

/// Everything needed to fit the coefficients at fixed smoothing parameters.
#[derive(Debug, Clone)]
pub struct FitContext {
    pub design: Design,
    pub penalty: PenaltyMatrix,
    pub variances: VarianceEstimates,
    pub controls: NewtonControls,
}

impl FitContext {
    pub fn new(data: &LongitudinalDataset, spec: &SplineSpec, config: &FitConfig) -> Result<Self> {
        Ok(FitContext {
            design: Design::new(data, spec)?,
            penalty: difference_penalty(spec.q(), config.difference_order)?,
            variances: estimate_variances(data)?,
            controls: config.newton,
        })
    }

    pub fn fit_design(&self, design: &Design, lambdas: &[f64], init: Option<&[f64]>) -> Result<(Vec<f64>, NewtonReport)> {
        let zeros;
        let init = match init {
            Some(t) => t,
            None => {
                zeros = vec![0.0; design.dim()];
                &zeros
            }
        };
        newton_raphson(init, lambdas, design, &self.variances, &self.penalty, &self.controls)
    }
}

struct FoldSplit {
    train: Design,
    test: Design,
}

fn evaluate_combo(ctx: &FitContext, splits: &[FoldSplit], lambdas: &[f64]) -> CvRecord {
    let folds: Vec<Option<f64>> = splits
        .par_iter()
        .map(|split| match ctx.fit_design(&split.train, lambdas, None) {
            Ok((theta, report)) if report.converged => Some(loglik(&theta, &split.test, &ctx.variances)),
            _ => None,
        })
        .collect();
    let heldout_loglik = folds.iter().try_fold(0.0, |acc, f| f.map(|v| acc + v));
    CvRecord {
        lambdas: lambdas.to_vec(),
        heldout_loglik,
        folds,
    }
}

/// Coordinate-wise search over the smoothing-parameter grid maximizing the
/// summed held-out (unpenalized) log-likelihood. Returns the selected
/// `lambda_k` and every visited combination.
pub fn cross_validate(
    data: &LongitudinalDataset,
    ctx: &FitContext,
    config: &FitConfig,
) -> Result<(Vec<f64>, Vec<CvRecord>)> {
    config.validate(data.n_subjects())?;
    let p = data.n_covariates();
    let grid = &config.lambda_grid;
    if grid.len() == 1 {
        return Ok((vec![grid[0]; p], Vec::new()));
    }

    let folds = assign_folds(data.n_subjects(), config.cv_folds, config.seed);
    let splits: Vec<FoldSplit> = folds
        .iter()
        .map(|test| {
            let train: Vec<usize> = (0..data.n_subjects()).filter(|i| test.binary_search(i).is_err()).collect();
            FoldSplit {
                train: ctx.design.select(&train),
                test: ctx.design.select(test),
            }
        })
        .collect();

    let mut visited: BTreeMap<Vec<usize>, CvRecord> = BTreeMap::new();
    let mut current = vec![grid.len() / 2; p];
    for _cycle in 0..2 {
        let mut changed = false;
        for k in 0..p {
            let combos: Vec<Vec<usize>> = (0..grid.len())
                .map(|j| {
                    let mut c = current.clone();
                    c[k] = j;
                    c
                })
                .collect();
            let fresh: Vec<&Vec<usize>> = combos.iter().filter(|c| !visited.contains_key(*c)).collect();
            let records: Vec<CvRecord> = fresh
                .par_iter()
                .map(|c| {
                    let lambdas: Vec<f64> = c.iter().map(|&j| grid[j]).collect();
                    evaluate_combo(ctx, &splits, &lambdas)
                })
                .collect();
            for (c, r) in fresh.into_iter().zip(records) {
                log::debug!("cv lambdas={:?} heldout={:?}", r.lambdas, r.heldout_loglik);
                visited.insert(c.clone(), r);
            }
            // ascending scan with >= breaks ties toward the larger (smoother) lambda
            let mut best = 0;
            for j in 0..grid.len() {
                if visited[&combos[j]].score() >= visited[&combos[best]].score() {
                    best = j;
                }
            }
            if best != current[k] {
                current[k] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    for f in 0..config.cv_folds {
        if visited.values().all(|r| r.folds[f].is_none()) {
            return Err(TivacError::FoldDiverged { fold: f });
        }
    }
    // the coordinate path ends at a coordinate-wise optimum; report the best combination visited
    // anywhere on it, ties again going to the smoother (larger index sum, then larger leading lambda)
    let (best, _) = visited
        .iter()
        .fold(None::<(&Vec<usize>, f64)>, |acc, (c, r)| match acc {
            Some((bc, bs)) if r.score() < bs => Some((bc, bs)),
            Some((bc, bs)) if r.score() == bs && (c.iter().sum::<usize>(), c) < (bc.iter().sum::<usize>(), bc) => {
                Some((bc, bs))
            }
            _ => Some((c, r.score())),
        })
        .expect("at least one combination visited");
    let selected = best.iter().map(|&j| grid[j]).collect();
    Ok((selected, visited.into_values().collect()))
}

/// Estimates variances, selects smoothing parameters by cross-validation and
/// refits on all subjects.
pub fn fit(data: &LongitudinalDataset, config: &FitConfig) -> Result<FittedModel> {
    config.validate(data.n_subjects())?;
    let spec = config.spline_for(data)?;
    let ctx = FitContext::new(data, &spec, config)?;
    let (lambdas, cv_table) = cross_validate(data, &ctx, config)?;
    finish_fit(data, spec, &ctx, config, lambdas, cv_table)
}

/// Fits at the given smoothing parameters, skipping cross-validation.
pub fn fit_with_lambdas(data: &LongitudinalDataset, config: &FitConfig, lambdas: &[f64]) -> Result<FittedModel> {
    if lambdas.len() != data.n_covariates() {
        return Err(TivacError::InvalidConfig(format!(
            "{} smoothing parameters for {} covariates",
            lambdas.len(),
            data.n_covariates()
        )));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(TivacError::InvalidConfig("smoothing parameters must be finite and non-negative".into()));
    }
    let spec = config.spline_for(data)?;
    let ctx = FitContext::new(data, &spec, config)?;
    finish_fit(data, spec, &ctx, config, lambdas.to_vec(), Vec::new())
}

fn finish_fit(
    data: &LongitudinalDataset,
    spec: SplineSpec,
    ctx: &FitContext,
    config: &FitConfig,
    lambdas: Vec<f64>,
    cv_table: Vec<CvRecord>,
) -> Result<FittedModel> {
    let (theta, report) = ctx.fit_design(&ctx.design, &lambdas, None)?;
    if !report.converged {
        return Err(TivacError::Diverged(format!(
            "final fit stopped after {} iterations with gradient norm {:e}",
            report.iterations, report.final_gradient_norm
        )));
    }
    Ok(FittedModel {
        spec,
        difference_order: config.difference_order,
        covariate_names: data.covariate_names().to_vec(),
        theta_hat: ThetaVector(theta),
        lambdas_hat: lambdas,
        variances: ctx.variances,
        report,
        cv_table,
        seed: config.seed,
    })
}

/// `beta_k(t) = b(t)^T theta_k` on `grid`.
pub fn coefficient_curve(model: &FittedModel, k: usize, grid: &[f64]) -> Result<Vec<f64>> {
    model.coefficient_curve(k, grid)
}

/// `rho(t, x) = tanh(sum_k x_k beta_k(t) / 2)` on `grid`.
pub fn correlation_surface(model: &FittedModel, x: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    model.correlation_surface(x, grid)
}

impl FittedModel {
    pub fn p(&self) -> usize {
        self.lambdas_hat.len()
    }

    pub fn coefficient_curve(&self, k: usize, grid: &[f64]) -> Result<Vec<f64>> {
        if k >= self.p() {
            return Err(TivacError::InvalidConfig(format!("covariate index {k} out of range (p = {})", self.p())));
        }
        let q = self.spec.q();
        let block = self.theta_hat.block(k, q);
        grid.iter()
            .map(|&t| {
                let (first, local) = self.spec.eval_local(t)?;
                Ok(local.iter().zip(&block[first..]).map(|(b, th)| b * th).sum())
            })
            .collect()
    }

    /// Linear predictor `eta(t, x)` on `grid`.
    pub fn eta_curve(&self, x: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.p() {
            return Err(TivacError::InvalidConfig(format!("expected {} covariate values, got {}", self.p(), x.len())));
        }
        let mut eta = vec![0.0; grid.len()];
        for (k, xk) in x.iter().enumerate() {
            if *xk == 0.0 {
                continue;
            }
            for (e, b) in eta.iter_mut().zip(self.coefficient_curve(k, grid)?) {
                *e += xk * b;
            }
        }
        Ok(eta)
    }

    pub fn correlation_surface(&self, x: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eta_curve(x, grid)?.into_iter().map(|e| rho_of_eta(e).value()).collect())
    }

    /// `points` equally spaced times over the fitted range.
    pub fn default_grid(&self, points: usize) -> Vec<f64> {
        let (lo, hi) = self.spec.range();
        crate::linspace(lo, hi, points)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| TivacError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| TivacError::io(path, e))?;
        Self::from_json(&s)
    }
}

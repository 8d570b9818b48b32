//! Monte Carlo comparison of correlation estimators against the known truth.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::empirical::empirical_baseline;
use super::scenario::{generate, CovariateKind, ScenarioSpec, TrueCorrelation};
use crate::dataset::LongitudinalDataset;
use crate::error::{Result, TivacError};
use crate::{full_precision, linspace};
use crate::model::{fit, FitConfig};
use crate::rng::{derive_seed, StreamKind};

/// Number of covariate values used to pool RMSE for continuous covariates.
pub const CONTINUOUS_X_POINTS: usize = 100;

/// Root mean squared difference; `NaN` for empty or mismatched inputs.
pub fn rmse(estimate: &[f64], truth: &[f64]) -> f64 {
    if estimate.is_empty() || estimate.len() != truth.len() {
        return f64::NAN;
    }
    let ss: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
    (ss / estimate.len() as f64).sqrt()
}

/// A method that estimates `rho(t, x)` from a dataset with covariates `[intercept, x]`.
pub trait CorrelationEstimator: Sync {
    fn name(&self) -> &str;

    /// One curve over `grid` per value in `xs`. `Ok(None)` means the method
    /// does not apply to this covariate design.
    fn estimate(&self, data: &LongitudinalDataset, xs: &[f64], grid: &[f64], seed: u64) -> Result<Option<Vec<Vec<f64>>>>;
}

pub struct TivacEstimator {
    pub config: FitConfig,
}

impl CorrelationEstimator for TivacEstimator {
    fn name(&self) -> &str {
        "tivac"
    }

    fn estimate(&self, data: &LongitudinalDataset, xs: &[f64], grid: &[f64], seed: u64) -> Result<Option<Vec<Vec<f64>>>> {
        let config = FitConfig {
            seed,
            ..self.config.clone()
        };
        let model = fit(data, &config)?;
        xs.iter()
            .map(|&x| model.correlation_surface(&[1.0, x], grid))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

pub struct EmpiricalEstimator;

impl CorrelationEstimator for EmpiricalEstimator {
    fn name(&self) -> &str {
        "empirical"
    }

    fn estimate(&self, data: &LongitudinalDataset, xs: &[f64], grid: &[f64], _seed: u64) -> Result<Option<Vec<Vec<f64>>>> {
        let curves = match empirical_baseline(data, Some(1), grid) {
            Ok(c) => c,
            Err(TivacError::InvalidConfig(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        xs.iter()
            .map(|&x| {
                curves
                    .iter()
                    .find(|c| c.group == Some(x))
                    .map(|c| c.values.clone())
                    .ok_or_else(|| TivacError::InvalidData(format!("no subjects with x = {x}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub scenario: String,
    pub shape: String,
    pub covariate_kind: String,
    pub time_design: String,
    #[serde(serialize_with = "full_precision::f64")]
    pub noise_sd: f64,
    pub method: String,
    /// `x=0` / `x=1` for binary covariates, `pooled` otherwise.
    pub group: String,
    pub replication: usize,
    /// Empty when the method failed or does not apply.
    #[serde(serialize_with = "full_precision::option")]
    pub rmse: Option<f64>,
    #[serde(serialize_with = "full_precision::f64")]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub shape: String,
    pub covariate_kind: String,
    pub time_design: String,
    #[serde(serialize_with = "full_precision::f64")]
    pub noise_sd: f64,
    pub method: String,
    pub group: String,
    pub replications: usize,
    pub missing: usize,
    #[serde(serialize_with = "full_precision::option")]
    pub mean_rmse: Option<f64>,
    #[serde(serialize_with = "full_precision::option")]
    pub sd_rmse: Option<f64>,
    #[serde(serialize_with = "full_precision::f64")]
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
}

pub struct BenchmarkOptions<'a> {
    pub methods: Vec<&'a dyn CorrelationEstimator>,
    /// When false every `seconds` value is written as 0 so reports are byte-reproducible.
    pub record_timing: bool,
}

/// Times `1, 2, ..., t_max` that fall inside the observed time range.
pub fn evaluation_grid(data: &LongitudinalDataset, t_max: usize) -> Vec<f64> {
    let (lo, hi) = data.time_range();
    (1..=t_max).map(|t| t as f64).filter(|t| *t >= lo && *t <= hi).collect()
}

fn evaluation_groups(kind: CovariateKind) -> (Vec<f64>, Vec<String>) {
    match kind {
        CovariateKind::Binary => (vec![0.0, 1.0], vec!["x=0".into(), "x=1".into()]),
        CovariateKind::Continuous => (linspace(0.0, 1.0, CONTINUOUS_X_POINTS), vec!["pooled".into()]),
    }
}

fn truth_curves(truth: &TrueCorrelation, xs: &[f64], grid: &[f64]) -> Vec<Vec<f64>> {
    xs.iter().map(|&x| grid.iter().map(|&t| truth.rho(t, x)).collect()).collect()
}

fn run_cell(spec: &ScenarioSpec, replication: usize, options: &BenchmarkOptions<'_>) -> Result<Vec<BenchmarkRow>> {
    let generated = generate(spec, replication)?;
    let grid = evaluation_grid(&generated.data, spec.t_max);
    let (xs, labels) = evaluation_groups(spec.covariate_kind);
    let truth = truth_curves(&generated.truth, &xs, &grid);
    let seed = derive_seed(spec.seed, StreamKind::Benchmark, &[replication as u64]);

    let mut rows = Vec::new();
    for method in &options.methods {
        let start = Instant::now();
        let estimate = match method.estimate(&generated.data, &xs, &grid, seed) {
            Ok(e) => e,
            Err(e) => {
                log::warn!("{} failed on {} replication {replication}: {e}", method.name(), spec.name);
                None
            }
        };
        let seconds = if options.record_timing {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        };
        let scores: Vec<Option<f64>> = match (&estimate, spec.covariate_kind) {
            (None, _) => vec![None; labels.len()],
            (Some(est), CovariateKind::Binary) => est.iter().zip(&truth).map(|(e, t)| Some(rmse(e, t))).collect(),
            (Some(est), CovariateKind::Continuous) => {
                let e: Vec<f64> = est.concat();
                let t: Vec<f64> = truth.concat();
                vec![Some(rmse(&e, &t))]
            }
        };
        for (label, score) in labels.iter().zip(scores) {
            rows.push(BenchmarkRow {
                scenario: spec.name.clone(),
                shape: spec.shape.to_string(),
                covariate_kind: spec.covariate_kind.to_string(),
                time_design: spec.time_design.to_string(),
                noise_sd: spec.noise_sd,
                method: method.name().to_string(),
                group: label.clone(),
                replication,
                rmse: score.filter(|v| v.is_finite()),
                seconds,
            });
        }
    }
    Ok(rows)
}

/// Runs every replication of every scenario with every method. Rows are
/// ordered by scenario, replication, method and group regardless of scheduling.
pub fn run_benchmark(specs: &[ScenarioSpec], options: &BenchmarkOptions<'_>) -> Result<BenchmarkReport> {
    for s in specs {
        s.validate()?;
    }
    let cells: Vec<(usize, usize)> = specs
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.replications).map(move |r| (i, r)))
        .collect();
    let results: Vec<Vec<BenchmarkRow>> = cells
        .par_iter()
        .map(|&(i, r)| run_cell(&specs[i], r, options))
        .collect::<Result<_>>()?;
    Ok(BenchmarkReport {
        rows: results.into_iter().flatten().collect(),
    })
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        Some((values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt())
    } else {
        None
    };
    (Some(mean), sd)
}

impl BenchmarkReport {
    /// Mean and SD of RMSE per scenario, method and group, in first-appearance order.
    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut order = Vec::new();
        let mut groups: BTreeMap<usize, Vec<&BenchmarkRow>> = BTreeMap::new();
        let mut index: Vec<(String, String, String)> = Vec::new();
        for row in &self.rows {
            let key = (row.scenario.clone(), row.method.clone(), row.group.clone());
            let pos = match index.iter().position(|k| *k == key) {
                Some(p) => p,
                None => {
                    index.push(key);
                    order.push(index.len() - 1);
                    index.len() - 1
                }
            };
            groups.entry(pos).or_default().push(row);
        }
        order
            .into_iter()
            .map(|pos| {
                let rows = &groups[&pos];
                let first = rows[0];
                let values: Vec<f64> = rows.iter().filter_map(|r| r.rmse).collect();
                let (mean_rmse, sd_rmse) = mean_sd(&values);
                AggregateRow {
                    scenario: first.scenario.clone(),
                    shape: first.shape.clone(),
                    covariate_kind: first.covariate_kind.clone(),
                    time_design: first.time_design.clone(),
                    noise_sd: first.noise_sd,
                    method: first.method.clone(),
                    group: first.group.clone(),
                    replications: rows.len(),
                    missing: rows.len() - values.len(),
                    mean_rmse,
                    sd_rmse,
                    mean_seconds: rows.iter().map(|r| r.seconds).sum::<f64>() / rows.len() as f64,
                }
            })
            .collect()
    }

    /// Mean RMSE for one scenario/method/group, if any replication produced one.
    pub fn mean_rmse(&self, scenario: &str, method: &str, group: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.scenario == scenario && r.method == method && r.group == group)
            .filter_map(|r| r.rmse)
            .collect();
        mean_sd(&v).0
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.rows)
    }

    pub fn write_aggregate_csv(&self, path: &Path) -> Result<()> {
        write_rows(path, &self.aggregate())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let rows = reader.deserialize().collect::<std::result::Result<Vec<BenchmarkRow>, _>>()?;
        Ok(BenchmarkReport { rows })
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| TivacError::io(path, e))?;
    Ok(())
}

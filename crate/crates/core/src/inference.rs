//! Nested-bootstrap simultaneous confidence bands for the coefficient curves.
//!
//! Outer replicates resample subjects with replacement and refit the
//! coefficients; inner replicates resample each outer sample again to
//! studentize the max-deviation statistic
//! `T_b = max_t |beta_b(t) - beta_hat(t)| / sd_inner_b(t)`.
//! The band is `beta_hat(t) +- T_crit * sd_outer(t)`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LongitudinalDataset;
use crate::error::{Result, TivacError};
use crate::format_f64;
use crate::likelihood::{newton_raphson, Design, NewtonControls};
use crate::model::{FittedModel, DEFAULT_GRID_POINTS};
use crate::rng::{stream, StreamKind};
use crate::splines::difference_penalty;

/// Inner standard deviations below this are excluded from the max in `T_b`.
pub const MIN_INNER_SD: f64 = 1e-10;
/// Largest tolerated fraction of non-convergent outer replicates.
pub const MAX_DROPPED_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandConfig {
    pub outer_replicates: usize,
    pub inner_replicates: usize,
    pub alpha: f64,
    /// Evaluation times; `None` uses 200 equally spaced points over the fitted range.
    pub grid: Option<Vec<f64>>,
    pub seed: u64,
    pub newton: NewtonControls,
}

impl Default for BandConfig {
    fn default() -> Self {
        BandConfig {
            outer_replicates: 200,
            inner_replicates: 50,
            alpha: 0.05,
            grid: None,
            seed: 0,
            newton: NewtonControls::default(),
        }
    }
}

impl BandConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(TivacError::InvalidConfig(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if self.outer_replicates < 50 {
            return Err(TivacError::InvalidConfig(format!(
                "need at least 50 outer replicates, got {}",
                self.outer_replicates
            )));
        }
        if self.inner_replicates < 10 {
            return Err(TivacError::InvalidConfig(format!(
                "need at least 10 inner replicates, got {}",
                self.inner_replicates
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandResult {
    pub covariate: usize,
    pub covariate_name: String,
    pub grid: Vec<f64>,
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub critical_value: f64,
    /// Standard deviation of the outer-replicate curves at each grid point.
    pub sd: Vec<f64>,
    pub outer_replicates: usize,
    pub inner_replicates: usize,
    pub alpha: f64,
    pub dropped_replicates: usize,
}

/// Sample standard deviation (denominator `len - 1`) across `curves` at each grid point.
fn pointwise_sd(curves: &[&[f64]], points: usize) -> Vec<f64> {
    let n = curves.len() as f64;
    (0..points)
        .map(|t| {
            let mean = curves.iter().map(|c| c[t]).sum::<f64>() / n;
            let ss: f64 = curves.iter().map(|c| (c[t] - mean).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect()
}

/// Evaluates every coefficient curve for `theta` on a fixed grid.
struct CurveEvaluator {
    q: usize,
    p: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

impl CurveEvaluator {
    fn new(model: &FittedModel, grid: &[f64]) -> Result<Self> {
        let rows = grid.iter().map(|&t| model.spec.eval_local(t)).collect::<Result<_>>()?;
        Ok(CurveEvaluator {
            q: model.spec.q(),
            p: model.p(),
            rows,
        })
    }

    /// `p` curves, each with one value per grid point.
    fn curves(&self, theta: &[f64]) -> Vec<Vec<f64>> {
        (0..self.p)
            .map(|k| {
                let block = &theta[k * self.q..(k + 1) * self.q];
                self.rows
                    .iter()
                    .map(|(first, local)| local.iter().zip(&block[*first..]).map(|(b, c)| b * c).sum())
                    .collect()
            })
            .collect()
    }
}

struct OuterReplicate {
    curves: Vec<Vec<f64>>,
    inner_sd: Vec<Vec<f64>>,
}

fn draw_indices(n: usize, pool: Option<&[usize]>, seed: u64, b: usize, m: usize) -> Vec<usize> {
    let mut rng = stream(seed, StreamKind::Bootstrap, &[b as u64, m as u64]);
    (0..n)
        .map(|_| {
            let u = rng.random_range(0..n);
            pool.map_or(u, |p| p[u])
        })
        .collect()
}

/// Empirical quantile as the `ceil(level * (n + 1))`-th order statistic, clamped to the sample.
fn order_statistic_quantile(mut values: Vec<f64>, level: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let rank = (level * (n as f64 + 1.0)).ceil() as usize;
    values[rank.clamp(1, n) - 1]
}

/// Builds one simultaneous band per covariate.
///
/// Smoothing parameters and variances are frozen at the values in `model`;
/// only the spline coefficients are re-estimated, warm-started from the
/// original estimate.
pub fn bootstrap_scb(data: &LongitudinalDataset, model: &FittedModel, config: &BandConfig) -> Result<Vec<BandResult>> {
    config.validate()?;
    if data.n_covariates() != model.p() {
        return Err(TivacError::InvalidConfig("model and data have different covariates".into()));
    }
    let grid = match &config.grid {
        Some(g) => model.spec.clip_grid(g),
        None => model.default_grid(DEFAULT_GRID_POINTS),
    };
    if grid.is_empty() {
        return Err(TivacError::InvalidConfig("band grid has no points inside the fitted range".into()));
    }
    let design = Design::new(data, &model.spec)?;
    let penalty = difference_penalty(model.spec.q(), model.difference_order)?;
    let evaluator = CurveEvaluator::new(model, &grid)?;
    let n = data.n_subjects();
    let lambdas = &model.lambdas_hat;
    let variances = &model.variances;
    let refit = |subjects: &[usize], init: &[f64]| -> Option<Vec<f64>> {
        let d = design.select(subjects);
        match newton_raphson(init, lambdas, &d, variances, &penalty, &config.newton) {
            Ok((theta, report)) if report.converged => Some(theta),
            _ => None,
        }
    };

    let outer: Vec<Option<OuterReplicate>> = (1..=config.outer_replicates)
        .into_par_iter()
        .map(|b| {
            let sample = draw_indices(n, None, config.seed, b, 0);
            let theta_b = refit(&sample, model.theta_hat.as_slice())?;
            let inner: Vec<Vec<Vec<f64>>> = (1..=config.inner_replicates)
                .into_par_iter()
                .filter_map(|m| {
                    let inner_sample = draw_indices(n, Some(&sample), config.seed, b, m);
                    refit(&inner_sample, &theta_b).map(|t| evaluator.curves(&t))
                })
                .collect();
            if inner.len() < 2 {
                return None;
            }
            let inner_sd = (0..evaluator.p)
                .map(|k| {
                    let curves: Vec<&[f64]> = inner.iter().map(|c| c[k].as_slice()).collect();
                    pointwise_sd(&curves, grid.len())
                })
                .collect();
            Some(OuterReplicate {
                curves: evaluator.curves(&theta_b),
                inner_sd,
            })
        })
        .collect();

    let dropped = outer.iter().filter(|o| o.is_none()).count();
    if dropped as f64 > MAX_DROPPED_FRACTION * config.outer_replicates as f64 {
        return Err(TivacError::TooManyDropped {
            dropped,
            total: config.outer_replicates,
        });
    }
    if dropped > 0 {
        log::warn!("{dropped} of {} outer bootstrap replicates dropped", config.outer_replicates);
    }
    let kept: Vec<&OuterReplicate> = outer.iter().flatten().collect();
    let estimate = evaluator.curves(model.theta_hat.as_slice());

    let bands = (0..model.p())
        .map(|k| {
            let est = &estimate[k];
            let stats: Vec<f64> = kept
                .iter()
                .map(|rep| {
                    rep.curves[k]
                        .iter()
                        .zip(&rep.inner_sd[k])
                        .zip(est)
                        .filter(|((_, sd), _)| **sd >= MIN_INNER_SD)
                        .map(|((b, sd), e)| (b - e).abs() / sd)
                        .fold(0.0f64, f64::max)
                })
                .collect();
            let critical_value = order_statistic_quantile(stats, 1.0 - config.alpha);
            let curves: Vec<&[f64]> = kept.iter().map(|rep| rep.curves[k].as_slice()).collect();
            let sd = pointwise_sd(&curves, grid.len());
            let half: Vec<f64> = sd.iter().map(|s| critical_value * s).collect();
            BandResult {
                covariate: k,
                covariate_name: model.covariate_names.get(k).cloned().unwrap_or_else(|| format!("x{k}")),
                grid: grid.clone(),
                lower: est.iter().zip(&half).map(|(e, h)| e - h).collect(),
                upper: est.iter().zip(&half).map(|(e, h)| e + h).collect(),
                estimate: est.clone(),
                critical_value,
                sd,
                outer_replicates: config.outer_replicates,
                inner_replicates: config.inner_replicates,
                alpha: config.alpha,
                dropped_replicates: dropped,
            }
        })
        .collect();
    Ok(bands)
}

/// Maximal runs of grid points where the band excludes zero, as `(t_start, t_end)`.
///
/// Runs above and below zero are reported separately.
pub fn significant_intervals(band: &BandResult) -> Vec<(f64, f64)> {
    let sign = |i: usize| -> i8 {
        if band.lower[i] > 0.0 {
            1
        } else if band.upper[i] < 0.0 {
            -1
        } else {
            0
        }
    };
    let mut out = Vec::new();
    let mut start: Option<(usize, i8)> = None;
    for i in 0..band.grid.len() {
        let s = sign(i);
        match start {
            Some((j, sj)) if sj != s => {
                out.push((band.grid[j], band.grid[i - 1]));
                start = (s != 0).then_some((i, s));
            }
            None if s != 0 => start = Some((i, s)),
            _ => {}
        }
    }
    if let Some((j, _)) = start {
        out.push((band.grid[j], band.grid[band.grid.len() - 1]));
    }
    out
}

/// Summary written next to a band's CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub covariate: usize,
    pub covariate_name: String,
    pub critical_value: f64,
    pub outer_replicates: usize,
    pub inner_replicates: usize,
    pub alpha: f64,
    pub dropped_replicates: usize,
    pub significant_intervals: Vec<(f64, f64)>,
}

impl BandResult {
    pub fn summary(&self) -> BandSummary {
        BandSummary {
            covariate: self.covariate,
            covariate_name: self.covariate_name.clone(),
            critical_value: self.critical_value,
            outer_replicates: self.outer_replicates,
            inner_replicates: self.inner_replicates,
            alpha: self.alpha,
            dropped_replicates: self.dropped_replicates,
            significant_intervals: significant_intervals(self),
        }
    }

    /// Writes `t,estimate,lower,upper`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e| TivacError::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(w, "t,estimate,lower,upper").map_err(io)?;
        for i in 0..self.grid.len() {
            writeln!(
                w,
                "{},{},{},{}",
                format_f64(self.grid[i]),
                format_f64(self.estimate[i]),
                format_f64(self.lower[i]),
                format_f64(self.upper[i])
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Does the band contain `f(t)` at every grid point?
    pub fn covers(&self, f: impl Fn(f64) -> f64) -> bool {
        self.grid
            .iter()
            .enumerate()
            .all(|(i, &t)| self.lower[i] <= f(t) && f(t) <= self.upper[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(lower: Vec<f64>, upper: Vec<f64>) -> BandResult {
        let n = lower.len();
        BandResult {
            covariate: 0,
            covariate_name: "x".into(),
            grid: (1..=n).map(|i| i as f64).collect(),
            estimate: lower.iter().zip(&upper).map(|(a, b)| (a + b) / 2.0).collect(),
            lower,
            upper,
            critical_value: 1.0,
            sd: vec![1.0; n],
            outer_replicates: 50,
            inner_replicates: 10,
            alpha: 0.05,
            dropped_replicates: 0,
        }
    }

    #[test]
    fn intervals_from_direct_scan() {
        let b = band(vec![-1.0, 0.1, 0.2, -1.0], vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(significant_intervals(&b), vec![(2.0, 3.0)]);
        let above = band(vec![0.1; 5], vec![1.0; 5]);
        assert_eq!(significant_intervals(&above), vec![(1.0, 5.0)]);
        let straddle = band(vec![-0.1; 5], vec![0.1; 5]);
        assert!(significant_intervals(&straddle).is_empty());
        let flip = band(vec![0.1, -2.0, -2.0, 0.5], vec![1.0, -0.5, 1.0, 1.0]);
        assert_eq!(significant_intervals(&flip), vec![(1.0, 1.0), (2.0, 2.0), (4.0, 4.0)]);
    }

    #[test]
    fn quantile_convention() {
        let v: Vec<f64> = (1..=99).map(f64::from).collect();
        // ceil(0.95 * 100) = 95
        assert_eq!(order_statistic_quantile(v.clone(), 0.95), 95.0);
        assert_eq!(order_statistic_quantile(v.clone(), 0.999), 99.0);
        assert_eq!(order_statistic_quantile(v, 0.0), 1.0);
    }

    #[test]
    fn config_bounds() {
        assert!(BandConfig::default().validate().is_ok());
        assert!(BandConfig { alpha: 1.5, ..Default::default() }.validate().is_err());
        assert!(BandConfig { outer_replicates: 49, ..Default::default() }.validate().is_err());
        assert!(BandConfig { inner_replicates: 9, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn sample_sd() {
        let a = [1.0, 2.0];
        let b = [3.0, 2.0];
        assert_eq!(pointwise_sd(&[&a, &b], 2), vec![2f64.sqrt(), 0.0]);
    }
}

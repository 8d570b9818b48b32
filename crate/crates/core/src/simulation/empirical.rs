//! Empirical correlation baseline: per-time Pearson correlations smoothed by
//! local-linear LOESS with a cross-validated span.

use std::collections::BTreeMap;

use crate::dataset::LongitudinalDataset;
use crate::error::{Result, TivacError};

pub const MIN_PAIRS: usize = 3;
pub const SPANS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
const SPAN_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCurve {
    /// Covariate level, or `None` when all subjects are pooled.
    pub group: Option<f64>,
    pub span: f64,
    /// Per-time raw correlations `(t, r)` that fed the smoother.
    pub raw: Vec<(f64, f64)>,
    pub values: Vec<f64>,
}

/// Sample Pearson correlation; `None` for fewer than [`MIN_PAIRS`] pairs or a constant coordinate.
pub fn pearson(pairs: &[[f64; 2]]) -> Option<f64> {
    let n = pairs.len();
    if n < MIN_PAIRS {
        return None;
    }
    let nf = n as f64;
    let m0 = pairs.iter().map(|p| p[0]).sum::<f64>() / nf;
    let m1 = pairs.iter().map(|p| p[1]).sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in pairs {
        let (a, b) = (p[0] - m0, p[1] - m1);
        sxx += a * a;
        syy += b * b;
        sxy += a * b;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Local-linear tricube fit at `t0` using the nearest `ceil(span n)` points (at least 3).
pub fn loess_at(points: &[(f64, f64)], span: f64, t0: f64) -> f64 {
    let n = points.len();
    if n == 0 {
        return f64::NAN;
    }
    let k = ((span * n as f64).ceil() as usize).max(3).min(n);
    let mut dist: Vec<f64> = points.iter().map(|p| (p.0 - t0).abs()).collect();
    let mut sorted = dist.clone();
    sorted.sort_by(f64::total_cmp);
    let mut h = sorted[k - 1];
    if k == n {
        h = h.max(f64::MIN_POSITIVE) * 1.000_001;
    }
    for d in dist.iter_mut() {
        *d = if h > 0.0 {
            let r = *d / h;
            if r < 1.0 {
                (1.0 - r * r * r).powi(3)
            } else {
                0.0
            }
        } else if *d == 0.0 {
            1.0
        } else {
            0.0
        };
    }
    let w = dist;
    let sw: f64 = w.iter().sum();
    if sw <= 0.0 {
        // every neighbour sits exactly on the bandwidth boundary
        let near: Vec<f64> = points.iter().filter(|p| (p.0 - t0).abs() <= h).map(|p| p.1).collect();
        return near.iter().sum::<f64>() / near.len() as f64;
    }
    let tm = points.iter().zip(&w).map(|(p, w)| w * p.0).sum::<f64>() / sw;
    let ym = points.iter().zip(&w).map(|(p, w)| w * p.1).sum::<f64>() / sw;
    let (mut stt, mut sty) = (0.0, 0.0);
    for (p, w) in points.iter().zip(&w) {
        stt += w * (p.0 - tm) * (p.0 - tm);
        sty += w * (p.0 - tm) * (p.1 - ym);
    }
    if stt <= 1e-12 * sw * (1.0 + tm * tm) {
        return ym;
    }
    ym + sty / stt * (t0 - tm)
}

/// Span minimizing squared prediction error under interleaved 5-fold CV; ties go to the larger span.
pub fn select_span(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 * SPAN_FOLDS {
        return 1.0;
    }
    let mut best = (f64::INFINITY, 1.0);
    for &span in SPANS.iter() {
        let mut sse = 0.0;
        for f in 0..SPAN_FOLDS {
            let train: Vec<(f64, f64)> = points
                .iter()
                .enumerate()
                .filter(|(i, _)| i % SPAN_FOLDS != f)
                .map(|(_, p)| *p)
                .collect();
            for (_, p) in points.iter().enumerate().filter(|(i, _)| i % SPAN_FOLDS == f) {
                let e = loess_at(&train, span, p.0) - p.1;
                sse += e * e;
            }
        }
        if sse.is_finite() && sse <= best.0 * (1.0 + 1e-9) + 1e-24 {
            best = (sse, span);
        }
    }
    best.1
}

/// Raw per-time correlations for the subjects selected by `keep`.
fn raw_correlations(data: &LongitudinalDataset, keep: impl Fn(usize) -> bool) -> Vec<(f64, f64)> {
    let mut by_time: BTreeMap<u64, Vec<[f64; 2]>> = BTreeMap::new();
    for (i, s) in data.subjects().iter().enumerate() {
        if !keep(i) {
            continue;
        }
        for (t, y) in s.times.iter().zip(&s.outcomes) {
            // order-preserving key for finite floats
            let bits = (*t + 0.0).to_bits();
            let key = if *t >= 0.0 { bits ^ (1 << 63) } else { !bits };
            by_time.entry(key).or_default().push(*y);
        }
    }
    by_time
        .into_iter()
        .filter_map(|(key, pairs)| {
            let bits = if key & (1 << 63) != 0 { key ^ (1 << 63) } else { !key };
            pearson(&pairs).map(|r| (f64::from_bits(bits), r))
        })
        .collect()
}

fn smooth(group: Option<f64>, raw: Vec<(f64, f64)>, grid: &[f64]) -> Result<EmpiricalCurve> {
    if raw.is_empty() {
        return Err(TivacError::InvalidData(format!(
            "no time point has {MIN_PAIRS} or more observation pairs{}",
            group.map(|g| format!(" in group {g}")).unwrap_or_default()
        )));
    }
    let span = select_span(&raw);
    let values = grid.iter().map(|&t| loess_at(&raw, span, t).clamp(-1.0, 1.0)).collect();
    Ok(EmpiricalCurve { group, span, raw, values })
}

/// Smoothed empirical correlation on `grid`, one curve per level of
/// covariate `group_column`, or a single pooled curve when it is `None`.
/// Groupings with more than two levels are rejected.
pub fn empirical_baseline(
    data: &LongitudinalDataset,
    group_column: Option<usize>,
    grid: &[f64],
) -> Result<Vec<EmpiricalCurve>> {
    let Some(col) = group_column else {
        return Ok(vec![smooth(None, raw_correlations(data, |_| true), grid)?]);
    };
    if col >= data.n_covariates() {
        return Err(TivacError::InvalidConfig(format!("no covariate column {col}")));
    }
    let mut levels: Vec<f64> = data.covariates().iter().map(|r| r[col]).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    if levels.len() > 2 {
        return Err(TivacError::InvalidConfig(format!(
            "empirical baseline needs a covariate with at most 2 levels, column {col} has {}",
            levels.len()
        )));
    }
    levels
        .into_iter()
        .map(|g| smooth(Some(g), raw_correlations(data, |i| data.covariate_row(i)[col] == g), grid))
        .collect()
}

//! Clamped B-spline bases and finite-difference penalties.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TivacError};

pub const DEFAULT_ORDER: usize = 4;
pub const DEFAULT_INTERIOR_KNOTS: usize = 10;

/// A clamped knot vector with equally spaced interior knots.
///
/// Evaluation is right-closed: at `t_max` the last basis function equals 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SplineSpecRepr", into = "SplineSpecRepr")]
pub struct SplineSpec {
    order: usize,
    interior_knot_count: usize,
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SplineSpecRepr {
    order: usize,
    interior_knot_count: usize,
    t_min: f64,
    t_max: f64,
    knots: Vec<f64>,
}

impl From<SplineSpec> for SplineSpecRepr {
    fn from(s: SplineSpec) -> Self {
        let (t_min, t_max) = s.range();
        SplineSpecRepr {
            order: s.order,
            interior_knot_count: s.interior_knot_count,
            t_min,
            t_max,
            knots: s.knots,
        }
    }
}

impl TryFrom<SplineSpecRepr> for SplineSpec {
    type Error = TivacError;

    fn try_from(r: SplineSpecRepr) -> Result<Self> {
        let spec = make_spec(r.t_min, r.t_max, r.interior_knot_count, r.order)?;
        if spec.knots.len() != r.knots.len() {
            return Err(TivacError::InvalidSpline("knot vector length does not match".into()));
        }
        // Keep the stored knots bit-for-bit so reloaded models predict identically.
        Ok(SplineSpec { knots: r.knots, ..spec })
    }
}

/// Equally spaced interior knots on `(t_min, t_max)`, boundary knots repeated `order` times.
pub fn make_spec(t_min: f64, t_max: f64, interior_knot_count: usize, order: usize) -> Result<SplineSpec> {
    if !(t_min.is_finite() && t_max.is_finite() && t_min < t_max) {
        return Err(TivacError::InvalidSpline(format!("need t_min < t_max, got ({t_min}, {t_max})")));
    }
    if order < 2 {
        return Err(TivacError::InvalidSpline(format!("order must be at least 2, got {order}")));
    }
    let q = interior_knot_count + order;
    if q < 3 {
        return Err(TivacError::InvalidSpline(format!(
            "basis dimension {q} is too small for a second-difference penalty"
        )));
    }
    let mut knots = Vec::with_capacity(interior_knot_count + 2 * order);
    knots.extend(std::iter::repeat_n(t_min, order));
    let width = t_max - t_min;
    for j in 1..=interior_knot_count {
        knots.push(t_min + width * j as f64 / (interior_knot_count + 1) as f64);
    }
    knots.extend(std::iter::repeat_n(t_max, order));
    Ok(SplineSpec {
        order,
        interior_knot_count,
        knots,
    })
}

/// Interior knot count targeting about 20 observations per knot interval, capped at the default.
pub fn default_interior_knots(n_observations: usize) -> usize {
    (n_observations / 20).saturating_sub(1).min(DEFAULT_INTERIOR_KNOTS)
}

impl SplineSpec {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn interior_knot_count(&self) -> usize {
        self.interior_knot_count
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Basis dimension.
    pub fn q(&self) -> usize {
        self.interior_knot_count + self.order
    }

    pub fn range(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    fn check(&self, t: f64) -> Result<()> {
        let (t_min, t_max) = self.range();
        if t >= t_min && t <= t_max {
            Ok(())
        } else {
            Err(TivacError::OutOfRange { t, t_min, t_max })
        }
    }

    /// Index of the knot span containing `t`, in `order-1 ..= q-1`.
    fn span(&self, t: f64) -> usize {
        let q = self.q();
        if t >= self.knots[q] {
            return q - 1;
        }
        // last index i with knots[i] <= t, restricted to the valid span range
        let i = self.knots.partition_point(|&k| k <= t) - 1;
        i.clamp(self.order - 1, q - 1)
    }

    /// The `order` possibly-nonzero basis values at `t` and the index of the first one.
    pub fn eval_local(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        self.check(t)?;
        let degree = self.order - 1;
        let i = self.span(t);
        let k = &self.knots;
        let mut values = vec![0.0; self.order];
        let mut left = vec![0.0; self.order];
        let mut right = vec![0.0; self.order];
        values[0] = 1.0;
        for j in 1..=degree {
            left[j] = t - k[i + 1 - j];
            right[j] = k[i + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        Ok((i + 1 - self.order, values))
    }

    /// Dense basis vector `b(t)` of length `q`.
    pub fn eval_basis(&self, t: f64) -> Result<Vec<f64>> {
        let (first, local) = self.eval_local(t)?;
        let mut out = vec![0.0; self.q()];
        out[first..first + self.order].copy_from_slice(&local);
        Ok(out)
    }

    /// `len(times) x q` matrix whose rows are `b(t_j)`.
    pub fn basis_matrix(&self, times: &[f64]) -> Result<DMatrix<f64>> {
        let q = self.q();
        let mut m = DMatrix::zeros(times.len(), q);
        for (r, &t) in times.iter().enumerate() {
            let (first, local) = self.eval_local(t)?;
            for (l, v) in local.into_iter().enumerate() {
                m[(r, first + l)] = v;
            }
        }
        Ok(m)
    }

    /// Drops grid points outside the spline range, logging how many were removed.
    pub fn clip_grid(&self, grid: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.range();
        let kept: Vec<f64> = grid.iter().copied().filter(|t| *t >= lo && *t <= hi).collect();
        if kept.len() < grid.len() {
            log::warn!(
                "{} grid points outside the fitted time range [{lo}, {hi}] were dropped",
                grid.len() - kept.len()
            );
        }
        kept
    }
}

/// `D^T D` for the banded difference operator `D` of the given order.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    matrix: DMatrix<f64>,
    difference_order: usize,
    stencil: Vec<f64>,
}

/// Builds the `q x q` penalty for differences of order `difference_order` (1, 2 or 3).
pub fn difference_penalty(q: usize, difference_order: usize) -> Result<PenaltyMatrix> {
    if !(1..=3).contains(&difference_order) {
        return Err(TivacError::InvalidSpline(format!(
            "difference order must be 1, 2 or 3, got {difference_order}"
        )));
    }
    if q <= difference_order {
        return Err(TivacError::InvalidSpline(format!(
            "need more than {difference_order} coefficients for this penalty, got {q}"
        )));
    }
    // binomial coefficients with alternating sign, e.g. (1, -2, 1)
    let mut stencil = vec![1.0f64];
    for _ in 0..difference_order {
        let mut next = vec![0.0; stencil.len() + 1];
        for (i, c) in stencil.iter().enumerate() {
            next[i] += c;
            next[i + 1] -= c;
        }
        stencil = next;
    }
    let rows = q - difference_order;
    let mut d = DMatrix::zeros(rows, q);
    for r in 0..rows {
        for (j, c) in stencil.iter().enumerate() {
            d[(r, r + j)] = *c;
        }
    }
    Ok(PenaltyMatrix {
        matrix: d.transpose() * d,
        difference_order,
        stencil,
    })
}

impl PenaltyMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn difference_order(&self) -> usize {
        self.difference_order
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `theta^T D^T D theta`, summed as `|D theta|^2` so sequences in the null space give exactly 0.
    pub fn quadratic_form(&self, theta: &[f64]) -> f64 {
        theta
            .windows(self.stencil.len())
            .map(|w| {
                let d: f64 = w.iter().zip(&self.stencil).map(|(t, c)| t * c).sum();
                d * d
            })
            .sum()
    }

    /// `D^T D theta`.
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        let q = self.dim();
        (0..q)
            .map(|i| (0..q).map(|j| self.matrix[(i, j)] * theta[j]).sum())
            .collect()
    }
}

use serde::{Deserialize, Serialize};

use crate::dataset::LongitudinalDataset;
use crate::error::{Result, TivacError};
use crate::splines::SplineSpec;

/// Plug-in marginal variances of the two outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimates {
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
}

impl VarianceEstimates {
    pub fn new(sigma1_sq: f64, sigma2_sq: f64) -> Result<Self> {
        for (i, v) in [sigma1_sq, sigma2_sq].into_iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(TivacError::ZeroVariance(i + 1));
            }
        }
        Ok(VarianceEstimates { sigma1_sq, sigma2_sq })
    }
}

/// Pooled variances (denominator `N`) of each outcome over all subjects and times.
pub fn estimate_variances(data: &LongitudinalDataset) -> Result<VarianceEstimates> {
    let n = data.n_observations();
    if n < 2 {
        return Err(TivacError::InvalidData("need at least two observations to estimate variances".into()));
    }
    let mut mean = [0.0; 2];
    for y in data.pooled_outcomes() {
        mean[0] += y[0];
        mean[1] += y[1];
    }
    mean[0] /= n as f64;
    mean[1] /= n as f64;
    let mut ss = [0.0; 2];
    for y in data.pooled_outcomes() {
        ss[0] += (y[0] - mean[0]).powi(2);
        ss[1] += (y[1] - mean[1]).powi(2);
    }
    let var = [ss[0] / n as f64, ss[1] / n as f64];
    for (c, v) in var.iter().enumerate() {
        if !(*v > 0.0) {
            return Err(TivacError::ZeroVariance(c + 1));
        }
    }
    VarianceEstimates::new(var[0], var[1])
}

/// Observation-level design in sparse form.
///
/// The full row is `A_ij = X_i (kron) b(t_ij)`, of length `q * p`, with entry
/// `k * q + l` equal to `X_ik * b_l(t_ij)`. Only the `order` nonzero basis
/// values starting at `first` are stored.
#[derive(Debug, Clone)]
pub struct Design {
    q: usize,
    p: usize,
    order: usize,
    /// Row-major `n x p`.
    covariates: Vec<f64>,
    /// Observation offsets per subject, length `n + 1`.
    offsets: Vec<usize>,
    first: Vec<usize>,
    /// Stride `order`.
    basis: Vec<f64>,
    outcomes: Vec<[f64; 2]>,
}

impl Design {
    pub fn new(data: &LongitudinalDataset, spec: &SplineSpec) -> Result<Self> {
        let order = spec.order();
        let mut design = Design::empty(spec.q(), data.n_covariates(), order);
        for (i, s) in data.subjects().iter().enumerate() {
            design.covariates.extend_from_slice(data.covariate_row(i));
            for (t, y) in s.times.iter().zip(&s.outcomes) {
                let (first, local) = spec.eval_local(*t)?;
                design.first.push(first);
                design.basis.extend_from_slice(&local);
                design.outcomes.push(*y);
            }
            design.offsets.push(design.outcomes.len());
        }
        Ok(design)
    }

    /// A design with no observations.
    pub fn empty(q: usize, p: usize, order: usize) -> Self {
        Design {
            q,
            p,
            order,
            covariates: Vec::new(),
            offsets: vec![0],
            first: Vec::new(),
            basis: Vec::new(),
            outcomes: Vec::new(),
        }
    }

    /// The design made of the listed subjects (repeats allowed), in that order.
    pub fn select(&self, subjects: &[usize]) -> Design {
        let mut out = Design::empty(self.q, self.p, self.order);
        for &i in subjects {
            out.covariates.extend_from_slice(self.covariate_row(i));
            let range = self.offsets[i]..self.offsets[i + 1];
            out.first.extend_from_slice(&self.first[range.clone()]);
            out.basis
                .extend_from_slice(&self.basis[range.start * self.order..range.end * self.order]);
            out.outcomes.extend_from_slice(&self.outcomes[range]);
            out.offsets.push(out.outcomes.len());
        }
        out
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.q * self.p
    }

    pub fn n_subjects(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_observations(&self) -> usize {
        self.outcomes.len()
    }

    pub fn covariate_row(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.p..(i + 1) * self.p]
    }

    /// Iterates observations as `(subject, first basis index, local basis values, outcome)`.
    pub fn observations(&self) -> impl Iterator<Item = (usize, usize, &[f64], [f64; 2])> + '_ {
        (0..self.n_subjects()).flat_map(move |i| {
            (self.offsets[i]..self.offsets[i + 1]).map(move |o| {
                (
                    i,
                    self.first[o],
                    &self.basis[o * self.order..(o + 1) * self.order],
                    self.outcomes[o],
                )
            })
        })
    }

    /// Dense row `A_ij` for observation `o` (global index).
    pub fn dense_row(&self, o: usize) -> Vec<f64> {
        let i = self.offsets.partition_point(|&off| off <= o) - 1;
        let mut row = vec![0.0; self.dim()];
        let x = self.covariate_row(i);
        for k in 0..self.p {
            for r in 0..self.order {
                row[k * self.q + self.first[o] + r] = x[k] * self.basis[o * self.order + r];
            }
        }
        row
    }
}

/// `eta = A^T theta` for a sparse design row.
#[inline]
pub(crate) fn row_eta(theta: &[f64], q: usize, x: &[f64], first: usize, basis: &[f64]) -> f64 {
    let mut eta = 0.0;
    for (k, xk) in x.iter().enumerate() {
        if *xk == 0.0 {
            continue;
        }
        let block = &theta[k * q + first..k * q + first + basis.len()];
        let dot: f64 = block.iter().zip(basis).map(|(t, b)| t * b).sum();
        eta += xk * dot;
    }
    eta
}

/// `eta = A^T theta` for a dense row.
pub fn eta(theta: &[f64], row: &[f64]) -> f64 {
    theta.iter().zip(row).map(|(t, a)| t * a).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SubjectRecord;
    use crate::splines::make_spec;

    fn pooled(y1: &[f64]) -> LongitudinalDataset {
        let subjects = y1
            .iter()
            .enumerate()
            .map(|(i, &v)| SubjectRecord {
                subject_id: format!("s{i}"),
                times: vec![i as f64],
                outcomes: vec![[v, (i % 2) as f64]],
            })
            .collect();
        let x = vec![vec![1.0]; y1.len()];
        LongitudinalDataset::new(subjects, x, vec!["one".into()]).unwrap()
    }

    #[test]
    fn variance_examples() {
        assert_eq!(estimate_variances(&pooled(&[-1.0, 1.0])).unwrap().sigma1_sq, 1.0);
        let v = estimate_variances(&pooled(&[0.0, 2.0, 4.0])).unwrap();
        assert!((v.sigma1_sq - 8.0 / 3.0).abs() < 1e-15);
        assert!(matches!(estimate_variances(&pooled(&[2.0, 2.0, 2.0])), Err(TivacError::ZeroVariance(1))));
    }

    #[test]
    fn eta_unit_design() {
        let mut theta = vec![0.0; 5];
        let mut row = vec![0.0; 5];
        row[0] = 1.0;
        assert_eq!(eta(&theta, &row), 0.0);
        theta[0] = 0.5;
        theta[1] = 0.7;
        assert_eq!(eta(&theta, &row), 0.5);
    }

    #[test]
    fn sparse_rows_match_nested_loop() {
        let subjects = vec![
            SubjectRecord { subject_id: "a".into(), times: vec![0.0, 3.3, 9.0], outcomes: vec![[0.1, 0.2]; 3] },
            SubjectRecord { subject_id: "b".into(), times: vec![5.5], outcomes: vec![[0.3, -0.2]] },
            SubjectRecord { subject_id: "c".into(), times: vec![10.0], outcomes: vec![[0.3, -0.2]] },
        ];
        let x = vec![vec![1.0, 0.4], vec![1.0, -2.0], vec![1.0, 0.0]];
        let data = LongitudinalDataset::new(subjects, x, vec!["one".into(), "z".into()]).unwrap();
        let spec = make_spec(0.0, 10.0, 3, 4).unwrap();
        let design = Design::new(&data, &spec).unwrap();
        let q = spec.q();
        let theta: Vec<f64> = (0..2 * q).map(|i| ((i * 37 % 11) as f64 - 5.0) / 7.0).collect();
        let mut o = 0;
        for (i, s) in data.subjects().iter().enumerate() {
            for &t in &s.times {
                let b = spec.eval_basis(t).unwrap();
                let xi = data.covariate_row(i);
                let mut brute = 0.0;
                for k in 0..2 {
                    for l in 0..q {
                        brute += xi[k] * b[l] * theta[k * q + l];
                    }
                }
                let dense = design.dense_row(o);
                assert!((eta(&theta, &dense) - brute).abs() < 1e-12);
                o += 1;
            }
        }
        for (i, first, basis, _) in design.observations() {
            let _ = row_eta(&theta, q, design.covariate_row(i), first, basis);
        }
        let sel = design.select(&[2, 0, 0]);
        assert_eq!(sel.n_subjects(), 3);
        assert_eq!(sel.n_observations(), 7);
        assert_eq!(sel.covariate_row(0), &[1.0, 0.0]);
    }
}

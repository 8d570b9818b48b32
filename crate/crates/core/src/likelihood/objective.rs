//! Bivariate Gaussian log-likelihood in the spline coefficients, with its
//! analytic gradient and Hessian.
//!
//! Per observation, with `S = y1^2/s1^2 + y2^2/s2^2` and `c = y1 y2 / (s1 s2)`,
//! the log density in terms of `eta` is
//!
//! ```text
//! l(eta) = -ln(2 pi) - ln(s1 s2) + ln cosh(eta/2) - (1 + cosh eta) S / 4 + sinh(eta) c / 2
//! l'(eta)  = tanh(eta/2) / 2 - sinh(eta) S / 4 + cosh(eta) c / 2
//! l''(eta) = sech^2(eta/2) / 4 - cosh(eta) S / 4 + sinh(eta) c / 2
//! ```
//!
//! which is the usual `-(1/2){ln|Sigma| + y' Sigma^-1 y} - ln(2 pi)` with
//! `rho = tanh(eta/2)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::design::{row_eta, Design, VarianceEstimates};
use crate::splines::PenaltyMatrix;

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Compensated (Neumaier) running sum.
#[derive(Default, Clone, Copy)]
pub(crate) struct Accumulator {
    sum: f64,
    compensation: f64,
}

impl Accumulator {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(self) -> f64 {
        self.sum + self.compensation
    }
}

struct Scaled {
    s: f64,
    c: f64,
}

#[inline]
fn scaled(y: [f64; 2], v: &VarianceEstimates) -> Scaled {
    Scaled {
        s: y[0] * y[0] / v.sigma1_sq + y[1] * y[1] / v.sigma2_sq,
        c: y[0] * y[1] / (v.sigma1_sq * v.sigma2_sq).sqrt(),
    }
}

/// Log density of one observation pair at linear predictor `eta`.
pub fn observation_loglik(eta: f64, y: [f64; 2], variances: &VarianceEstimates) -> f64 {
    let Scaled { s, c } = scaled(y, variances);
    let norm = -(2.0 * PI).ln() - 0.5 * (variances.sigma1_sq * variances.sigma2_sq).ln();
    norm + log_cosh(eta / 2.0) - 0.25 * (1.0 + eta.cosh()) * s + 0.5 * eta.sinh() * c
}

#[inline]
fn observation_derivatives(eta: f64, y: [f64; 2], variances: &VarianceEstimates) -> (f64, f64) {
    let Scaled { s, c } = scaled(y, variances);
    let (sh, ch) = (eta.sinh(), eta.cosh());
    let half = (eta / 2.0).cosh();
    let d1 = 0.5 * (eta / 2.0).tanh() - 0.25 * sh * s + 0.5 * ch * c;
    let d2 = 0.25 / (half * half) - 0.25 * ch * s + 0.5 * sh * c;
    (d1, d2)
}

/// Unpenalized log-likelihood summed over every observation in `design`.
pub fn loglik(theta: &[f64], design: &Design, variances: &VarianceEstimates) -> f64 {
    assert_eq!(theta.len(), design.dim(), "theta has the wrong length");
    let q = design.q();
    let mut acc = Accumulator::default();
    for (i, first, basis, y) in design.observations() {
        let eta = row_eta(theta, q, design.covariate_row(i), first, basis);
        acc.add(observation_loglik(eta, y, variances));
    }
    acc.value()
}

/// `sum_k lambda_k theta_k^T D^T D theta_k`.
pub fn penalty_value(theta: &[f64], lambdas: &[f64], penalty: &PenaltyMatrix) -> f64 {
    let q = penalty.dim();
    lambdas
        .iter()
        .enumerate()
        .map(|(k, l)| l * penalty.quadratic_form(&theta[k * q..(k + 1) * q]))
        .sum()
}

/// `loglik - 1/2 sum_k lambda_k theta_k^T D^T D theta_k`.
pub fn penalized_loglik(
    theta: &[f64],
    lambdas: &[f64],
    design: &Design,
    variances: &VarianceEstimates,
    penalty: &PenaltyMatrix,
) -> f64 {
    check_dims(theta, lambdas, design, penalty);
    loglik(theta, design, variances) - 0.5 * penalty_value(theta, lambdas, penalty)
}

fn check_dims(theta: &[f64], lambdas: &[f64], design: &Design, penalty: &PenaltyMatrix) {
    assert_eq!(theta.len(), design.dim(), "theta has the wrong length");
    assert_eq!(lambdas.len(), design.p(), "one smoothing parameter per covariate");
    assert_eq!(penalty.dim(), design.q(), "penalty and basis dimensions differ");
}

/// Gradient of [`penalized_loglik`] with respect to `theta`.
pub fn gradient(
    theta: &[f64],
    lambdas: &[f64],
    design: &Design,
    variances: &VarianceEstimates,
    penalty: &PenaltyMatrix,
) -> Vec<f64> {
    check_dims(theta, lambdas, design, penalty);
    let q = design.q();
    let mut grad = vec![0.0; theta.len()];
    for (i, first, basis, y) in design.observations() {
        let x = design.covariate_row(i);
        let eta = row_eta(theta, q, x, first, basis);
        let (d1, _) = observation_derivatives(eta, y, variances);
        for (k, xk) in x.iter().enumerate() {
            let w = d1 * xk;
            for (r, b) in basis.iter().enumerate() {
                grad[k * q + first + r] += w * b;
            }
        }
    }
    for (k, lambda) in lambdas.iter().enumerate() {
        let pt = penalty.apply(&theta[k * q..(k + 1) * q]);
        for (g, v) in grad[k * q..(k + 1) * q].iter_mut().zip(pt) {
            *g -= lambda * v;
        }
    }
    grad
}

/// Hessian of [`penalized_loglik`]; the penalty enters block-diagonally as `-lambda_k D^T D`.
pub fn hessian(
    theta: &[f64],
    lambdas: &[f64],
    design: &Design,
    variances: &VarianceEstimates,
    penalty: &PenaltyMatrix,
) -> DMatrix<f64> {
    check_dims(theta, lambdas, design, penalty);
    let q = design.q();
    let dim = theta.len();
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    let order = design.order();
    let mut idx = Vec::with_capacity(design.p() * order);
    let mut val = Vec::with_capacity(design.p() * order);
    for (i, first, basis, y) in design.observations() {
        let x = design.covariate_row(i);
        let eta = row_eta(theta, q, x, first, basis);
        let (_, d2) = observation_derivatives(eta, y, variances);
        idx.clear();
        val.clear();
        for (k, xk) in x.iter().enumerate() {
            if *xk == 0.0 {
                continue;
            }
            for (r, b) in basis.iter().enumerate() {
                idx.push(k * q + first + r);
                val.push(xk * b);
            }
        }
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                h[(ia, ib)] += d2 * (val[a] * val[b]);
            }
        }
    }
    let pm = penalty.matrix();
    for (k, lambda) in lambdas.iter().enumerate() {
        for r in 0..q {
            for c in 0..q {
                h[(k * q + r, k * q + c)] -= lambda * pm[(r, c)];
            }
        }
    }
    h
}

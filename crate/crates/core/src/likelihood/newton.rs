//! Damped Newton-Raphson ascent on the penalized log-likelihood.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{Design, VarianceEstimates};
use super::objective::{gradient, hessian, penalized_loglik};
use crate::error::{Result, TivacError};
use crate::splines::PenaltyMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonControls {
    pub max_iter: usize,
    /// Convergence threshold on the max-norm of the gradient.
    pub grad_tol: f64,
    /// Smallest step fraction tried by the halving line search.
    pub min_step: f64,
}

impl Default for NewtonControls {
    fn default() -> Self {
        NewtonControls {
            max_iter: 100,
            grad_tol: 1e-6,
            min_step: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub final_penalized_loglik: f64,
    pub step_halvings: usize,
    /// Largest ridge added to `-H` in any iteration (0 if never needed).
    pub hessian_ridge_used: f64,
}

const INITIAL_RIDGE: f64 = 1e-8;
const ROUNDING_SLACK: f64 = 1e-12;

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves `(-H + ridge I) d = g` for an ascent direction, growing the ridge
/// until `-H + ridge I` is positive definite and `g . d > 0`.
fn ascent_direction(h: DMatrix<f64>, g: &[f64]) -> Result<(Vec<f64>, f64)> {
    let dim = g.len();
    let neg_h = -h;
    let grad = DVector::from_column_slice(g);
    let scale = (0..dim).fold(1.0f64, |m, i| m.max(neg_h[(i, i)].abs()));
    let max_ridge = 1e12 * scale;
    let mut ridge = 0.0;
    loop {
        let mut m = neg_h.clone();
        if ridge > 0.0 {
            for i in 0..dim {
                m[(i, i)] += ridge;
            }
        }
        if let Some(chol) = Cholesky::new(m) {
            let d = chol.solve(&grad);
            if d.iter().all(|v| v.is_finite()) && d.dot(&grad) > 0.0 {
                return Ok((d.as_slice().to_vec(), ridge));
            }
        }
        ridge = if ridge == 0.0 { INITIAL_RIDGE } else { ridge * 2.0 };
        if ridge > max_ridge {
            return Err(TivacError::SingularHessian { ridge });
        }
    }
}

/// Maximizes the penalized log-likelihood starting from `init`.
///
/// Each iteration takes `theta - s H^-1 g`, halving `s` until the objective
/// does not decrease (or, within rounding of the current value, until the
/// gradient norm shrinks). Non-convergence is reported, not raised; only a
/// Hessian that cannot be regularized is an error.
pub fn newton_raphson(
    init: &[f64],
    lambdas: &[f64],
    design: &Design,
    variances: &VarianceEstimates,
    penalty: &PenaltyMatrix,
    controls: &NewtonControls,
) -> Result<(Vec<f64>, NewtonReport)> {
    let mut theta = init.to_vec();
    let mut value = penalized_loglik(&theta, lambdas, design, variances, penalty);
    if !value.is_finite() {
        return Err(TivacError::Diverged("objective is not finite at the starting point".into()));
    }
    let mut report = NewtonReport {
        converged: false,
        iterations: 0,
        final_gradient_norm: f64::INFINITY,
        final_penalized_loglik: value,
        step_halvings: 0,
        hessian_ridge_used: 0.0,
    };

    let mut grad = gradient(&theta, lambdas, design, variances, penalty);
    loop {
        report.final_gradient_norm = max_norm(&grad);
        if report.final_gradient_norm <= controls.grad_tol {
            report.converged = true;
            break;
        }
        if report.iterations >= controls.max_iter {
            break;
        }
        report.iterations += 1;

        let h = hessian(&theta, lambdas, design, variances, penalty);
        let (direction, ridge) = ascent_direction(h, &grad)?;
        report.hessian_ridge_used = report.hessian_ridge_used.max(ridge);

        let mut step = 1.0;
        let mut accepted = None;
        while step >= controls.min_step {
            let candidate: Vec<f64> = theta.iter().zip(&direction).map(|(t, d)| t + step * d).collect();
            let v = penalized_loglik(&candidate, lambdas, design, variances, penalty);
            if v.is_finite() && v >= value {
                accepted = Some((candidate, v, None));
                break;
            }
            // near the optimum the objective change drowns in rounding; fall back to stationarity
            if v.is_finite() && v >= value - ROUNDING_SLACK * (1.0 + value.abs()) {
                let g = gradient(&candidate, lambdas, design, variances, penalty);
                if max_norm(&g) < report.final_gradient_norm {
                    accepted = Some((candidate, v, Some(g)));
                    break;
                }
            }
            step /= 2.0;
            report.step_halvings += 1;
        }
        match accepted {
            Some((candidate, v, g)) => {
                theta = candidate;
                value = v;
                grad = g.unwrap_or_else(|| gradient(&theta, lambdas, design, variances, penalty));
            }
            None => break,
        }
    }
    report.final_penalized_loglik = value;
    Ok((theta, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splines::difference_penalty;

    #[test]
    fn quadratic_converges_immediately() {
        // no data: the objective is the pure quadratic -lambda/2 theta' P theta,
        // maximized anywhere in the null space
        let pen = difference_penalty(6, 2).unwrap();
        let design = Design::empty(6, 1, 4);
        let v = VarianceEstimates::new(1.0, 1.0).unwrap();
        let init = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let (theta, rep) = newton_raphson(&init, &[3.0], &design, &v, &pen, &NewtonControls::default()).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 0);
        assert_eq!(theta, init);

        let init = [0.0, 1.0, 0.0, -2.0, 0.5, 0.0];
        let (_, rep) = newton_raphson(&init, &[3.0], &design, &v, &pen, &NewtonControls::default()).unwrap();
        assert!(rep.converged);
        assert!(rep.iterations <= 2, "{rep:?}");
    }

    #[test]
    fn ridge_gives_ascent_direction() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let (d, ridge) = ascent_direction(h, &[1.0, 1.0]).unwrap();
        assert!(ridge > 1.0);
        assert!(d[0] + d[1] > 0.0);
    }
}

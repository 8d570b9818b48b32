//! Penalized bivariate-Gaussian likelihood in the spline coefficients and its maximizer.

mod design;
mod fisher;
mod newton;
mod objective;

pub use design::{estimate_variances, eta, Design, VarianceEstimates};
pub use fisher::{eta_of_rho, rho_of_eta, AsCorrelation, Correlation};
pub use newton::{newton_raphson, NewtonControls, NewtonReport};
pub use objective::{gradient, hessian, loglik, observation_loglik, penalized_loglik, penalty_value};


/// Stacked spline coefficients `theta = (theta_1, ..., theta_p)`, each block of length `q`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct ThetaVector(pub Vec<f64>);

impl ThetaVector {
    pub fn zeros(q: usize, p: usize) -> Self {
        ThetaVector(vec![0.0; q * p])
    }

    pub fn block(&self, k: usize, q: usize) -> &[f64] {
        &self.0[k * q..(k + 1) * q]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

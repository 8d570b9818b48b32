//! Time-varying, covariate-dependent correlation (TiVAC) models for
//! bivariate longitudinal outcomes.
//!
//! The correlation of two concurrently measured outcomes is modeled as
//! `rho(t, x) = tanh(eta / 2)` with `eta = sum_k x_k beta_k(t)`, each
//! `beta_k` a penalized cubic B-spline. Coefficients are estimated by
//! Newton-Raphson on the penalized likelihood, smoothing parameters by
//! subject-level cross-validation, and uncertainty by nested-bootstrap
//! simultaneous confidence bands.

pub mod dataset;
pub mod error;
pub mod inference;
pub mod likelihood;
pub mod model;
pub mod rng;
pub mod simulation;
pub mod splines;

pub use dataset::{center_by_group, load_csv, quantile_transform, LongitudinalDataset, SubjectRecord};
pub use error::{Result, TivacError};
pub use inference::{bootstrap_scb, significant_intervals, BandConfig, BandResult};
pub use likelihood::{eta_of_rho, rho_of_eta, Correlation, NewtonControls, NewtonReport, ThetaVector, VarianceEstimates};
pub use model::{fit, FitConfig, FittedModel};
pub use splines::{difference_penalty, make_spec, PenaltyMatrix, SplineSpec};

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serde helpers writing floats through [`format_f64`].
pub(crate) mod full_precision {
    use serde::Serializer;

    pub fn f64<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_f64(*v))
    }

    pub fn option<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.serialize_str(&super::format_f64(*v)),
            None => s.serialize_none(),
        }
    }
}

/// `points` equally spaced values covering `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..points)
            .map(|i| {
                if i == points - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (points - 1) as f64
                }
            })
            .collect(),
    }
}

//! The Fisher map between a correlation and the real line,
//! `eta = ln((1 + rho) / (1 - rho))`, inverse `rho = tanh(eta / 2)`.

use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Result, TivacError};

/// Largest `f64` strictly below one.
const RHO_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

/// A correlation in `(-1, 1)` that also carries `1 - |rho|` at full relative
/// precision, so that strong correlations map back to `eta` without the
/// cancellation `1 - rho` would suffer in plain `f64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    value: f64,
    complement: f64,
}

impl Correlation {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho.abs() < 1.0) {
            return Err(TivacError::CorrelationOutOfRange(rho));
        }
        Ok(Correlation {
            value: rho,
            complement: 1.0 - rho.abs(),
        })
    }

    pub fn value(self) -> f64 {
        self.value
    }

    /// `1 - |rho|`.
    pub fn complement(self) -> f64 {
        self.complement
    }
}

impl From<Correlation> for f64 {
    fn from(c: Correlation) -> f64 {
        c.value
    }
}

impl fmt::Display for Correlation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.value.fmt(f)
    }
}

impl Serialize for Correlation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value)
    }
}

/// Accepted by [`eta_of_rho`]: a raw `f64` (validated) or a [`Correlation`].
pub trait AsCorrelation {
    fn as_correlation(self) -> Result<Correlation>;
}

impl AsCorrelation for f64 {
    fn as_correlation(self) -> Result<Correlation> {
        Correlation::new(self)
    }
}

impl AsCorrelation for Correlation {
    fn as_correlation(self) -> Result<Correlation> {
        Ok(self)
    }
}

/// `tanh(eta / 2)`, kept strictly inside `(-1, 1)`.
pub fn rho_of_eta(eta: f64) -> Correlation {
    let value = (eta / 2.0).tanh().clamp(-RHO_MAX, RHO_MAX);
    // 1 - tanh(|eta|/2) = 2 / (exp(|eta|) + 1)
    let complement = if value.abs() < 0.5 {
        1.0 - value.abs()
    } else {
        (2.0 / (eta.abs().exp() + 1.0)).max(f64::MIN_POSITIVE)
    };
    Correlation { value, complement }
}

/// `ln((1 + rho) / (1 - rho))`; fails unless `|rho| < 1`.
pub fn eta_of_rho(rho: impl AsCorrelation) -> Result<f64> {
    let rho = rho.as_correlation()?;
    if rho.value.abs() < 0.5 {
        return Ok(2.0 * rho.value.atanh());
    }
    let c = rho.complement;
    Ok(rho.value.signum() * ((2.0 - c).ln() - c.ln()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(eta_of_rho(0.0).unwrap(), 0.0);
        assert_eq!(rho_of_eta(0.0).value(), 0.0);
        assert!((eta_of_rho(0.5).unwrap() - 3f64.ln()).abs() < 1e-15);
        assert!((eta_of_rho(-0.5).unwrap() + 3f64.ln()).abs() < 1e-15);
        // tanh(5) to 16 digits
        assert!((rho_of_eta(10.0).value() - 0.999_909_204_262_595_1).abs() < 1e-15);
    }

    #[test]
    fn rejects_boundary() {
        assert!(eta_of_rho(1.0).is_err());
        assert!(eta_of_rho(-1.0).is_err());
        assert!(eta_of_rho(f64::NAN).is_err());
    }

    #[test]
    fn extreme_eta_stays_inside() {
        for eta in [40.0, 80.0, 700.0, 1e6, f64::MAX] {
            let r = rho_of_eta(eta).value();
            assert!(r < 1.0 && r > 0.0);
            assert!(rho_of_eta(-eta).value() > -1.0);
        }
    }

    #[test]
    fn plain_f64_round_trip() {
        for i in -100..=100 {
            let rho = i as f64 / 101.0;
            let back = rho_of_eta(eta_of_rho(rho).unwrap()).value();
            assert!((back - rho).abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip_on_wide_range() {
        for i in 0..=4000 {
            let x = -20.0 + 40.0 * i as f64 / 4000.0;
            let back = eta_of_rho(rho_of_eta(x)).unwrap();
            assert!((back - x).abs() < 1e-10, "x={x} back={back}");
        }
    }
}

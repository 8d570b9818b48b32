use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{LongitudinalDataset, SubjectRecord};
use crate::error::{Result, TivacError};
use crate::likelihood::{rho_of_eta, Correlation};
use crate::rng::{stream, StreamKind};

/// Trajectory pattern of a true coefficient function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Linear,
    Seasonal,
    Logistic,
    /// Identically zero; used for null-effect calibration runs.
    Zero,
}

impl FromStr for Shape {
    type Err = TivacError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Shape::Linear),
            "seasonal" => Ok(Shape::Seasonal),
            "logistic" => Ok(Shape::Logistic),
            "zero" => Ok(Shape::Zero),
            other => Err(TivacError::UnknownShape(other.to_string())),
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Linear => "linear",
            Shape::Seasonal => "seasonal",
            Shape::Logistic => "logistic",
            Shape::Zero => "zero",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Beta0,
    Beta1,
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// True coefficient value at normalized time `u = t / t_max`.
pub fn coefficient_function(shape: Shape, role: Role, u: f64) -> f64 {
    match (shape, role) {
        (Shape::Linear, Role::Beta0) => -0.5 + 1.5 * u,
        (Shape::Linear, Role::Beta1) => 1.0 - 0.8 * u,
        (Shape::Seasonal, Role::Beta0) => 0.6 * (2.0 * PI * u).sin(),
        (Shape::Seasonal, Role::Beta1) => 0.8 * (2.0 * PI * u).cos(),
        (Shape::Logistic, Role::Beta0) => -0.8 + 1.6 * logistic(10.0 * (u - 0.5)),
        (Shape::Logistic, Role::Beta1) => 1.2 * logistic(10.0 * (u - 0.4)) - 0.4,
        (Shape::Zero, _) => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    /// `X = 0` for the first half of subjects, `X = 1` for the rest.
    Binary,
    /// `X ~ Uniform[0, 1]`.
    Continuous,
}

impl fmt::Display for CovariateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovariateKind::Binary => "binary",
            CovariateKind::Continuous => "continuous",
        })
    }
}

/// Number of observation times per subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeDesign {
    #[serde(rename = "T_Low")]
    Low,
    #[serde(rename = "T_Moderate")]
    Moderate,
    #[serde(rename = "T_High")]
    High,
    Custom { min_m: usize, max_m: usize },
}

impl TimeDesign {
    pub fn bounds(self) -> (usize, usize) {
        match self {
            TimeDesign::Low => (3, 10),
            TimeDesign::Moderate => (3, 40),
            TimeDesign::High => (40, 40),
            TimeDesign::Custom { min_m, max_m } => (min_m, max_m),
        }
    }
}

impl fmt::Display for TimeDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeDesign::Low => f.write_str("T_Low"),
            TimeDesign::Moderate => f.write_str("T_Moderate"),
            TimeDesign::High => f.write_str("T_High"),
            TimeDesign::Custom { min_m, max_m } => write!(f, "Custom({min_m};{max_m})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ShapePair {
    pub beta0: Shape,
    pub beta1: Shape,
}

impl fmt::Display for ShapePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.beta0 == self.beta1 {
            write!(f, "{}", self.beta0)
        } else {
            write!(f, "{}/{}", self.beta0, self.beta1)
        }
    }
}

/// Generative configuration for one simulation cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub covariate_kind: CovariateKind,
    pub shape: ShapePair,
    pub time_design: TimeDesign,
    pub n: usize,
    pub t_max: usize,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
    pub noise_sd: f64,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ShapeRepr {
    Both(String),
    Each { beta0: String, beta1: String },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRepr {
    name: Option<String>,
    covariate_kind: CovariateKind,
    shape: ShapeRepr,
    #[serde(default = "default_design")]
    time_design: TimeDesign,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "default_t_max")]
    t_max: usize,
    #[serde(default = "one")]
    sigma1_sq: f64,
    #[serde(default = "four")]
    sigma2_sq: f64,
    #[serde(default)]
    noise_sd: f64,
    #[serde(default = "default_reps")]
    replications: usize,
    #[serde(default)]
    seed: u64,
}

fn default_design() -> TimeDesign {
    TimeDesign::Moderate
}
fn default_n() -> usize {
    300
}
fn default_t_max() -> usize {
    500
}
fn one() -> f64 {
    1.0
}
fn four() -> f64 {
    4.0
}
fn default_reps() -> usize {
    50
}

impl ScenarioSpec {
    /// Full-scale defaults (`n = 300`, `t_max = 500`, 50 replications, `T_Moderate`).
    pub fn new(covariate_kind: CovariateKind, shape: Shape) -> Self {
        let mut spec = ScenarioSpec {
            name: String::new(),
            covariate_kind,
            shape: ShapePair { beta0: shape, beta1: shape },
            time_design: TimeDesign::Moderate,
            n: default_n(),
            t_max: default_t_max(),
            sigma1_sq: 1.0,
            sigma2_sq: 4.0,
            noise_sd: 0.0,
            replications: default_reps(),
            seed: 0,
        };
        spec.name = spec.default_name();
        spec
    }

    /// `S1`..`S4`: deterministic/noisy crossed with binary/continuous.
    pub fn default_name(&self) -> String {
        let base = match self.covariate_kind {
            CovariateKind::Binary => 1,
            CovariateKind::Continuous => 2,
        };
        let noisy = if self.noise_sd > 0.0 { 2 } else { 0 };
        format!("S{}", base + noisy)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TivacError::InvalidScenario(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.t_max < 2 {
            return bad(format!("t_max must be at least 2, got {}", self.t_max));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd must be non-negative, got {}", self.noise_sd));
        }
        if !(self.sigma1_sq > 0.0 && self.sigma2_sq > 0.0) {
            return bad("variances must be positive".into());
        }
        let (lo, hi) = self.time_design.bounds();
        if lo < 1 || lo > hi {
            return bad(format!("invalid observation-count range [{lo}, {hi}]"));
        }
        if hi > self.t_max {
            return bad(format!("cannot draw {hi} distinct times from 1..={}", self.t_max));
        }
        Ok(())
    }

    /// Parses one scenario object or an array of them.
    pub fn from_json(text: &str) -> Result<Vec<ScenarioSpec>> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let items = match value {
            serde_json::Value::Array(items) => items,
            other => vec![other],
        };
        items
            .into_iter()
            .map(|v| {
                let repr: ScenarioRepr = serde_json::from_value(v)?;
                let shape = match repr.shape {
                    ShapeRepr::Both(s) => {
                        let s: Shape = s.parse()?;
                        ShapePair { beta0: s, beta1: s }
                    }
                    ShapeRepr::Each { beta0, beta1 } => ShapePair {
                        beta0: beta0.parse()?,
                        beta1: beta1.parse()?,
                    },
                };
                let mut spec = ScenarioSpec {
                    name: String::new(),
                    covariate_kind: repr.covariate_kind,
                    shape,
                    time_design: repr.time_design,
                    n: repr.n,
                    t_max: repr.t_max,
                    sigma1_sq: repr.sigma1_sq,
                    sigma2_sq: repr.sigma2_sq,
                    noise_sd: repr.noise_sd,
                    replications: repr.replications,
                    seed: repr.seed,
                };
                spec.name = repr.name.unwrap_or_else(|| spec.default_name());
                spec.validate()?;
                Ok(spec)
            })
            .collect()
    }

    pub fn truth(&self) -> TrueCorrelation {
        TrueCorrelation {
            shape: self.shape,
            t_max: self.t_max as f64,
        }
    }
}

/// The data-generating correlation `rho(t, x) = tanh((beta0(t) + beta1(t) x) / 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueCorrelation {
    pub shape: ShapePair,
    pub t_max: f64,
}

impl TrueCorrelation {
    pub fn beta(&self, role: Role, t: f64) -> f64 {
        let shape = match role {
            Role::Beta0 => self.shape.beta0,
            Role::Beta1 => self.shape.beta1,
        };
        coefficient_function(shape, role, t / self.t_max)
    }

    pub fn eta(&self, t: f64, x: f64) -> f64 {
        self.beta(Role::Beta0, t) + self.beta(Role::Beta1, t) * x
    }

    pub fn rho(&self, t: f64, x: f64) -> f64 {
        rho_of_eta(self.eta(t, x)).value()
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    /// Covariates are `[intercept, x]`.
    pub data: LongitudinalDataset,
    pub truth: TrueCorrelation,
}

/// One outcome pair with standard deviations `s1`, `s2` and correlation `rho`.
pub fn draw_pair<R: Rng + ?Sized>(rng: &mut R, rho: Correlation, s1: f64, s2: f64) -> [f64; 2] {
    let r = rho.value();
    let c = rho.complement();
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    // sqrt(1 - rho^2) = sqrt(c (2 - c)) with c = 1 - |rho|
    [s1 * z1, s2 * (r * z1 + (c * (2.0 - c)).sqrt() * z2)]
}

/// Draws replication `replication` of `spec`; deterministic in `(spec.seed, replication)`.
pub fn generate(spec: &ScenarioSpec, replication: usize) -> Result<GeneratedDataset> {
    spec.validate()?;
    let mut rng = stream(spec.seed, StreamKind::Simulation, &[replication as u64]);
    let truth = spec.truth();
    let (lo, hi) = spec.time_design.bounds();
    let (s1, s2) = (spec.sigma1_sq.sqrt(), spec.sigma2_sq.sqrt());

    let mut subjects = Vec::with_capacity(spec.n);
    let mut covariates = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let x = match spec.covariate_kind {
            CovariateKind::Binary => {
                if i < spec.n / 2 {
                    0.0
                } else {
                    1.0
                }
            }
            CovariateKind::Continuous => rng.random::<f64>(),
        };
        let m = rng.random_range(lo..=hi);
        let mut times: Vec<usize> = sample(&mut rng, spec.t_max, m).into_iter().map(|t| t + 1).collect();
        times.sort_unstable();
        let mut outcomes = Vec::with_capacity(m);
        for &t in &times {
            let mut eta = truth.eta(t as f64, x);
            if spec.noise_sd > 0.0 {
                eta += spec.noise_sd * rng.sample::<f64, _>(StandardNormal);
            }
            outcomes.push(draw_pair(&mut rng, rho_of_eta(eta), s1, s2));
        }
        subjects.push(SubjectRecord {
            subject_id: format!("s{:04}", i + 1),
            times: times.into_iter().map(|t| t as f64).collect(),
            outcomes,
        });
        covariates.push(vec![1.0, x]);
    }
    let data = LongitudinalDataset::new(subjects, covariates, vec!["intercept".into(), "x".into()])?;
    Ok(GeneratedDataset { data, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coefficient_values() {
        assert_eq!(coefficient_function(Shape::Linear, Role::Beta0, 0.0), -0.5);
        assert_eq!(coefficient_function(Shape::Seasonal, Role::Beta0, 0.0), 0.0);
        assert!(coefficient_function(Shape::Logistic, Role::Beta0, 0.5).abs() < 1e-15);
        assert_eq!(coefficient_function(Shape::Zero, Role::Beta1, 0.3), 0.0);
    }

    /// Re-derivation of the coefficient formulas from their closed forms.
    #[test]
    fn coefficient_functions_match_reimplementation() {
        for i in 0..=50 {
            let u = i as f64 / 50.0;
            let sig = |z: f64| z.exp() / (1.0 + z.exp());
            let expected = [
                (Shape::Linear, Role::Beta0, 1.5 * u - 0.5),
                (Shape::Linear, Role::Beta1, 1.0 - 0.8 * u),
                (Shape::Seasonal, Role::Beta0, 0.6 * (std::f64::consts::TAU * u).sin()),
                (Shape::Seasonal, Role::Beta1, 0.8 * (std::f64::consts::TAU * u).cos()),
                (Shape::Logistic, Role::Beta0, 1.6 * sig(10.0 * u - 5.0) - 0.8),
                (Shape::Logistic, Role::Beta1, 1.2 * sig(10.0 * u - 4.0) - 0.4),
            ];
            for (shape, role, v) in expected {
                assert!((coefficient_function(shape, role, u) - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn high_design_has_forty_times() {
        let mut spec = ScenarioSpec::new(CovariateKind::Binary, Shape::Linear);
        spec.time_design = TimeDesign::High;
        spec.n = 20;
        spec.t_max = 60;
        let g = generate(&spec, 0).unwrap();
        assert!(g.data.subjects().iter().all(|s| s.len() == 40));
        let xs: Vec<f64> = g.data.covariates().iter().map(|r| r[1]).collect();
        assert_eq!(xs.iter().filter(|&&x| x == 0.0).count(), 10);
        assert!(g.data.covariates().iter().all(|r| r[0] == 1.0));
    }

    #[test]
    fn deterministic_per_replication() {
        let mut spec = ScenarioSpec::new(CovariateKind::Continuous, Shape::Seasonal);
        spec.n = 15;
        spec.t_max = 50;
        spec.noise_sd = 0.2;
        let a = generate(&spec, 3).unwrap();
        let b = generate(&spec, 3).unwrap();
        let c = generate(&spec, 4).unwrap();
        assert_eq!(a.data, b.data);
        assert_ne!(a.data, c.data);
        for s in a.data.subjects() {
            assert!(s.times.iter().all(|&t| (1.0..=50.0).contains(&t)));
            assert!(s.len() >= 3 && s.len() <= 40);
        }
    }

    #[test]
    fn rejects_impossible_designs() {
        let mut spec = ScenarioSpec::new(CovariateKind::Binary, Shape::Linear);
        spec.t_max = 30;
        assert!(generate(&spec, 0).is_err());
        spec.time_design = TimeDesign::Custom { min_m: 5, max_m: 4 };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn truth_without_noise() {
        let spec = ScenarioSpec::new(CovariateKind::Binary, Shape::Logistic);
        let truth = spec.truth();
        let t = 123.0;
        let expected = ((coefficient_function(Shape::Logistic, Role::Beta0, t / 500.0)) / 2.0).tanh();
        assert!((truth.rho(t, 0.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn parses_configs() {
        let specs = ScenarioSpec::from_json(
            r#"[{"covariate_kind": "binary", "shape": "linear", "n": 40, "t_max": 100, "replications": 2},
                {"covariate_kind": "continuous", "shape": {"beta0": "seasonal", "beta1": "zero"},
                 "time_design": {"Custom": {"min_m": 2, "max_m": 5}}, "noise_sd": 0.3}]"#,
        )
        .unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].name, "S1");
        assert_eq!(specs[0].time_design, TimeDesign::Moderate);
        assert_eq!(specs[1].name, "S4");
        assert_eq!(specs[1].shape.to_string(), "seasonal/zero");
        let err = ScenarioSpec::from_json(r#"{"covariate_kind": "binary", "shape": "wiggly"}"#).unwrap_err();
        assert!(matches!(err, TivacError::UnknownShape(s) if s == "wiggly"));
    }
}

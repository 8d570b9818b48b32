//! Synthetic data with known correlation trajectories, an empirical
//! baseline estimator, and the benchmark harness comparing them.

pub mod benchmark;
pub mod empirical;
pub mod scenario;

pub use benchmark::{
    evaluation_grid, rmse, run_benchmark, AggregateRow, BenchmarkOptions, BenchmarkReport, BenchmarkRow,
    CorrelationEstimator, EmpiricalEstimator, TivacEstimator,
};
pub use empirical::{empirical_baseline, loess_at, pearson, select_span, EmpiricalCurve};
pub use scenario::{
    coefficient_function, draw_pair, generate, CovariateKind, GeneratedDataset, Role, ScenarioSpec, Shape, ShapePair, TimeDesign,
    TrueCorrelation,
};

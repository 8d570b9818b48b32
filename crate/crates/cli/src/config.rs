use std::path::Path;

use serde::{Deserialize, Serialize};
use tivac::model::DEFAULT_GRID_POINTS;
use tivac::{BandConfig, FitConfig, NewtonControls};

use crate::args::ModelArgs;
use crate::error::CliError;

/// Optional defaults read from `--config`; every field may be overridden on the command line.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub grid_points: Option<usize>,
    pub knots: Option<usize>,
    pub order: Option<usize>,
    pub difference_order: Option<usize>,
    pub lambda_grid: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    pub folds: Option<usize>,
    pub outer_replicates: Option<usize>,
    pub inner_replicates: Option<usize>,
    pub alpha: Option<f64>,
    pub newton: Option<NewtonControls>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::user("bad_config", format!("{}: {e}", path.display())))
    }
}

/// Model options after applying flag > file > default.
#[derive(Debug, Clone, Serialize)]
pub struct ResolvedModel {
    pub fit: FitConfig,
    pub lambdas: Option<Vec<f64>>,
}

pub fn resolve_model(flags: &ModelArgs, file: &FileConfig, seed: u64) -> ResolvedModel {
    let default = FitConfig::default();
    let lambdas = flags.lambdas.clone().or_else(|| {
        // a grid on the command line outranks fixed values from the file
        if flags.lambda_grid.is_some() {
            None
        } else {
            file.lambdas.clone()
        }
    });
    ResolvedModel {
        fit: FitConfig {
            interior_knots: flags.knots.or(file.knots).or(default.interior_knots),
            order: flags.order.or(file.order).unwrap_or(default.order),
            difference_order: file.difference_order.unwrap_or(default.difference_order),
            lambda_grid: flags.lambda_grid.clone().or(file.lambda_grid.clone()).unwrap_or(default.lambda_grid),
            cv_folds: flags.folds.or(file.folds).unwrap_or(default.cv_folds),
            newton: file.newton.unwrap_or(default.newton),
            seed,
        },
        lambdas,
    }
}

pub fn resolve_grid_points(flag: Option<usize>, file: &FileConfig) -> Result<usize, CliError> {
    let points = flag.or(file.grid_points).unwrap_or(DEFAULT_GRID_POINTS);
    if points == 0 {
        return Err(CliError::user("bad_grid", "--grid-points must be at least 1"));
    }
    Ok(points)
}

pub fn resolve_band(
    outer: Option<usize>,
    inner: Option<usize>,
    alpha: Option<f64>,
    grid: Vec<f64>,
    file: &FileConfig,
    seed: u64,
) -> Result<BandConfig, CliError> {
    let default = BandConfig::default();
    let alpha = alpha.or(file.alpha).unwrap_or(default.alpha);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::user("bad_alpha", format!("alpha must be strictly between 0 and 1, got {alpha}")));
    }
    Ok(BandConfig {
        outer_replicates: outer.or(file.outer_replicates).unwrap_or(default.outer_replicates),
        inner_replicates: inner.or(file.inner_replicates).unwrap_or(default.inner_replicates),
        alpha,
        grid: Some(grid),
        seed,
        newton: file.newton.unwrap_or(default.newton),
    })
}

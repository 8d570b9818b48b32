use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};
use tivac::dataset::{load_csv_with, LoadOptions};
use tivac::model::fit_with_lambdas;
use tivac::simulation::{
    generate, run_benchmark, BenchmarkOptions, CorrelationEstimator, EmpiricalEstimator, ScenarioSpec, TivacEstimator,
};
use tivac::{bootstrap_scb, fit, format_f64, linspace, FittedModel, LongitudinalDataset};

use crate::args::{BandCmd, BenchmarkCmd, DataArgs, FitCmd, GlobalArgs, PredictCmd, SimulateCmd};
use crate::config::{resolve_band, resolve_grid_points, resolve_model, FileConfig};
use crate::error::CliError;

type CliResult<T> = Result<T, CliError>;

/// Shared state for one invocation.
pub struct Run<'a> {
    pub global: &'a GlobalArgs,
    pub file: FileConfig,
    pub seed: u64,
    pub started: Instant,
    outputs: Vec<String>,
}

impl<'a> Run<'a> {
    pub fn new(global: &'a GlobalArgs, file: FileConfig) -> CliResult<Self> {
        fs::create_dir_all(&global.out_dir).map_err(|e| CliError::io(&global.out_dir, e))?;
        let seed = global.seed.or(file.seed).unwrap_or(0);
        Ok(Run {
            global,
            file,
            seed,
            started: Instant::now(),
            outputs: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.global.out_dir.join(name)
    }

    /// Writes `<command>.run.json` with the resolved configuration.
    fn sidecar(mut self, command: &str, inputs: Value, config: impl Serialize) -> CliResult<()> {
        let path = self.global.out_dir.join(format!("{command}.run.json"));
        let mut record = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "threads": rayon::current_num_threads(),
            "inputs": inputs,
            "config": config,
            "outputs": std::mem::take(&mut self.outputs),
        });
        if !self.global.no_timing {
            record["wall_time_seconds"] = json!(self.started.elapsed().as_secs_f64());
        }
        let text = serde_json::to_string_pretty(&record).map_err(|e| CliError::internal("serialize", e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }
}

fn write_lines(path: &Path, header: &str, rows: impl IntoIterator<Item = Vec<f64>>) -> CliResult<()> {
    let io = |e| CliError::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{header}").map_err(io)?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(format_f64).collect();
        writeln!(w, "{}", cells.join(",")).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::internal("serialize", e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn load_data(args: &DataArgs) -> CliResult<LongitudinalDataset> {
    let options = LoadOptions {
        allow_duplicate_times: args.allow_duplicate_times,
    };
    Ok(load_csv_with(&args.outcomes, &args.covariates, options)?)
}

fn data_inputs(args: &DataArgs) -> Value {
    json!({
        "outcomes": args.outcomes.display().to_string(),
        "covariates": args.covariates.display().to_string(),
        "allow_duplicate_times": args.allow_duplicate_times,
    })
}

pub fn fit_cmd(mut run: Run<'_>, cmd: &FitCmd) -> CliResult<()> {
    let resolved = resolve_model(&cmd.model, &run.file, run.seed);
    let points = resolve_grid_points(cmd.grid_points, &run.file)?;
    log::info!("fit config: {}", serde_json::to_string(&resolved).unwrap_or_default());
    let data = load_data(&cmd.data)?;
    let model = match &resolved.lambdas {
        Some(l) => fit_with_lambdas(&data, &resolved.fit, l)?,
        None => fit(&data, &resolved.fit)?,
    };

    let path = run.path("model.json");
    model.save(&path)?;
    let grid = model.default_grid(points);
    let curves = (0..model.p())
        .map(|k| model.coefficient_curve(k, &grid))
        .collect::<Result<Vec<_>, _>>()?;
    let header = std::iter::once("t".to_string())
        .chain(model.covariate_names.iter().cloned())
        .collect::<Vec<_>>()
        .join(",");
    let path = run.path("coefficients.csv");
    write_lines(
        &path,
        &header,
        grid.iter()
            .enumerate()
            .map(|(i, t)| std::iter::once(*t).chain(curves.iter().map(|c| c[i])).collect()),
    )?;
    run.sidecar(
        "fit",
        data_inputs(&cmd.data),
        json!({ "model": resolved, "grid_points": points, "lambdas_hat": model.lambdas_hat }),
    )
}

fn parse_vector(s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::user("bad_covariates", format!("cannot parse covariate value `{v}`")))
        })
        .collect()
}

fn covariate_sweep(spec: &str, base: &[f64]) -> CliResult<Vec<Vec<f64>>> {
    let bad = || CliError::user("bad_covariate_grid", format!("expected K:LO:HI:N, got `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 4 {
        return Err(bad());
    }
    let k: usize = parts[0].parse().map_err(|_| bad())?;
    let lo: f64 = parts[1].parse().map_err(|_| bad())?;
    let hi: f64 = parts[2].parse().map_err(|_| bad())?;
    let n: usize = parts[3].parse().map_err(|_| bad())?;
    if k >= base.len() || n == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    Ok(linspace(lo, hi, n)
        .into_iter()
        .map(|v| {
            let mut x = base.to_vec();
            x[k] = v;
            x
        })
        .collect())
}

pub fn predict_cmd(mut run: Run<'_>, cmd: &PredictCmd) -> CliResult<()> {
    let model = FittedModel::load(&cmd.model)?;
    let mut xs = cmd.x.iter().map(|s| parse_vector(s)).collect::<CliResult<Vec<_>>>()?;
    if let Some(x) = xs.iter().find(|x| x.len() != model.p()) {
        return Err(CliError::user(
            "bad_covariates",
            format!("model has {} covariates, got a vector of length {}", model.p(), x.len()),
        ));
    }
    if let Some(sweep) = &cmd.covariate_grid {
        xs = covariate_sweep(sweep, &xs[0])?;
    }
    let grid = match &cmd.times {
        Some(t) => t.clone(),
        None => model.default_grid(resolve_grid_points(cmd.grid_points, &run.file)?),
    };
    let mut rows = Vec::with_capacity(xs.len() * grid.len());
    for x in &xs {
        let rho = model.correlation_surface(x, &grid)?;
        for (t, r) in grid.iter().zip(rho) {
            rows.push(std::iter::once(*t).chain(x.iter().copied()).chain([r]).collect());
        }
    }
    let header = std::iter::once("t".to_string())
        .chain(model.covariate_names.iter().cloned())
        .chain(["rho".to_string()])
        .collect::<Vec<_>>()
        .join(",");
    let path = run.path("surface.csv");
    write_lines(&path, &header, rows)?;
    run.sidecar(
        "predict",
        json!({ "model": cmd.model.display().to_string() }),
        json!({ "x": xs, "times": grid.len(), "covariate_grid": cmd.covariate_grid }),
    )
}

pub fn band_cmd(mut run: Run<'_>, cmd: &BandCmd) -> CliResult<()> {
    let model = FittedModel::load(&cmd.model)?;
    let points = resolve_grid_points(cmd.grid_points, &run.file)?;
    let config = resolve_band(cmd.outer, cmd.inner, cmd.alpha, model.default_grid(points), &run.file, run.seed)?;
    log::info!(
        "band config: B={} M={} alpha={} seed={}",
        config.outer_replicates,
        config.inner_replicates,
        config.alpha,
        config.seed
    );
    let data = load_data(&cmd.data)?;
    let bands = bootstrap_scb(&data, &model, &config)?;
    for band in &bands {
        let csv = run.path(&format!("band_{}.csv", band.covariate));
        band.write_csv(&csv)?;
        let json = run.path(&format!("band_{}.json", band.covariate));
        write_json(&json, &band.summary())?;
    }
    let mut inputs = data_inputs(&cmd.data);
    inputs["model"] = json!(cmd.model.display().to_string());
    run.sidecar(
        "band",
        inputs,
        json!({
            "outer_replicates": config.outer_replicates,
            "inner_replicates": config.inner_replicates,
            "alpha": config.alpha,
            "grid_points": points,
            "newton": config.newton,
        }),
    )
}

fn load_scenarios(path: &Path, seed: Option<u64>, replications: Option<usize>) -> CliResult<Vec<ScenarioSpec>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut specs = ScenarioSpec::from_json(&text)?;
    let mut names = std::collections::BTreeSet::new();
    for s in &mut specs {
        if let Some(seed) = seed {
            s.seed = seed;
        }
        if let Some(r) = replications {
            s.replications = r;
        }
        if !names.insert(s.name.clone()) {
            return Err(CliError::user("bad_scenario", format!("duplicate scenario name `{}`", s.name)));
        }
    }
    Ok(specs)
}

pub fn simulate_cmd(mut run: Run<'_>, cmd: &SimulateCmd) -> CliResult<()> {
    let specs = load_scenarios(&cmd.scenario, run.global.seed.or(run.file.seed), None)?;
    for spec in &specs {
        let reps: Vec<usize> = match cmd.replication {
            Some(r) => vec![r],
            None => (0..spec.replications).collect(),
        };
        for r in reps {
            let generated = generate(spec, r)?;
            let outcomes = run.path(&format!("{}_r{r}_outcomes.csv", spec.name));
            let covariates = run.path(&format!("{}_r{r}_covariates.csv", spec.name));
            generated.data.write_csv(&outcomes, &covariates)?;
        }
    }
    run.sidecar(
        "simulate",
        json!({ "scenario": cmd.scenario.display().to_string() }),
        json!({ "scenarios": specs, "replication": cmd.replication }),
    )
}

pub fn benchmark_cmd(mut run: Run<'_>, cmd: &BenchmarkCmd) -> CliResult<()> {
    let specs = load_scenarios(&cmd.scenario, run.global.seed.or(run.file.seed), cmd.replications)?;
    let resolved = resolve_model(&cmd.model, &run.file, run.seed);
    if resolved.lambdas.is_some() {
        return Err(CliError::user("invalid_config", "--lambdas is not supported by benchmark; use --lambda-grid"));
    }
    let tivac = TivacEstimator {
        config: resolved.fit.clone(),
    };
    let mut methods: Vec<&dyn CorrelationEstimator> = Vec::new();
    for m in &cmd.methods {
        match m.as_str() {
            "tivac" => methods.push(&tivac),
            "empirical" => methods.push(&EmpiricalEstimator),
            other => {
                return Err(CliError::user(
                    "bad_method",
                    format!("unknown method `{other}` (expected tivac or empirical)"),
                ))
            }
        }
    }
    let report = run_benchmark(
        &specs,
        &BenchmarkOptions {
            methods,
            record_timing: !run.global.no_timing,
        },
    )?;
    let path = run.path("report.csv");
    report.write_csv(&path)?;
    let path = run.path("aggregate.csv");
    report.write_aggregate_csv(&path)?;
    let mut config = BTreeMap::new();
    config.insert("scenarios", json!(specs));
    config.insert("methods", json!(cmd.methods));
    config.insert("model", json!(resolved.fit));
    run.sidecar("benchmark", json!({ "scenario": cmd.scenario.display().to_string() }), config)
}

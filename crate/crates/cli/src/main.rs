//! `tivac` command-line tool.

mod args;
mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Run;
use config::FileConfig;
use error::CliError;

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.global.config.as_deref())?;
    let threads = cli.global.threads.or(file.threads).unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::internal("thread_pool", e.to_string()))?;
    pool.install(|| {
        let run = Run::new(&cli.global, file)?;
        log::info!("seed {} on {} threads, writing to {}", run.seed, rayon::current_num_threads(), cli.global.out_dir.display());
        match &cli.command {
            Command::Fit(cmd) => commands::fit_cmd(run, cmd),
            Command::Predict(cmd) => commands::predict_cmd(run, cmd),
            Command::Band(cmd) => commands::band_cmd(run, cmd),
            Command::Simulate(cmd) => commands::simulate_cmd(run, cmd),
            Command::Benchmark(cmd) => commands::benchmark_cmd(run, cmd),
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", CliError::user("usage", first));
            return ExitCode::from(1);
        }
    };
    init_logging(cli.global.verbose);
    let outcome = std::panic::catch_unwind(|| run(&cli))
        .unwrap_or_else(|_| Err(CliError::internal("internal", "unexpected panic")));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

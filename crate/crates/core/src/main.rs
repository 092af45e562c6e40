use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::LevelFilter;
use rayon::prelude::*;

use thsq_core::config::{parse_config_with, ConfigError, ParseOptions, Scenario};
use thsq_core::run::{failure_line, run_scenario, write_summary, RunError, RunOptions};

#[derive(Parser)]
#[command(name = "thsq", about = "Non-Hermitian quantum evolution and control", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenarios; several configs run concurrently.
    Run {
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the integrator step count of every scenario.
        #[arg(long)]
        steps: Option<usize>,
        /// Seed for randomly initialized fields.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Parse and validate scenarios without running them.
    Validate {
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
    },
    /// Print the version.
    Version,
}

fn init_logging() {
    let level = match std::env::var("THSQ_LOG").as_deref() {
        Ok("quiet") => LevelFilter::Error,
        Ok("info") => LevelFilter::Info,
        Ok("debug") => LevelFilter::Debug,
        _ => LevelFilter::Warn,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
}

fn load(path: &Path, opts: &ParseOptions) -> Result<Scenario, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(parse_config_with(&text, opts)?)
}

fn fallback_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into())
}

/// Runs one config; returns its exit code.
fn run_one(path: &Path, out: &Path, steps: Option<usize>, seed: u64) -> i32 {
    let start = Instant::now();
    let mut name = fallback_name(path);
    let mut mode = None;
    let result = load(path, &ParseOptions { seed }).and_then(|mut scenario| {
        name = scenario.name.clone();
        mode = Some(scenario.mode);
        if let Some(n) = steps {
            scenario.grid = scenario.grid.with_steps(n);
            scenario.grid.validate().map_err(|e| ConfigError::Validation {
                line: None,
                message: format!("--steps {n}: {e}"),
            })?;
        }
        run_scenario(
            &scenario,
            &RunOptions {
                out_dir: out.to_path_buf(),
            },
        )
    });
    let wall = start.elapsed().as_secs_f64();
    // The error name goes to stderr once; stdout only flags the failure.
    let (line, code) = match &result {
        Ok(report) => {
            println!("{} wall_time={wall:.3}s", report.summary_line());
            (report.summary_line(), 0)
        }
        Err(err) => {
            eprintln!("{}: {err}", path.display());
            println!("name={name} status=failed wall_time={wall:.3}s");
            (failure_line(&name, mode, err), err.exit_code())
        }
    };
    if let Err(err) = write_summary(out, &name, &line) {
        eprintln!("{err}");
        return code.max(1);
    }
    code
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Version => {
            println!("thsq {}", env!("CARGO_PKG_VERSION"));
            0
        }
        Command::Validate { configs } => configs
            .iter()
            .map(|path| match load(path, &ParseOptions::default()) {
                Ok(s) => {
                    println!("{}: ok ({}, n = {})", path.display(), s.mode, s.dim());
                    0
                }
                Err(err) => {
                    eprintln!("{}: {err}", path.display());
                    err.exit_code()
                }
            })
            .max()
            .unwrap_or(0),
        Command::Run {
            configs,
            out,
            steps,
            seed,
        } => {
            // A batch gives each config its own directory under `out`.
            let batch = configs.len() > 1;
            configs
                .par_iter()
                .map(|path| {
                    let dir = if batch {
                        out.join(fallback_name(path))
                    } else {
                        out.clone()
                    };
                    run_one(path, &dir, steps, seed)
                })
                .collect::<Vec<_>>()
                .into_iter()
                .max()
                .unwrap_or(0)
        }
    };
    ExitCode::from(code as u8)
}

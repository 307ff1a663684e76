use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use uos_harness::config::{ConfigError, ExperimentConfig, ExperimentId};
use uos_harness::emit::{self, Format};
use uos_harness::oracle;
use uos_harness::presets;
use uos_harness::runner::run_experiment;

#[derive(Parser)]
#[command(name = "uos-bench", version, about = "Monte Carlo experiments for orthotopic filters with knowledge transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or custom experiment.
    Run {
        /// 1..5 or "custom".
        #[arg(long)]
        experiment: String,
        /// Config file whose keys override the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Divide Monte Carlo runs and horizon by this factor.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = "csv,svg")]
        format: String,
    },
    /// Compare the filter against the brute-force grid oracle.
    Oracle {
        #[arg(long, value_enum, default_value_t = OracleSystem::Scalar)]
        system: OracleSystem,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Number of random instances (scalar system only).
        #[arg(long, default_value_t = 100)]
        instances: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Grid pitch; defaults to a fraction of the state-noise half-width.
        #[arg(long)]
        pitch: Option<f64>,
        #[arg(long, default_value_t = 0.02)]
        rho: f64,
        #[arg(long, default_value_t = 0.05)]
        r: f64,
    },
    /// Parse and validate a config file.
    ValidateConfig { path: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleSystem {
    Scalar,
    System2,
}

enum Failure {
    Config(String),
    AllDiscarded,
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn load_config(experiment: &str, config: Option<&Path>) -> Result<ExperimentConfig, Failure> {
    let id = ExperimentId::parse(experiment).map_err(Failure::Config)?;
    let cfg = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            let cfg = ExperimentConfig::from_toml_str(&text, Some(id))?;
            if cfg.experiment_id != id {
                return Err(Failure::Config(format!(
                    "config file sets experiment_id = {} but --experiment is {id}",
                    cfg.experiment_id
                )));
            }
            cfg
        }
        None => presets::preset(id),
    };
    Ok(cfg)
}

#[allow(clippy::too_many_arguments)]
fn run(
    experiment: &str,
    config: Option<&Path>,
    out: &Path,
    scale: f64,
    seed: Option<u64>,
    workers: Option<usize>,
    format: &str,
) -> Result<(), Failure> {
    if !(scale.is_finite() && scale >= 1.0) {
        return Err(Failure::Config(format!("--scale must be >= 1, got {scale}")));
    }
    if workers == Some(0) {
        return Err(Failure::Config("--workers must be at least 1".into()));
    }
    let formats = Format::parse_list(format).map_err(Failure::Config)?;
    let mut cfg = load_config(experiment, config)?;
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let cfg = cfg.scaled(scale);
    cfg.validate()?;
    let sweep = cfg.n_sources.len() > 1;
    let mut any_kept = false;
    for &n in &cfg.n_sources {
        log::info!("experiment {} with {n} source(s): {} runs per ratio", cfg.experiment_id, cfg.mc_runs);
        let table = run_experiment(&cfg, n, workers).context("experiment failed")?;
        any_kept |= !table.all_discarded();
        let dir = if sweep { out.join(format!("ns_{n}")) } else { out.to_path_buf() };
        let files = emit::emit(&table, &dir, &formats, scale).context("writing results")?;
        for f in files {
            println!("{}", f.display());
        }
    }
    if any_kept {
        Ok(())
    } else {
        Err(Failure::AllDiscarded)
    }
}

fn run_oracle(
    system: OracleSystem,
    steps: usize,
    instances: u64,
    seed: u64,
    pitch: Option<f64>,
    rho: f64,
    r: f64,
) -> Result<(), Failure> {
    let count = match system {
        OracleSystem::Scalar => instances,
        OracleSystem::System2 => 1,
    };
    let mut total_violations = 0;
    for i in 0..count {
        let inst = match system {
            OracleSystem::Scalar => oracle::random_scalar_instance(seed + i, steps),
            OracleSystem::System2 => oracle::system2_instance(seed, steps, rho, r),
        }
        .context("building oracle instance")?;
        let report = oracle::containment_check(
            &inst.model,
            &inst.prior,
            &inst.trajectory,
            pitch.unwrap_or(inst.pitch),
            oracle::DEFAULT_MAX_POINTS,
        )
        .context("oracle run")?;
        total_violations += report.violations.len();
        println!(
            "instance {}: {} steps, {} violations, grid points per step {}..{}",
            seed + i,
            report.steps,
            report.violations.len(),
            report.min_points,
            report.max_points
        );
    }
    println!("total violations: {total_violations}");
    if total_violations == 0 {
        Ok(())
    } else {
        Err(Failure::Other(anyhow::anyhow!("{total_violations} containment violations")))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            experiment,
            config,
            out,
            scale,
            seed,
            workers,
            format,
        } => run(&experiment, config.as_deref(), &out, scale, seed, workers, &format),
        Command::Oracle {
            system,
            steps,
            instances,
            seed,
            pitch,
            rho,
            r,
        } => run_oracle(system, steps, instances, seed, pitch, rho, r),
        Command::ValidateConfig { path } => ExperimentConfig::from_file(&path)
            .map(|cfg| print!("{}", cfg.to_toml_string()))
            .map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::AllDiscarded) => {
            eprintln!("every run was discarded");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

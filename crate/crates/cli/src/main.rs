use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lvtariff_cli::{run_pipeline, PipelineConfig, PipelineError, Stage};

/// Tariff impact studies: synthesize households, optimize their schedules,
/// bill them and run Monte Carlo power-flow studies on a feeder.
#[derive(Debug, Parser)]
#[command(name = "lvtariff", version)]
struct Cli {
    /// Pipeline config (JSON). Defaults apply to anything left out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated stages to run, e.g. `synth,optimize`.
    #[arg(long, global = true, value_delimiter = ',')]
    stages: Option<Vec<Stage>>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the synthesis models and sample the customer pool.
    Synth,
    /// Schedule every pool customer under each tariff and scenario.
    Optimize,
    /// Bill the optimized schedules.
    Bill,
    /// One feeder time series per tariff at the configured penetration.
    Powerflow,
    /// Monte Carlo study over penetration levels.
    Study,
    /// Plot-ready tables from the earlier stages.
    Report,
    /// Run the stages selected by `--stages` or the config (all by default).
    Run,
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        match self {
            Command::Synth => Some(Stage::Synth),
            Command::Optimize => Some(Stage::Optimize),
            Command::Bill => Some(Stage::Bill),
            Command::Powerflow => Some(Stage::Powerflow),
            Command::Study => Some(Stage::Study),
            Command::Report => Some(Stage::Report),
            Command::Run => None,
        }
    }
}

fn configure(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_path(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    match (cli.command.as_ref().and_then(Command::stage), &cli.stages) {
        (Some(_), Some(_)) => {
            return Err(PipelineError::Config(
                "--stages cannot be combined with a stage subcommand".into(),
            ))
        }
        (Some(stage), None) => cfg.stages = vec![stage],
        (None, Some(list)) => cfg.stages = list.clone(),
        (None, None) => {}
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(PipelineError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure(&cli).and_then(|cfg| {
        let manifest = run_pipeline(&cfg)?;
        Ok((cfg, manifest))
    });
    match result {
        Ok((cfg, manifest)) => {
            for r in &manifest.stages {
                if cfg.stages.contains(&r.stage) {
                    eprintln!("{}: {} files written", r.stage, r.outputs.len());
                }
            }
            eprintln!("outputs in {}", cfg.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

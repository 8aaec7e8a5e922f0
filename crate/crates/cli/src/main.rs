use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info, warn};

use slotcast::error::Result;
use slotcast::features::Case;
use slotcast::market_data::{synth_ticks, write_ticks, SynthParams};
use slotcast::runner::{emit_reports, execute, ExperimentConfig, ModelName, ReportBundle, ReportFormat};

#[derive(Parser)]
#[command(name = "slotcast", version, about = "Intraday slot forecasting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its report bundle.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output folder; overrides the config's out_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated model names, replacing the config's list.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<ModelName>>,
        #[arg(long)]
        case: Option<Case>,
    },
    /// Write a synthetic tick CSV.
    Synth {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 520)]
        days: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-emit reports from a saved bundle.
    Report {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        format: ReportFormat,
        /// Defaults to the bundle's folder.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Outcome {
    Complete,
    Partial,
}

fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>, models: Option<Vec<ModelName>>, case: Option<Case>) -> Result<Outcome> {
    let mut config = ExperimentConfig::load(config)?;
    if let Some(out) = out {
        config.experiment.out_dir = out;
    }
    if let Some(seed) = seed {
        config.experiment.seed = seed;
    }
    if let Some(models) = models {
        config.experiment.models = models;
    }
    if let Some(case) = case {
        config.experiment.case = case;
    }
    config.validate()?;
    let (bundle, files) = execute(&config)?;
    info!("wrote {} files to {}", files.len(), config.experiment.out_dir.display());
    for (model, err) in &bundle.errors {
        warn!("{model} failed: {err}");
    }
    Ok(if bundle.is_partial() { Outcome::Partial } else { Outcome::Complete })
}

fn synth(seed: u64, days: usize, out: &Path) -> Result<Outcome> {
    let series = synth_ticks(seed, days, &SynthParams::default())?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_ticks(&series, std::io::BufWriter::new(std::fs::File::create(out)?))?;
    info!("wrote {} ticks to {}", series.len(), out.display());
    Ok(Outcome::Complete)
}

fn report(bundle: &Path, format: ReportFormat, out: Option<PathBuf>) -> Result<Outcome> {
    let loaded = ReportBundle::load(bundle)?;
    let dir = out.unwrap_or_else(|| bundle.parent().map(Path::to_path_buf).unwrap_or_default());
    let files = emit_reports(&loaded, &dir, &[format])?;
    for f in &files {
        println!("{}", f.display());
    }
    Ok(if loaded.is_partial() { Outcome::Partial } else { Outcome::Complete })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // clap's own usage-error code is 2, which here means a partial run
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run { config, out, seed, models, case } => run(&config, out, seed, models, case),
        Command::Synth { seed, days, out } => synth(seed, days, &out),
        Command::Report { bundle, format, out } => report(&bundle, format, out),
    };
    match result {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            error!("{e}");
            ExitCode::from(1)
        }
    }
}

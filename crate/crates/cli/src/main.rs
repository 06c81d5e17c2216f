use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use skewjs_cli::commands;
use skewjs_cli::{CliError, ExperimentConfig};

#[derive(Parser, Debug)]
#[command(name = "skewjs", version, about = "Skew Jensen-Shannon regularization experiments")]
struct Cli {
    /// Experiment config (flat key=value file)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; overrides output.dir
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Root seed; overrides the config's seed
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the configured synthetic dataset as CSV
    GenData,
    /// Cross-validated training with a test-set report
    Train,
    /// One cross-validated alpha_js run per skew value
    SweepAlpha {
        /// Comma-separated skew values; defaults to sweep.alphas
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
    },
    /// Entropies and divergences of two distributions
    Divergence {
        #[arg(long, allow_hyphen_values = true)]
        p: String,
        #[arg(long, allow_hyphen_values = true)]
        q: String,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Project test-set penultimate activations on two principal components
    Project {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &cli.out {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Divergence { p, q, alpha } => commands::cmd_divergence(p, q, *alpha, &mut out),
        Command::GenData => commands::cmd_gen_data(&load_config(&cli)?, &mut out).map(drop),
        Command::Train => commands::cmd_train(&load_config(&cli)?, &mut out).map(drop),
        Command::SweepAlpha { alphas } => {
            let cfg = load_config(&cli)?;
            let alphas = alphas.clone().unwrap_or_else(|| cfg.sweep_alphas.clone());
            commands::cmd_sweep_alpha(&cfg, &alphas, &mut out).map(drop)
        }
        Command::Project { model } => commands::cmd_project(&load_config(&cli)?, model, &mut out).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gazesal::{CliError, RunConfig};

/// Eye-tracking classification from saliency-model agreement.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset under <out>/data.
    Synth,
    /// Compute and cache every (image, model) saliency map.
    Saliency,
    /// Build the feature matrix.
    Features,
    /// Cross-validate the configured learner and protocol.
    Crossval,
    /// Accuracy against the number of saliency models.
    Ablate {
        /// Subset sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Summarize stored results.
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.jobs.is_some() {
        cfg.jobs = cli.jobs;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    gazesal::with_pool(cfg.jobs, || -> Result<(), CliError> {
        match cli.command {
            Command::Synth => {
                let ds = gazesal::cmd_synth(&cfg)?;
                println!("wrote {}", ds.manifest_path.display());
            }
            Command::Saliency => {
                let s = gazesal::cmd_saliency(&cfg)?;
                println!("{} maps computed, {} cached", s.computed, s.cached);
            }
            Command::Features => {
                let f = gazesal::cmd_features(&cfg)?;
                println!(
                    "wrote {} ({} rows x {} features)",
                    f.csv_path.display(),
                    f.matrix.rows.len(),
                    f.matrix.n_features()
                );
            }
            Command::Crossval => print!("{}", gazesal::cmd_crossval(&cfg)?.table),
            Command::Ablate { sizes, repeats } => print!("{}", gazesal::cmd_ablate(&cfg, sizes, repeats)?.csv),
            Command::Report => print!("{}", gazesal::cmd_report(&cfg)?),
        }
        Ok(())
    })?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

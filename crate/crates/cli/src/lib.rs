//! Batch pipeline behind the `gazesal` binary.
//!
//! Exit codes are a stable contract: 0 success, 2 data or I/O error,
//! 3 configuration error.

pub mod commands;
pub mod config;
pub mod provenance;

pub use commands::{
    cmd_ablate, cmd_crossval, cmd_features, cmd_report, cmd_saliency, cmd_synth, AblateOutput, CrossvalOutput,
    FeaturesOutput, SaliencySummary,
};
pub use config::RunConfig;

use gazesal_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Data(_) => 2,
            CliError::Config(_) => 3,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(_) | CoreError::Protocol(_) => CliError::Config(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Runs `f` on a worker pool of `jobs` threads (all cores when `None`).
pub fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        b = b.num_threads(n);
    }
    let pool = b.build().map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

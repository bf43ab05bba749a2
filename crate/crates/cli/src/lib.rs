//! Config-driven experiment runner for the `nkem` command.
//!
//! An experiment writes into one output directory:
//!
//! + `phantom/`: label map, time-activity curves and true frame images;
//! + `study/`: the simulated dynamic acquisition;
//! + `kernel/`: composite priors and kernel matrices;
//! + `recon/<method>/fMM/rRR/`: trace, checkpoints and final image;
//! + `eval/`, `report/`: CSV tables and PGM images;
//! + `manifest.toml`: config hash, seeds, version and every output file.

pub mod config;
pub mod io;
pub mod manifest;
pub mod pipeline;

pub use config::ExperimentConfig;
pub use manifest::RunManifest;
pub use pipeline::{EvalTables, Experiment};

/// Invalid or unreadable configuration; the command exits with status 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Exit status for an error returned by a command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.downcast_ref::<ConfigError>().is_some()) {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    }
}

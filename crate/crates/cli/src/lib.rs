//! Command-line front end: `train`, `reconstruct`, `verify` and `bench`.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

use std::path::{Path, PathBuf};

use mol::net::load_checkpoint;
use mol::NetworkWeights;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use manifest::{FileEntry, RunManifest, MANIFEST_FILE};

pub const CONFIG_ECHO_FILE: &str = "config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Reconstruct,
    Verify,
    Bench,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Reconstruct => "reconstruct",
            Command::Verify => "verify",
            Command::Bench => "bench",
        }
    }
}

/// Everything a subcommand needs.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ExperimentConfig,
    /// Directory of the config file; relative input paths resolve against it.
    pub config_dir: PathBuf,
    pub out: PathBuf,
    pub checkpoint: Option<PathBuf>,
}

impl RunContext {
    pub fn write_file(&self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.out.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.config_dir.join(p)
        }
    }

    pub fn seed(&self, name: &str) -> u64 {
        mol::seed::sub_seed(self.config.seed, name)
    }

    pub fn require_checkpoint(&self) -> Result<NetworkWeights, CliError> {
        let path = self
            .checkpoint
            .as_ref()
            .ok_or_else(|| CliError::Config("this command needs --checkpoint".into()))?;
        load_weights(path)
    }
}

pub fn load_weights(path: &Path) -> Result<NetworkWeights, CliError> {
    load_checkpoint(path).map_err(|source| CliError::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses the config, echoes it to the output directory, runs the command and
/// writes the manifest. The manifest is written whenever the command produced
/// its outputs, including failed verifications.
pub fn run(
    command: Command,
    config_path: &Path,
    out: &Path,
    checkpoint: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let started = manifest::unix_now();
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let echoed = config.to_toml();
    let ctx = RunContext {
        config,
        config_dir: config_path.parent().map(Path::to_path_buf).unwrap_or_default(),
        out: out.to_path_buf(),
        checkpoint: checkpoint.map(Path::to_path_buf),
    };
    ctx.write_file(CONFIG_ECHO_FILE, &echoed)?;

    let result = match command {
        Command::Train => commands::train::run(&ctx),
        Command::Reconstruct => commands::reconstruct::run(&ctx),
        Command::Verify => commands::verify::run(&ctx),
        Command::Bench => commands::bench::run(&ctx),
    };
    if matches!(result, Ok(()) | Err(CliError::Verification(_)) | Err(CliError::AllFailed(_))) {
        RunManifest {
            command: command.name().to_string(),
            config: echoed,
            started_unix: started,
            finished_unix: manifest::unix_now(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            files: manifest::inventory(out)?,
        }
        .write(out)?;
    }
    result
}

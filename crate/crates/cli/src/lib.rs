//! The `forge` command line: configuration, run bookkeeping and one
//! function per subcommand.

pub mod backend;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod human;
pub mod lock;
pub mod lora_verify;
pub mod manifest;
pub mod pipeline;

use std::path::Path;

pub use backend::BackendKind;
pub use config::PipelineConfig;
pub use error::{exit_code, CliError, Outcome};

/// A loaded config and the backend chosen on the command line.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub config_sha256: String,
    pub backend: BackendKind,
}

impl Context {
    pub fn load(path: &Path, overrides: &[String], backend: BackendKind) -> Result<Context, CliError> {
        let (config, config_sha256) = PipelineConfig::load(path, overrides)?;
        Ok(Context { config, config_sha256, backend })
    }
}

/// Recheck every run manifest in out_dir against the files on disk.
pub fn cmd_verify(ctx: &Context) -> Result<Outcome, CliError> {
    let (names, issues) = manifest::verify_out_dir(&ctx.config.paths.out_dir)?;
    if names.is_empty() {
        return Err(CliError::Verification(format!("no run manifests in {}", ctx.config.paths.out_dir.display())));
    }
    for issue in &issues {
        eprintln!("{issue}");
    }
    if issues.is_empty() {
        println!("verify: {} manifests, every output matches its hash", names.len());
        Ok(Outcome::Clean)
    } else {
        Err(CliError::Verification(format!("{} outputs missing or modified", issues.len())))
    }
}

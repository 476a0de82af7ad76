use std::path::PathBuf;

/// A command failure. Every variant maps to exit code 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} exists; another forge command is using this out_dir (delete the file if that run is dead)")]
    Locked(PathBuf),
    /// A module error, attributed to the pipeline stage that raised it.
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn stage(stage: &'static str, source: impl std::error::Error + Send + Sync + 'static) -> Self {
        CliError::Stage { stage, source: Box::new(source) }
    }
}

/// How a command that did not fail finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    /// Finished, but some items were skipped and recorded as diagnostics.
    Partial,
}

impl Outcome {
    pub fn merge(self, other: Outcome) -> Outcome {
        if self == Outcome::Partial || other == Outcome::Partial {
            Outcome::Partial
        } else {
            Outcome::Clean
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Clean => "clean",
            Outcome::Partial => "partial",
        }
    }
}

/// 0 clean, 2 partial, 1 hard failure.
pub fn exit_code(result: &Result<Outcome, CliError>) -> i32 {
    match result {
        Ok(Outcome::Clean) => 0,
        Ok(Outcome::Partial) => 2,
        Err(_) => 1,
    }
}

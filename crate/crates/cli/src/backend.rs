//! Building a model client from the config and the `--backend` flag.

use std::sync::Arc;
use std::time::Duration;

use forge_core::modelio::{Backend, Client, HttpBackend, MockBackend, RecordingBackend, ReplayBackend, RetryPolicy};

use crate::config::BackendConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum BackendKind {
    /// Deterministic offline backend.
    Mock,
    /// Chat-completions style JSON API at `backend.base_url`.
    Http,
    /// Exchanges recorded by an earlier http run (`backend.replay_path`).
    Replay,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Mock => "mock",
            BackendKind::Http => "http",
            BackendKind::Replay => "replay",
        }
    }
}

/// A client plus the recorder to flush when the command ends, if any.
pub struct Connection {
    pub client: Client,
    recorder: Option<(Arc<RecordingBackend>, std::path::PathBuf)>,
}

impl Connection {
    pub fn open(kind: BackendKind, cfg: &BackendConfig) -> Result<Connection, CliError> {
        let mut recorder = None;
        let backend: Arc<dyn Backend> = match kind {
            BackendKind::Mock => Arc::new(MockBackend::synthetic()),
            BackendKind::Http => {
                let key = std::env::var(&cfg.api_key_env).ok().filter(|k| !k.is_empty());
                let http = HttpBackend::new(&cfg.base_url, key, Duration::from_secs(cfg.timeout_s));
                match &cfg.record_path {
                    Some(path) => {
                        let rec = Arc::new(RecordingBackend::new(http));
                        recorder = Some((rec.clone(), path.clone()));
                        rec
                    }
                    None => Arc::new(http),
                }
            }
            BackendKind::Replay => {
                let path = cfg
                    .replay_path
                    .as_ref()
                    .ok_or_else(|| CliError::Config("--backend replay needs backend.replay_path".into()))?;
                Arc::new(ReplayBackend::from_jsonl(path).map_err(|source| CliError::Io { path: path.clone(), source })?)
            }
        };
        let policy = RetryPolicy { max_retries: cfg.max_retries, ..RetryPolicy::default() };
        let client = Client::new(backend, cfg.model.clone()).with_policy(policy).with_concurrency(cfg.concurrency);
        Ok(Connection { client, recorder })
    }

    /// Save recorded exchanges, when recording.
    pub fn close(self) -> Result<(), CliError> {
        if let Some((rec, path)) = self.recorder {
            rec.save(&path).map_err(|source| CliError::Io { path, source })?;
        }
        Ok(())
    }
}

//! Per-stage run records and the hash recheck over them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use forge_core::curate::sha256_hex;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Outcome};

/// A file written by a stage, relative to out_dir.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// What one command run produced: enough to recheck every output later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub stage: String,
    pub backend: String,
    pub config_sha256: String,
    pub status: String,
    pub outputs: Vec<OutputEntry>,
    pub timings_ms: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn file_name(stage: &str) -> String {
        format!("{stage}.run.json")
    }
}

/// Collects outputs and step timings while a command runs.
#[derive(Debug)]
pub struct RunRecorder {
    stage: &'static str,
    backend: String,
    config_sha256: String,
    out_dir: PathBuf,
    outputs: Vec<OutputEntry>,
    timings_ms: BTreeMap<String, u64>,
    started: Instant,
}

impl RunRecorder {
    pub fn new(stage: &'static str, backend: &str, config_sha256: &str, out_dir: &Path) -> Self {
        RunRecorder {
            stage,
            backend: backend.to_string(),
            config_sha256: config_sha256.to_string(),
            out_dir: out_dir.to_path_buf(),
            outputs: Vec::new(),
            timings_ms: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    /// Run `f` and record its wall time under `step`.
    pub fn time<T>(&mut self, step: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.timings_ms.insert(step.to_string(), t.elapsed().as_millis() as u64);
        out
    }

    /// Write `bytes` to `out_dir/name` and record its hash.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.out_dir.join(name);
        fs::write(&path, bytes).map_err(|source| CliError::Io { path: path.clone(), source })?;
        self.outputs.retain(|o| o.path != name);
        self.outputs.push(OutputEntry { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("value serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Write the run manifest as `out_dir/<stage>.run.json`.
    pub fn finish(mut self, outcome: Outcome) -> Result<RunManifest, CliError> {
        self.timings_ms.insert("total".into(), self.started.elapsed().as_millis() as u64);
        let millis = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
        let manifest = RunManifest {
            run_id: format!("{}-{}-{millis}", self.stage, &self.config_sha256[..12.min(self.config_sha256.len())]),
            stage: self.stage.to_string(),
            backend: self.backend,
            config_sha256: self.config_sha256,
            status: outcome.as_str().to_string(),
            outputs: self.outputs,
            timings_ms: self.timings_ms,
        };
        let path = self.out_dir.join(RunManifest::file_name(self.stage));
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|source| CliError::Io { path, source })?;
        Ok(manifest)
    }
}

/// A recheck finding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifyIssue {
    Missing { manifest: String, path: String },
    HashMismatch { manifest: String, path: String },
}

impl std::fmt::Display for VerifyIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerifyIssue::Missing { manifest, path } => write!(f, "{manifest}: {path} is missing"),
            VerifyIssue::HashMismatch { manifest, path } => write!(f, "{manifest}: {path} does not match its hash"),
        }
    }
}

/// Recheck every `*.run.json` in `out_dir`. Returns the manifests checked
/// (sorted by name) and the problems found.
pub fn verify_out_dir(out_dir: &Path) -> Result<(Vec<String>, Vec<VerifyIssue>), CliError> {
    let io = |source| CliError::Io { path: out_dir.to_path_buf(), source };
    let mut names: Vec<String> = fs::read_dir(out_dir)
        .map_err(io)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.ends_with(".run.json"))
        .collect();
    names.sort();
    let mut issues = Vec::new();
    for name in &names {
        let path = out_dir.join(name);
        let text = fs::read_to_string(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Verification(format!("{name} is not a run manifest: {e}")))?;
        for o in &manifest.outputs {
            match fs::read(out_dir.join(&o.path)) {
                Err(_) => issues.push(VerifyIssue::Missing { manifest: name.clone(), path: o.path.clone() }),
                Ok(bytes) if sha256_hex(&bytes) != o.sha256 => {
                    issues.push(VerifyIssue::HashMismatch { manifest: name.clone(), path: o.path.clone() })
                }
                Ok(_) => {}
            }
        }
    }
    Ok((names, issues))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recorded_outputs_verify_until_tampered() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = RunRecorder::new("curate", "mock", "abcdef0123456789", dir.path());
        rec.time("step", || ());
        rec.write("a.jsonl", b"one\n").unwrap();
        rec.write_json("b.json", &serde_json::json!({"k": 1})).unwrap();
        let m = rec.finish(Outcome::Clean).unwrap();
        assert!(m.run_id.starts_with("curate-abcdef012345-"));
        assert_eq!(m.outputs.len(), 2);
        assert!(m.timings_ms.contains_key("step") && m.timings_ms.contains_key("total"));

        let (names, issues) = verify_out_dir(dir.path()).unwrap();
        assert_eq!(names, vec!["curate.run.json"]);
        assert!(issues.is_empty());

        fs::write(dir.path().join("a.jsonl"), b"two\n").unwrap();
        fs::remove_file(dir.path().join("b.json")).unwrap();
        let (_, issues) = verify_out_dir(dir.path()).unwrap();
        assert_eq!(
            issues,
            vec![
                VerifyIssue::HashMismatch { manifest: "curate.run.json".into(), path: "a.jsonl".into() },
                VerifyIssue::Missing { manifest: "curate.run.json".into(), path: "b.json".into() },
            ]
        );
    }
}

//! The pipeline configuration: one JSON file plus dotted `--set` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use forge_core::curate::{sha256_hex, DEFAULT_NEAR_DUP_THRESHOLD, DEFAULT_TARGET_TOTAL};
use forge_core::eval::metrics::{DEFAULT_BLEU_EPSILON, DEFAULT_ROUGE_BETA};
use forge_core::expand::VariantCounts;
use forge_core::formulate::DEFAULT_PER_TASK;
use forge_core::lora::{DEFAULT_RANK, DEFAULT_SIGMA};
use forge_core::modelio::MAX_RETRIES_LIMIT;
use forge_core::TaskKind;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub base_url: String,
    /// Teacher model used for expansion.
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_s: u64,
    pub max_retries: u32,
    pub concurrency: usize,
    /// Model asked for token logprobs when scoring perplexity.
    pub scorer_model: String,
    /// Model asked for token vectors when scoring the embedding match.
    pub embedding_model: String,
    /// Exchange log read by `--backend replay`.
    pub replay_path: Option<PathBuf>,
    /// When set, `--backend http` writes every exchange here.
    pub record_path: Option<PathBuf>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo-0301".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_s: 60,
            max_retries: 3,
            concurrency: 4,
            scorer_model: "gpt2-xl".into(),
            embedding_model: "bert-base-uncased".into(),
            replay_path: None,
            record_path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    pub seed_per_task: usize,
    /// Train share of the interaction and Q&A splits.
    pub split_ratio: f64,
    pub variants: VariantCounts,
    pub target_total: usize,
    pub near_dup_threshold: f64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            seed_per_task: DEFAULT_PER_TASK,
            split_ratio: 0.8,
            variants: VariantCounts::default(),
            target_total: DEFAULT_TARGET_TOTAL,
            near_dup_threshold: DEFAULT_NEAR_DUP_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub rouge_beta: f64,
    pub bleu_epsilon: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { rouge_beta: DEFAULT_ROUGE_BETA, bleu_epsilon: DEFAULT_BLEU_EPSILON }
    }
}

/// Knobs of `lora-verify`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoraConfig {
    pub rank: usize,
    pub sigma: f64,
    pub check_instances: usize,
    pub grad_eps: f64,
    pub grad_tolerance: f64,
    pub toy_dim: usize,
    pub toy_rank: usize,
    pub toy_steps: usize,
    pub toy_lr: f64,
    pub toy_scale: f64,
    pub toy_sigma: f64,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig {
            rank: DEFAULT_RANK,
            sigma: DEFAULT_SIGMA,
            check_instances: 100,
            grad_eps: 1e-5,
            grad_tolerance: 1e-4,
            toy_dim: 16,
            toy_rank: 2,
            toy_steps: 500,
            toy_lr: 0.05,
            toy_scale: 0.5,
            toy_sigma: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Interaction dump (JSONL).
    pub data_in: PathBuf,
    /// Help-center Q&A pairs (JSONL).
    pub qa_in: PathBuf,
    /// Scenario and intent lists for the held-out packs (JSON).
    pub heldout_in: Option<PathBuf>,
    /// Human ratings (JSONL), used when `--ratings` is absent.
    pub ratings_in: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data_in: "data/interactions.jsonl".into(),
            qa_in: "data/qa.jsonl".into(),
            heldout_in: None,
            ratings_in: None,
            out_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub rng_seed: u64,
    pub backend: BackendConfig,
    pub pipeline: PipelineSettings,
    pub metrics: MetricsConfig,
    pub lora: LoraConfig,
    pub paths: Paths,
}

impl PipelineConfig {
    /// Read `path`, apply `key.path=value` overrides, resolve relative paths
    /// against the config file's directory and validate. Returns the config
    /// and the SHA-256 of its overridden, unresolved form.
    pub fn load(path: &Path, overrides: &[String]) -> Result<(PipelineConfig, String), CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_value(value, overrides, base)
    }

    pub fn from_value(mut value: Value, overrides: &[String], base: &Path) -> Result<(PipelineConfig, String), CliError> {
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut config: PipelineConfig =
            serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        let hash = sha256_hex(&serde_json::to_vec(&config).expect("config serializes"));
        config.resolve_paths(base);
        config.validate()?;
        Ok((config, hash))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.data_in);
        fix(&mut self.paths.qa_in);
        fix(&mut self.paths.out_dir);
        for p in [
            &mut self.paths.heldout_in,
            &mut self.paths.ratings_in,
            &mut self.backend.replay_path,
            &mut self.backend.record_path,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |m: String| Err(CliError::Config(m));
        let b = &self.backend;
        let p = &self.pipeline;
        if b.concurrency == 0 {
            return fail("backend.concurrency must be at least 1".into());
        }
        if b.timeout_s == 0 {
            return fail("backend.timeout_s must be positive".into());
        }
        if b.max_retries > MAX_RETRIES_LIMIT {
            return fail(format!("backend.max_retries {} exceeds {MAX_RETRIES_LIMIT}", b.max_retries));
        }
        if p.seed_per_task == 0 {
            return fail("pipeline.seed_per_task must be at least 1".into());
        }
        if !(p.split_ratio > 0.0 && p.split_ratio < 1.0) {
            return fail(format!("pipeline.split_ratio {} must lie strictly between 0 and 1", p.split_ratio));
        }
        if !(0.0..=1.0).contains(&p.near_dup_threshold) {
            return fail(format!("pipeline.near_dup_threshold {} outside [0, 1]", p.near_dup_threshold));
        }
        if p.target_total % TaskKind::ALL.len() != 0 {
            return fail(format!("pipeline.target_total {} is not divisible by {}", p.target_total, TaskKind::ALL.len()));
        }
        if !(self.metrics.rouge_beta > 0.0) || !(self.metrics.bleu_epsilon > 0.0) {
            return fail("metrics.rouge_beta and metrics.bleu_epsilon must be positive".into());
        }
        Ok(())
    }
}

/// Set a dotted key. The value is parsed as JSON when it parses, otherwise
/// it is taken as a string: `pipeline.target_total=100`,
/// `backend.model=gpt-4o-mini`.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {spec:?} is not key=value")))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key {key:?} has an empty segment")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| CliError::Config(format!("override {key:?}: {} is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("key has at least one segment")
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn defaults_from_empty_object() {
        let (c, _) = PipelineConfig::from_value(json!({}), &[], Path::new("/base")).unwrap();
        assert_eq!(c.backend.timeout_s, 60);
        assert_eq!(c.backend.concurrency, 4);
        assert_eq!(c.pipeline.seed_per_task, 60);
        assert_eq!(c.pipeline.target_total, 1200);
        assert_eq!(c.paths.out_dir, PathBuf::from("/base/out"));
    }

    #[test]
    fn overrides_parse_json_or_string() {
        let mut v = json!({"pipeline": {"target_total": 1200}});
        apply_override(&mut v, "pipeline.target_total=100").unwrap();
        apply_override(&mut v, "backend.model=gpt-4o-mini").unwrap();
        apply_override(&mut v, "pipeline.variants.instruction_rewrite=2").unwrap();
        assert_eq!(v["pipeline"]["target_total"], json!(100));
        assert_eq!(v["backend"]["model"], json!("gpt-4o-mini"));
        let (c, _) = PipelineConfig::from_value(v, &[], Path::new(".")).unwrap();
        assert_eq!(c.pipeline.variants.instruction_rewrite, 2);
        assert_eq!(c.pipeline.variants.response_rewrite, 1);
    }

    #[test]
    fn bad_overrides_and_values() {
        let mut v = json!({"rng_seed": 3});
        assert!(apply_override(&mut v, "no_equals").is_err());
        assert!(apply_override(&mut v, "rng_seed.x=1").is_err());
        assert!(apply_override(&mut v, "a..b=1").is_err());
        let err = PipelineConfig::from_value(json!({}), &["pipeline.tagret_total=5".into()], Path::new("."));
        assert!(matches!(err, Err(CliError::Config(m)) if m.contains("tagret_total")));
        let err = PipelineConfig::from_value(json!({}), &["backend.concurrency=0".into()], Path::new("."));
        assert!(matches!(err, Err(CliError::Config(m)) if m.contains("concurrency")));
        let err = PipelineConfig::from_value(json!({}), &["pipeline.target_total=101".into()], Path::new("."));
        assert!(err.is_err());
    }

    #[test]
    fn hash_ignores_location_but_not_content() {
        let (_, h1) = PipelineConfig::from_value(json!({}), &[], Path::new("/a")).unwrap();
        let (_, h2) = PipelineConfig::from_value(json!({}), &[], Path::new("/b")).unwrap();
        let (_, h3) = PipelineConfig::from_value(json!({}), &["rng_seed=9".into()], Path::new("/a")).unwrap();
        assert_eq!(h1, h2);
        assert_ne!(h1, h3);
    }
}

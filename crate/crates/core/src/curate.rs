//! Dedup, task balancing, canonical JSONL emission and held-out prompt packs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::formulate::InstructionPair;
use crate::sampling::{derive_seed, seeded_permutation};
use crate::text::{clean_text, tokenize};
use crate::types::TaskKind;

pub const DEFAULT_NEAR_DUP_THRESHOLD: f64 = 0.9;
pub const DEFAULT_TARGET_TOTAL: usize = 1200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationConfig {
    pub near_dup_threshold: f64,
    pub target_total: usize,
    pub rng_seed: u64,
    /// Explicit per-task quotas; when set, `target_total` is ignored.
    #[serde(default)]
    pub per_task: Option<BTreeMap<TaskKind, usize>>,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            near_dup_threshold: DEFAULT_NEAR_DUP_THRESHOLD,
            target_total: DEFAULT_TARGET_TOTAL,
            rng_seed: 0,
            per_task: None,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<(), CurateError> {
        if !(0.0..=1.0).contains(&self.near_dup_threshold) {
            return Err(CurateError::InvalidConfig(format!(
                "near_dup_threshold {} outside [0, 1]",
                self.near_dup_threshold
            )));
        }
        if self.per_task.is_none() && self.target_total % TaskKind::ALL.len() != 0 {
            return Err(CurateError::InvalidConfig(format!(
                "target_total {} is not divisible by {}",
                self.target_total,
                TaskKind::ALL.len()
            )));
        }
        Ok(())
    }

    pub fn quota(&self, task: TaskKind) -> usize {
        match &self.per_task {
            Some(m) => m.get(&task).copied().unwrap_or(0),
            None => self.target_total / TaskKind::ALL.len(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CurateError {
    #[error("{task}: {have} pairs after dedup, {need} needed")]
    InsufficientPairs { task: TaskKind, have: usize, need: usize },
    #[error("invalid curation config: {0}")]
    InvalidConfig(String),
    #[error("held-out pack inputs are empty: {0}")]
    EmptyInputs(&'static str),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
}

// ---------------------------------------------------------------- dedup

/// Tokens compared by dedup: cleaned, tokenized `instruction input output`.
pub fn normalized_tokens(pair: &InstructionPair) -> Vec<String> {
    tokenize(&clean_text(&format!("{} {} {}", pair.instruction, pair.input, pair.output)))
}

/// Token trigrams; a sequence shorter than three tokens is one gram.
fn trigrams(tokens: &[String]) -> Vec<&[String]> {
    if tokens.len() < 3 {
        vec![tokens]
    } else {
        tokens.windows(3).collect()
    }
}

/// Jaccard similarity of the trigram sets of two token sequences.
pub fn trigram_jaccard(a: &[String], b: &[String]) -> f64 {
    let sa: HashSet<&[String]> = trigrams(a).into_iter().collect();
    let sb: HashSet<&[String]> = trigrams(b).into_iter().collect();
    let inter = sa.intersection(&sb).count();
    inter as f64 / (sa.len() + sb.len() - inter) as f64
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DedupStats {
    pub exact_removed: usize,
    pub near_removed: usize,
}

/// Remove exact duplicates of the normalized text, then items whose trigram
/// Jaccard with an already-kept item reaches `threshold`. The earliest
/// occurrence survives and order is preserved. `threshold >= 1` removes
/// exact duplicates only.
pub fn dedup_with_stats(pairs: &[InstructionPair], threshold: f64) -> (Vec<InstructionPair>, DedupStats) {
    let tokens: Vec<Vec<String>> = pairs.par_iter().map(normalized_tokens).collect();
    let mut stats = DedupStats::default();

    let mut seen: HashSet<&[String]> = HashSet::new();
    let mut unique = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if seen.insert(t.as_slice()) {
            unique.push(i);
        } else {
            stats.exact_removed += 1;
        }
    }

    let keep: Vec<usize> = if threshold >= 1.0 {
        unique
    } else {
        // Intern grams so each item is a sorted id set; an inverted index
        // from gram to kept items gives exact intersection counts.
        let mut ids: HashMap<&[String], u32> = HashMap::new();
        let sets: Vec<Vec<u32>> = unique
            .iter()
            .map(|&i| {
                let mut s: Vec<u32> = trigrams(&tokens[i])
                    .into_iter()
                    .map(|g| {
                        let next = ids.len() as u32;
                        *ids.entry(g).or_insert(next)
                    })
                    .collect();
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        let mut index: HashMap<u32, Vec<usize>> = HashMap::new();
        let mut kept: Vec<usize> = Vec::new();
        for (u, set) in sets.iter().enumerate() {
            let mut inter: HashMap<usize, usize> = HashMap::new();
            for g in set {
                for &k in index.get(g).into_iter().flatten() {
                    *inter.entry(k).or_default() += 1;
                }
            }
            let near = if threshold <= 0.0 {
                !kept.is_empty()
            } else {
                inter.iter().any(|(&k, &n)| n as f64 / (set.len() + sets[k].len() - n) as f64 >= threshold)
            };
            if near {
                stats.near_removed += 1;
            } else {
                for &g in set {
                    index.entry(g).or_default().push(u);
                }
                kept.push(u);
            }
        }
        kept.into_iter().map(|u| unique[u]).collect()
    };
    (keep.into_iter().map(|i| pairs[i].clone()).collect(), stats)
}

pub fn dedup(pairs: &[InstructionPair], threshold: f64) -> Vec<InstructionPair> {
    dedup_with_stats(pairs, threshold).0
}

// ---------------------------------------------------------------- balance

/// Seeded sample of exactly `config.quota(task)` pairs per task, emitted in
/// task order and, within a task, in input order.
pub fn balance(pairs: &[InstructionPair], config: &CurationConfig) -> Result<Vec<InstructionPair>, CurateError> {
    config.validate()?;
    let mut out = Vec::new();
    for task in TaskKind::ALL {
        let idx: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].task == task).collect();
        let need = config.quota(task);
        if idx.len() < need {
            return Err(CurateError::InsufficientPairs { task, have: idx.len(), need });
        }
        let mut chosen: Vec<usize> = seeded_permutation(idx.len(), derive_seed(config.rng_seed, task.as_str()))
            .into_iter()
            .take(need)
            .map(|p| idx[p])
            .collect();
        chosen.sort_unstable();
        out.extend(chosen.into_iter().map(|i| pairs[i].clone()));
    }
    Ok(out)
}

// ---------------------------------------------------------------- emit / load

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub count: usize,
    pub per_task: BTreeMap<TaskKind, usize>,
    pub sha256: String,
}

/// One JSON object per line with keys sorted at every level and `\n` line
/// ends. Absent provenance fields are written as `null`.
pub fn canonical_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for item in items {
        let v = serde_json::to_value(item).expect("plain data serializes");
        s.push_str(&serde_json::to_string(&v).expect("value serializes"));
        s.push('\n');
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn manifest_for(pairs: &[InstructionPair], bytes: &[u8]) -> Manifest {
    let mut per_task: BTreeMap<TaskKind, usize> = TaskKind::ALL.iter().map(|&t| (t, 0)).collect();
    for p in pairs {
        *per_task.entry(p.task).or_default() += 1;
    }
    Manifest { count: pairs.len(), per_task, sha256: sha256_hex(bytes) }
}

pub fn emit_jsonl(pairs: &[InstructionPair], path: &Path) -> Result<Manifest, CurateError> {
    let text = canonical_jsonl(pairs);
    fs::write(path, &text).map_err(|source| CurateError::Io { path: path.to_path_buf(), source })?;
    Ok(manifest_for(pairs, text.as_bytes()))
}

pub fn load_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CurateError> {
    let text = fs::read_to_string(path).map_err(|source| CurateError::Io { path: path.to_path_buf(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CurateError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------- held-out packs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PackKind {
    ScenarioAds,
    Recommendation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// "Christmas is almost. Generate an ad ..."
    Festival,
    /// "Generate an ad for sports fans based on ..."
    CustomerGroup,
    /// "Generate a mid-year sale advertisement ..."
    SalesStrategy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldoutInputs {
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
    #[serde(default)]
    pub product_sets: Vec<Vec<String>>,
    #[serde(default)]
    pub intents: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeldoutPrompt {
    pub id: String,
    pub kind: PackKind,
    pub prompt: String,
    pub scenario: Option<String>,
    pub products: Vec<String>,
}

/// "a", "a and b", "a, b, and c".
fn join_list(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

fn article(word: &str) -> &'static str {
    if word.starts_with(|c: char| "aeiouAEIOU".contains(c)) {
        "an"
    } else {
        "a"
    }
}

pub fn render_scenario_prompt(scenario: &Scenario, products: &[String]) -> String {
    let list = join_list(products);
    let name = scenario.name.trim();
    match scenario.kind {
        ScenarioKind::Festival => format!("{name} is almost. Generate an ad for the following products: {list}."),
        ScenarioKind::CustomerGroup => format!("Generate an ad for {name} based on the following products: {list}."),
        ScenarioKind::SalesStrategy => {
            format!("Generate {} {name} advertisement for the following products: {list}.", article(name))
        }
    }
}

/// Zero-shot prompts: every scenario against every product set, or one
/// prompt per shopping intent.
pub fn build_heldout_packs(kind: PackKind, inputs: &HeldoutInputs) -> Result<Vec<HeldoutPrompt>, CurateError> {
    match kind {
        PackKind::ScenarioAds => {
            if inputs.scenarios.is_empty() {
                return Err(CurateError::EmptyInputs("scenarios"));
            }
            if inputs.product_sets.is_empty() || inputs.product_sets.iter().any(|s| s.iter().all(|p| p.trim().is_empty())) {
                return Err(CurateError::EmptyInputs("product list"));
            }
            let mut out = Vec::new();
            for scenario in &inputs.scenarios {
                for products in &inputs.product_sets {
                    let products: Vec<String> =
                        products.iter().map(|p| clean_text(p)).filter(|p| !p.is_empty()).collect();
                    out.push(HeldoutPrompt {
                        id: format!("heldout-ads-{:03}", out.len()),
                        kind,
                        prompt: render_scenario_prompt(scenario, &products),
                        scenario: Some(scenario.name.clone()),
                        products,
                    });
                }
            }
            Ok(out)
        }
        PackKind::Recommendation => {
            let intents: Vec<String> = inputs.intents.iter().map(|s| clean_text(s)).filter(|s| !s.is_empty()).collect();
            if intents.is_empty() {
                return Err(CurateError::EmptyInputs("intents"));
            }
            Ok(intents
                .into_iter()
                .enumerate()
                .map(|(i, prompt)| HeldoutPrompt {
                    id: format!("heldout-rec-{i:03}"),
                    kind,
                    prompt,
                    scenario: None,
                    products: Vec::new(),
                })
                .collect())
        }
    }
}

/// Held-out ids or prompt texts that also occur in `dataset`.
pub fn heldout_leaks(dataset: &[InstructionPair], pack: &[HeldoutPrompt]) -> Vec<String> {
    let ids: HashSet<&str> = dataset.iter().map(|p| p.id.as_str()).collect();
    let texts: HashSet<&str> = dataset.iter().map(|p| p.instruction.as_str()).collect();
    pack.iter()
        .filter(|h| ids.contains(h.id.as_str()) || texts.contains(h.prompt.as_str()))
        .map(|h| h.id.clone())
        .collect()
}

//! Seed-instruction templates and the seed-set builder.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ingest::QaPair;
use crate::sampling::{derive_seed, seeded_permutation};
use crate::types::{ProductRecord, TaskKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Seed,
    Expanded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    InstructionRewrite,
    ResponseGeneration,
    ResponseRewrite,
}

impl Strategy {
    pub const ALL: [Strategy; 3] =
        [Strategy::InstructionRewrite, Strategy::ResponseGeneration, Strategy::ResponseRewrite];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::InstructionRewrite => "instruction_rewrite",
            Strategy::ResponseGeneration => "response_generation",
            Strategy::ResponseRewrite => "response_rewrite",
        }
    }

    pub(crate) fn short(self) -> &'static str {
        match self {
            Strategy::InstructionRewrite => "ir",
            Strategy::ResponseGeneration => "rg",
            Strategy::ResponseRewrite => "rr",
        }
    }
}

/// Where a pair came from. Seeds carry no strategy or teacher; expanded pairs
/// always name their strategy and seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub origin: Origin,
    pub strategy: Option<Strategy>,
    pub seed_id: Option<String>,
    pub teacher: Option<String>,
}

impl Provenance {
    pub fn seed() -> Self {
        Provenance { origin: Origin::Seed, strategy: None, seed_id: None, teacher: None }
    }

    pub fn expanded(strategy: Strategy, seed_id: &str, teacher: &str) -> Self {
        Provenance {
            origin: Origin::Expanded,
            strategy: Some(strategy),
            seed_id: Some(seed_id.to_string()),
            teacher: Some(teacher.to_string()),
        }
    }

    pub fn is_valid(&self) -> bool {
        match self.origin {
            Origin::Seed => self.strategy.is_none() && self.teacher.is_none(),
            Origin::Expanded => self.strategy.is_some() && self.seed_id.is_some(),
        }
    }
}

/// One dataset row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionPair {
    pub id: String,
    pub task: TaskKind,
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormulateError {
    #[error("{task} needs field {field:?}, which is missing or empty")]
    MissingField { task: TaskKind, field: &'static str },
    #[error("{task}: {have} eligible records, {need} needed")]
    InsufficientRecords { task: TaskKind, have: usize, need: usize },
    #[error("per-task count must be at least 1")]
    ZeroPerTask,
}

/// What a seed pair is instantiated from.
#[derive(Debug, Clone, Copy)]
pub enum SeedSource<'a> {
    Record(&'a ProductRecord),
    Qa(&'a QaPair),
}

/// Placeholder text for the platform taxonomy slot. Filling it with the gold
/// label would leak the answer into the instruction.
pub const CATEGORY_SLOT: &str = "product category";

pub fn render_instruction(task: TaskKind, title: &str, query: &str) -> String {
    match task {
        TaskKind::AdsGeneration => {
            format!("Generate a short advertisement for the following product: {title}")
        }
        TaskKind::TitleRewriting => {
            format!("Rewrite the product title of {title} according to the following query: {query}.")
        }
        TaskKind::ProductClassification => {
            format!("What is the {CATEGORY_SLOT} of this following product belongs to? {title}")
        }
        TaskKind::IntentSpeculation => format!(
            "Given the query of {query}, which of the following {CATEGORY_SLOT} is the customer interested in?"
        ),
        TaskKind::GeneralQa => query.to_string(),
    }
}

/// Reference rewrite for title rewriting: the title followed by any query
/// words the title does not already contain.
fn reference_rewrite(title: &str, query: &str) -> String {
    let title_words: Vec<String> = title.split_whitespace().map(str::to_lowercase).collect();
    let missing: Vec<&str> = query
        .split_whitespace()
        .filter(|w| !title_words.contains(&w.to_lowercase()))
        .collect();
    if missing.is_empty() {
        title.to_string()
    } else {
        format!("{title} - {}", missing.join(" "))
    }
}

fn nonempty<'a>(v: Option<&'a String>, task: TaskKind, field: &'static str) -> Result<&'a str, FormulateError> {
    v.map(String::as_str)
        .filter(|s| !s.trim().is_empty())
        .ok_or(FormulateError::MissingField { task, field })
}

/// Fill one task template from a record or Q&A pair.
pub fn instantiate(task: TaskKind, source: SeedSource<'_>) -> Result<InstructionPair, FormulateError> {
    let (source_id, instruction, input, output) = match (task, source) {
        (TaskKind::GeneralQa, SeedSource::Qa(qa)) => {
            let q = nonempty(Some(&qa.question), task, "question")?;
            let a = nonempty(Some(&qa.answer), task, "answer")?;
            (qa.id.clone(), render_instruction(task, "", q), String::new(), a.to_string())
        }
        (TaskKind::GeneralQa, SeedSource::Record(_)) => {
            return Err(FormulateError::MissingField { task, field: "qa" })
        }
        (_, SeedSource::Qa(_)) => return Err(FormulateError::MissingField { task, field: "title" }),
        (_, SeedSource::Record(r)) => {
            let title = || nonempty(Some(&r.title), task, "title");
            let query = || nonempty(r.query.as_ref(), task, "query");
            let label = r.taxonomy.as_str().to_string();
            match task {
                TaskKind::AdsGeneration => {
                    let t = title()?;
                    let reference = r
                        .description
                        .as_deref()
                        .filter(|d| !d.trim().is_empty())
                        .unwrap_or(t);
                    (r.id.clone(), render_instruction(task, t, ""), t.to_string(), reference.to_string())
                }
                TaskKind::TitleRewriting => {
                    let (t, q) = (title()?, query()?);
                    (r.id.clone(), render_instruction(task, t, q), t.to_string(), reference_rewrite(t, q))
                }
                TaskKind::ProductClassification => {
                    let t = title()?;
                    (r.id.clone(), render_instruction(task, t, ""), t.to_string(), label)
                }
                TaskKind::IntentSpeculation => {
                    let q = query()?;
                    (r.id.clone(), render_instruction(task, "", q), q.to_string(), label)
                }
                TaskKind::GeneralQa => unreachable!("handled above"),
            }
        }
    };
    Ok(InstructionPair {
        id: format!("seed-{}-{}", task.as_str(), source_id),
        task,
        instruction,
        input,
        output,
        provenance: Provenance::seed(),
    })
}

/// Default seed count per task (5 x 60 = 300).
pub const DEFAULT_PER_TASK: usize = 60;

/// Sample `per_task` seeds for each task. Output is grouped by task in
/// [`TaskKind::ALL`] order and keeps source order within a task.
pub fn build_seed_set(
    records: &[ProductRecord],
    qa_pairs: &[QaPair],
    per_task: usize,
    seed: u64,
) -> Result<Vec<InstructionPair>, FormulateError> {
    if per_task == 0 {
        return Err(FormulateError::ZeroPerTask);
    }
    let mut out = Vec::with_capacity(per_task * TaskKind::ALL.len());
    for task in TaskKind::ALL {
        let eligible: Vec<InstructionPair> = if task == TaskKind::GeneralQa {
            qa_pairs.iter().filter_map(|qa| instantiate(task, SeedSource::Qa(qa)).ok()).collect()
        } else {
            records.iter().filter_map(|r| instantiate(task, SeedSource::Record(r)).ok()).collect()
        };
        if eligible.len() < per_task {
            return Err(FormulateError::InsufficientRecords { task, have: eligible.len(), need: per_task });
        }
        let perm = seeded_permutation(eligible.len(), derive_seed(seed, task.as_str()));
        let mut chosen: Vec<usize> = perm[..per_task].to_vec();
        chosen.sort_unstable();
        out.extend(chosen.into_iter().map(|i| eligible[i].clone()));
    }
    Ok(out)
}

pub fn count_by_task(pairs: &[InstructionPair]) -> BTreeMap<TaskKind, usize> {
    let mut counts: BTreeMap<TaskKind, usize> = TaskKind::ALL.iter().map(|&t| (t, 0)).collect();
    for p in pairs {
        *counts.entry(p.task).or_default() += 1;
    }
    counts
}

//! Teacher-model expansion of seed pairs: instruction rewriting, response
//! generation for rewritten instructions, and response rewriting.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::formulate::{InstructionPair, Provenance, Strategy};
use crate::modelio::{map_bounded, BackendError, Client, Decoding};
use crate::types::TaskKind;

pub const INSTRUCTION_REWRITE_PROMPT: &str =
    "Rewrite the following instruction while maintaining semantic consistency:";
pub const RESPONSE_REWRITE_PROMPT: &str =
    "Rewrite the following generated response to diversify its expression:";

/// Variants requested per seed for each strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariantCounts {
    pub instruction_rewrite: usize,
    pub response_generation: usize,
    pub response_rewrite: usize,
}

impl VariantCounts {
    pub fn uniform(n: usize) -> Self {
        VariantCounts { instruction_rewrite: n, response_generation: n, response_rewrite: n }
    }

    pub fn get(&self, s: Strategy) -> usize {
        match s {
            Strategy::InstructionRewrite => self.instruction_rewrite,
            Strategy::ResponseGeneration => self.response_generation,
            Strategy::ResponseRewrite => self.response_rewrite,
        }
    }
}

impl Default for VariantCounts {
    /// Four instruction rewrites and one of each response strategy: over
    /// 300 seeds this leaves every task with more than 240 distinct pairs.
    fn default() -> Self {
        VariantCounts { instruction_rewrite: 4, response_generation: 1, response_rewrite: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPlan {
    pub variants: VariantCounts,
    /// Tasks whose outputs are labels; they only get instruction rewrites.
    pub tasks_instruction_only: BTreeSet<TaskKind>,
    pub rng_seed: u64,
}

impl Default for ExpansionPlan {
    fn default() -> Self {
        ExpansionPlan {
            variants: VariantCounts::default(),
            tasks_instruction_only: [TaskKind::ProductClassification, TaskKind::IntentSpeculation].into(),
            rng_seed: 0,
        }
    }
}

impl ExpansionPlan {
    pub fn validate(&self) -> Result<(), ExpandError> {
        if let Some(t) = self.tasks_instruction_only.iter().find(|t| !t.is_classification()) {
            return Err(ExpandError::InvalidPlan(format!("{t} produces free text and cannot be instruction-only")));
        }
        Ok(())
    }

    fn strategies_for(&self, task: TaskKind) -> &'static [Strategy] {
        if self.tasks_instruction_only.contains(&task) || task.is_classification() {
            &Strategy::ALL[..1]
        } else {
            &Strategy::ALL
        }
    }

    /// Pair count when every call succeeds: seeds plus per-seed variants.
    pub fn expected_count(&self, seeds: &[InstructionPair]) -> usize {
        seeds
            .iter()
            .map(|s| 1 + self.strategies_for(s.task).iter().map(|&st| self.variants.get(st)).sum::<usize>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExpandError {
    #[error("no seed pairs to expand")]
    EmptySeeds,
    #[error("invalid expansion plan: {0}")]
    InvalidPlan(String),
    #[error("{0} outputs are labels; responses are only generated for free-text tasks")]
    NotGenerative(TaskKind),
    #[error("response text is empty")]
    EmptyResponse,
    #[error("teacher returned an empty generation")]
    EmptyGeneration,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("all {attempted} teacher calls failed; first error: {first}")]
    AllCallsFailed { attempted: usize, first: String },
}

/// One failed variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionDiagnostic {
    pub seed_id: String,
    pub strategy: Strategy,
    pub variant: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub pairs: Vec<InstructionPair>,
    pub diagnostics: Vec<ExpansionDiagnostic>,
    pub attempted: usize,
}

impl Expansion {
    pub fn is_partial(&self) -> bool {
        !self.diagnostics.is_empty()
    }
}

fn directive_prompt(directive: &str, payload: &str) -> String {
    format!("{directive}\n{payload}")
}

fn generation_prompt(instruction: &str, input: &str) -> String {
    if input.is_empty() {
        instruction.to_string()
    } else {
        format!("{instruction}\n{input}")
    }
}

fn nonempty(text: String) -> Result<String, ExpandError> {
    if text.is_empty() {
        Err(ExpandError::EmptyGeneration)
    } else {
        Ok(text)
    }
}

fn variant_id(seed_id: &str, strategy: Strategy, j: usize) -> String {
    format!("{seed_id}:{}{j}", strategy.short())
}

/// Ask the teacher for one rewrite of `instruction`.
pub fn rewrite_instruction_text(client: &Client, instruction: &str, sample: u64) -> Result<String, ExpandError> {
    let out = client.complete(&directive_prompt(INSTRUCTION_REWRITE_PROMPT, instruction), Decoding::EXPANSION, sample)?;
    nonempty(out)
}

/// `count` instruction rewrites of `pair`, each keeping its input and output.
/// Failed variants come back as diagnostics.
pub fn rewrite_instruction(
    client: &Client,
    pair: &InstructionPair,
    count: usize,
    rng_seed: u64,
) -> (Vec<InstructionPair>, Vec<ExpansionDiagnostic>) {
    let mut pairs = Vec::new();
    let mut diags = Vec::new();
    for j in 0..count {
        match rewrite_instruction_text(client, &pair.instruction, rng_seed.wrapping_add(j as u64)) {
            Ok(instruction) => pairs.push(InstructionPair {
                id: variant_id(&pair.id, Strategy::InstructionRewrite, j),
                instruction,
                provenance: Provenance::expanded(Strategy::InstructionRewrite, &pair.id, &client.model),
                ..pair.clone()
            }),
            Err(e) => diags.push(ExpansionDiagnostic {
                seed_id: pair.id.clone(),
                strategy: Strategy::InstructionRewrite,
                variant: j,
                error: e.to_string(),
            }),
        }
    }
    (pairs, diags)
}

/// A teacher response to `instruction` applied to `seed_input`.
pub fn generate_response(
    client: &Client,
    task: TaskKind,
    instruction: &str,
    seed_input: &str,
    sample: u64,
) -> Result<String, ExpandError> {
    if !task.is_generative() {
        return Err(ExpandError::NotGenerative(task));
    }
    nonempty(client.complete(&generation_prompt(instruction, seed_input), Decoding::EXPANSION, sample)?)
}

/// A paraphrase of `response`; the instruction it answers stays fixed.
pub fn rewrite_response(client: &Client, response: &str, sample: u64) -> Result<String, ExpandError> {
    if response.trim().is_empty() {
        return Err(ExpandError::EmptyResponse);
    }
    nonempty(client.complete(&directive_prompt(RESPONSE_REWRITE_PROMPT, response), Decoding::EXPANSION, sample)?)
}

struct Job {
    seed: usize,
    variant: usize,
    instruction: String,
    input: String,
    /// Response to rewrite (response rewriting only).
    response: String,
}

fn run_stage(
    client: &Client,
    seeds: &[InstructionPair],
    strategy: Strategy,
    jobs: Vec<Job>,
    rng_seed: u64,
    out: &mut [Vec<InstructionPair>],
    diagnostics: &mut Vec<ExpansionDiagnostic>,
) -> Option<String> {
    let results = map_bounded(&jobs, client.concurrency, |_, job| {
        let sample = rng_seed.wrapping_add(job.variant as u64);
        let task = seeds[job.seed].task;
        match strategy {
            Strategy::InstructionRewrite => rewrite_instruction_text(client, &job.instruction, sample),
            Strategy::ResponseGeneration => generate_response(client, task, &job.instruction, &job.input, sample),
            Strategy::ResponseRewrite => rewrite_response(client, &job.response, sample),
        }
    });
    let mut first_error = None;
    for (job, result) in jobs.into_iter().zip(results) {
        let seed = &seeds[job.seed];
        match result {
            Ok(text) => {
                let (instruction, output) = match strategy {
                    Strategy::InstructionRewrite => (text, seed.output.clone()),
                    _ => (job.instruction, text),
                };
                out[job.seed].push(InstructionPair {
                    id: variant_id(&seed.id, strategy, job.variant),
                    task: seed.task,
                    instruction,
                    input: seed.input.clone(),
                    output,
                    provenance: Provenance::expanded(strategy, &seed.id, &client.model),
                });
            }
            Err(e) => {
                first_error.get_or_insert_with(|| e.to_string());
                diagnostics.push(ExpansionDiagnostic {
                    seed_id: seed.id.clone(),
                    strategy,
                    variant: job.variant,
                    error: e.to_string(),
                });
            }
        }
    }
    first_error
}

/// Expand `seeds` per `plan`.
///
/// Calls run concurrently up to the client's bound in three stages
/// (instruction rewrites, then responses to the rewritten instructions, then
/// paraphrases of those responses). Output order is seed order, then
/// strategy, then variant index, independent of completion order. Response
/// generation `j` answers rewritten instruction `j` when it exists, else the
/// seed instruction; response rewrite `j` paraphrases generated response `j`
/// when it exists, else the seed output.
pub fn expand_corpus(client: &Client, seeds: &[InstructionPair], plan: &ExpansionPlan) -> Result<Expansion, ExpandError> {
    if seeds.is_empty() {
        return Err(ExpandError::EmptySeeds);
    }
    plan.validate()?;
    let mut by_strategy: BTreeMap<Strategy, Vec<Vec<InstructionPair>>> =
        Strategy::ALL.iter().map(|&s| (s, vec![Vec::new(); seeds.len()])).collect();
    let mut diagnostics = Vec::new();
    let mut attempted = 0;
    let mut first_error = None;

    for strategy in Strategy::ALL {
        let mut jobs = Vec::new();
        for (i, seed) in seeds.iter().enumerate() {
            if !plan.strategies_for(seed.task).contains(&strategy) {
                continue;
            }
            for j in 0..plan.variants.get(strategy) {
                let job = match strategy {
                    Strategy::InstructionRewrite => Job {
                        seed: i,
                        variant: j,
                        instruction: seed.instruction.clone(),
                        input: String::new(),
                        response: String::new(),
                    },
                    Strategy::ResponseGeneration => {
                        let rewrites = &by_strategy[&Strategy::InstructionRewrite][i];
                        let instruction = rewrites.get(j).map_or(&seed.instruction, |p| &p.instruction);
                        Job { seed: i, variant: j, instruction: instruction.clone(), input: seed.input.clone(), response: String::new() }
                    }
                    Strategy::ResponseRewrite => {
                        let generated = &by_strategy[&Strategy::ResponseGeneration][i];
                        let (instruction, response) = generated
                            .get(j)
                            .map_or((&seed.instruction, &seed.output), |p| (&p.instruction, &p.output));
                        Job { seed: i, variant: j, instruction: instruction.clone(), input: String::new(), response: response.clone() }
                    }
                };
                jobs.push(job);
            }
        }
        attempted += jobs.len();
        let out = by_strategy.get_mut(&strategy).expect("all strategies present");
        let err = run_stage(client, seeds, strategy, jobs, plan.rng_seed, out, &mut diagnostics);
        first_error = first_error.or(err);
    }

    if attempted > 0 && diagnostics.len() == attempted {
        return Err(ExpandError::AllCallsFailed { attempted, first: first_error.unwrap_or_default() });
    }
    diagnostics.sort_by(|a, b| {
        let pos = |d: &ExpansionDiagnostic| seeds.iter().position(|s| s.id == d.seed_id);
        (pos(a), a.strategy, a.variant).cmp(&(pos(b), b.strategy, b.variant))
    });
    let mut pairs = Vec::with_capacity(plan.expected_count(seeds));
    for (i, seed) in seeds.iter().enumerate() {
        pairs.push(seed.clone());
        for strategy in Strategy::ALL {
            pairs.extend(by_strategy[&strategy][i].iter().cloned());
        }
    }
    Ok(Expansion { pairs, diagnostics, attempted })
}

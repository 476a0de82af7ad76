//! The dataset commands: formulate → expand → curate.

use std::fs;
use std::path::Path;

use forge_core::curate::{
    balance, build_heldout_packs, canonical_jsonl, dedup_with_stats, heldout_leaks, load_jsonl, manifest_for,
    CurationConfig, DedupStats, HeldoutInputs, Manifest, PackKind,
};
use forge_core::eval::{EvalSample, Reference};
use forge_core::expand::{expand_corpus, ExpansionPlan};
use forge_core::formulate::{build_seed_set, count_by_task, instantiate, SeedSource};
use forge_core::ingest::{filter_by_action, load_interactions, load_qa_pairs, sidecar_path, split, LineDiagnostic, QaPair};
use forge_core::{InstructionPair, ProductRecord, TaskKind};
use serde::{Deserialize, Serialize};

use crate::backend::Connection;
use crate::error::{CliError, Outcome};
use crate::lock::RunLock;
use crate::manifest::RunRecorder;
use crate::Context;

pub const SEEDS_FILE: &str = "seeds.jsonl";
pub const EVAL_PROMPTS_FILE: &str = "eval_prompts.jsonl";
pub const EVAL_REFERENCES_FILE: &str = "eval_references.jsonl";
pub const EXPANDED_FILE: &str = "expanded.jsonl";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const DATASET_MANIFEST_FILE: &str = "dataset.manifest.json";
pub const HELDOUT_ADS_FILE: &str = "heldout_ads.jsonl";
pub const HELDOUT_REC_FILE: &str = "heldout_recommendation.jsonl";

/// What a model under evaluation is asked; its answer goes in a
/// `<task>.jsonl` generation file under the same id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPrompt {
    pub id: String,
    pub task: TaskKind,
    pub instruction: String,
    pub input: String,
}

/// `dataset.manifest.json`: the dataset manifest plus curation counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationReport {
    #[serde(flatten)]
    pub manifest: Manifest,
    pub input_pairs: usize,
    pub dedup: DedupStats,
}

/// Prompts and references for the held-out split: every applicable task
/// per record, then one Q&A sample per pair. Grouped by task.
pub fn eval_split(records: &[ProductRecord], qa: &[QaPair]) -> (Vec<EvalPrompt>, Vec<EvalSample>) {
    let mut prompts = Vec::new();
    let mut refs = Vec::new();
    for task in TaskKind::ALL {
        let sources: Vec<(String, SeedSource<'_>)> = if task == TaskKind::GeneralQa {
            qa.iter().map(|q| (q.id.clone(), SeedSource::Qa(q))).collect()
        } else {
            records.iter().map(|r| (r.id.clone(), SeedSource::Record(r))).collect()
        };
        for (source_id, source) in sources {
            let Ok(pair) = instantiate(task, source) else { continue };
            let id = format!("{}-{source_id}", task.as_str());
            let reference = match (task, source) {
                (TaskKind::AdsGeneration, SeedSource::Record(r)) => Reference::AdsGeneration {
                    title: r.title.clone(),
                    description: pair.output.clone(),
                },
                (TaskKind::TitleRewriting, SeedSource::Record(r)) => Reference::TitleRewriting {
                    title: r.title.clone(),
                    query: r.query.clone().unwrap_or_default(),
                },
                (TaskKind::ProductClassification, SeedSource::Record(r)) => {
                    Reference::ProductClassification { gold: r.taxonomy }
                }
                (TaskKind::IntentSpeculation, SeedSource::Record(r)) => Reference::IntentSpeculation { gold: r.taxonomy },
                (TaskKind::GeneralQa, SeedSource::Qa(q)) => Reference::GeneralQa { answer: q.answer.clone() },
                _ => unreachable!("sources are chosen per task"),
            };
            prompts.push(EvalPrompt { id: id.clone(), task, instruction: pair.instruction, input: pair.input });
            refs.push(EvalSample { id, reference });
        }
    }
    (prompts, refs)
}

fn record_diagnostics(
    rec: &mut RunRecorder,
    input: &Path,
    out_dir: &Path,
    diagnostics: &[LineDiagnostic],
) -> Result<Outcome, CliError> {
    if diagnostics.is_empty() {
        return Ok(Outcome::Clean);
    }
    let sidecar = sidecar_path(input, Some(out_dir));
    let name = sidecar.file_name().and_then(|n| n.to_str()).unwrap_or("input.errors.jsonl").to_string();
    rec.write(&name, canonical_jsonl(diagnostics).as_bytes())?;
    eprintln!("ingest: skipped {} malformed lines of {} (see {name})", diagnostics.len(), input.display());
    Ok(Outcome::Partial)
}

fn per_task_line(counts: &std::collections::BTreeMap<TaskKind, usize>) -> String {
    counts.iter().map(|(t, n)| format!("{t}={n}")).collect::<Vec<_>>().join(" ")
}

/// ingest → filter → split → seed set; also writes the held-out prompts and
/// references used by `evaluate`.
pub fn cmd_formulate(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let out = &cfg.paths.out_dir;
    let _lock = RunLock::acquire(out)?;
    let mut rec = RunRecorder::new("formulate", ctx.backend.as_str(), &ctx.config_sha256, out);

    let (records, qa) = rec.time("ingest", || -> Result<_, CliError> {
        let records = load_interactions(&cfg.paths.data_in).map_err(|e| CliError::stage("ingest", e))?;
        let qa = load_qa_pairs(&cfg.paths.qa_in).map_err(|e| CliError::stage("ingest", e))?;
        Ok((records, qa))
    })?;
    let mut outcome = record_diagnostics(&mut rec, &cfg.paths.data_in, out, &records.diagnostics)?;
    outcome = outcome.merge(record_diagnostics(&mut rec, &cfg.paths.qa_in, out, &qa.diagnostics)?);

    let kept = filter_by_action(&records.items);
    let ratio = cfg.pipeline.split_ratio;
    let rs = split(&kept, ratio, cfg.rng_seed).map_err(|e| CliError::stage("ingest", e))?;
    let qs = split(&qa.items, ratio, cfg.rng_seed).map_err(|e| CliError::stage("ingest", e))?;

    let seeds = rec
        .time("formulate", || build_seed_set(&rs.train, &qs.train, cfg.pipeline.seed_per_task, cfg.rng_seed))
        .map_err(|e| CliError::stage("formulate", e))?;
    rec.write(SEEDS_FILE, canonical_jsonl(&seeds).as_bytes())?;

    let (prompts, refs) = eval_split(&rs.test, &qs.test);
    rec.write(EVAL_PROMPTS_FILE, canonical_jsonl(&prompts).as_bytes())?;
    rec.write(EVAL_REFERENCES_FILE, canonical_jsonl(&refs).as_bytes())?;

    println!(
        "formulate: {} records ({} after action filter), {} Q&A pairs -> {} seeds [{}]; {} held-out eval samples",
        records.items.len(),
        kept.len(),
        qa.items.len(),
        seeds.len(),
        per_task_line(&count_by_task(&seeds)),
        refs.len()
    );
    rec.finish(outcome)?;
    Ok(outcome)
}

fn load_stage_input<T: for<'de> Deserialize<'de>>(stage: &'static str, path: &Path) -> Result<Vec<T>, CliError> {
    load_jsonl(path).map_err(|e| CliError::stage(stage, e))
}

/// Seeds → teacher-expanded pairs (seeds included) and per-call diagnostics.
pub fn cmd_expand(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let out = &cfg.paths.out_dir;
    let _lock = RunLock::acquire(out)?;
    let mut rec = RunRecorder::new("expand", ctx.backend.as_str(), &ctx.config_sha256, out);

    let seeds: Vec<InstructionPair> = load_stage_input("expand", &out.join(SEEDS_FILE))?;
    let conn = Connection::open(ctx.backend, &cfg.backend)?;
    let plan = ExpansionPlan { variants: cfg.pipeline.variants, rng_seed: cfg.rng_seed, ..ExpansionPlan::default() };
    let expected = plan.expected_count(&seeds);
    let result = rec.time("expand", || expand_corpus(&conn.client, &seeds, &plan));
    conn.close()?;
    let expansion = result.map_err(|e| CliError::stage("expand", e))?;

    rec.write(EXPANDED_FILE, canonical_jsonl(&expansion.pairs).as_bytes())?;
    rec.write(DIAGNOSTICS_FILE, canonical_jsonl(&expansion.diagnostics).as_bytes())?;
    println!(
        "expand: {} seeds -> {} pairs (expected {expected}); {} of {} teacher calls failed [{}]",
        seeds.len(),
        expansion.pairs.len(),
        expansion.diagnostics.len(),
        expansion.attempted,
        per_task_line(&count_by_task(&expansion.pairs))
    );
    let outcome = if expansion.is_partial() { Outcome::Partial } else { Outcome::Clean };
    rec.finish(outcome)?;
    Ok(outcome)
}

/// Dedup → per-task balance → dataset.jsonl with its manifest, plus the
/// held-out prompt packs when `paths.heldout_in` is set.
pub fn cmd_curate(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let out = &cfg.paths.out_dir;
    let _lock = RunLock::acquire(out)?;
    let mut rec = RunRecorder::new("curate", ctx.backend.as_str(), &ctx.config_sha256, out);

    let pairs: Vec<InstructionPair> = load_stage_input("curate", &out.join(EXPANDED_FILE))?;
    let (unique, stats) = rec.time("dedup", || dedup_with_stats(&pairs, cfg.pipeline.near_dup_threshold));
    let cc = CurationConfig {
        near_dup_threshold: cfg.pipeline.near_dup_threshold,
        target_total: cfg.pipeline.target_total,
        rng_seed: cfg.rng_seed,
        per_task: None,
    };
    let dataset = rec.time("balance", || balance(&unique, &cc)).map_err(|e| CliError::stage("curate", e))?;
    let text = canonical_jsonl(&dataset);
    rec.write(DATASET_FILE, text.as_bytes())?;
    let report = CurationReport { manifest: manifest_for(&dataset, text.as_bytes()), input_pairs: pairs.len(), dedup: stats };
    rec.write_json(DATASET_MANIFEST_FILE, &report)?;
    println!(
        "curate: {} pairs, {} exact and {} near duplicates removed -> {} [{}] sha256 {}",
        pairs.len(),
        report.dedup.exact_removed,
        report.dedup.near_removed,
        report.manifest.count,
        per_task_line(&report.manifest.per_task),
        report.manifest.sha256
    );

    if let Some(path) = &cfg.paths.heldout_in {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        let inputs: HeldoutInputs = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        for (kind, present, file) in [
            (PackKind::ScenarioAds, !inputs.scenarios.is_empty(), HELDOUT_ADS_FILE),
            (PackKind::Recommendation, !inputs.intents.is_empty(), HELDOUT_REC_FILE),
        ] {
            if !present {
                continue;
            }
            let pack = build_heldout_packs(kind, &inputs).map_err(|e| CliError::stage("curate", e))?;
            let leaks = heldout_leaks(&dataset, &pack);
            if !leaks.is_empty() {
                return Err(CliError::Verification(format!("held-out prompts also in the dataset: {}", leaks.join(", "))));
            }
            rec.write(file, canonical_jsonl(&pack).as_bytes())?;
            println!("curate: {} held-out prompts -> {file}", pack.len());
        }
    }
    rec.finish(Outcome::Clean)?;
    Ok(Outcome::Clean)
}

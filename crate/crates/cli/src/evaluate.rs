//! `evaluate`: score generation files, or replay stored per-metric rows.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use forge_core::curate::load_jsonl;
use forge_core::eval::{evaluate_run, render_table, EvalSample, Generation, MetricReport, MetricSettings, ReplayRow, Scorers};
use forge_core::TaskKind;
use serde::{Deserialize, Serialize};

use crate::backend::Connection;
use crate::error::{CliError, Outcome};
use crate::lock::RunLock;
use crate::manifest::RunRecorder;
use crate::pipeline::EVAL_REFERENCES_FILE;
use crate::Context;

pub const REPORT_FILE: &str = "report.json";
pub const TABLE_FILE: &str = "report.txt";
/// Allowed gap between a recomputed and a published aggregate.
pub const GM_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Default)]
pub struct EvaluateArgs {
    /// Directory holding `<task>.jsonl` generation files.
    pub generations: Option<PathBuf>,
    /// JSONL of stored per-metric rows.
    pub replay: Option<PathBuf>,
    /// Row label for a generations run; defaults to the directory name.
    pub model_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub report: MetricReport,
    #[serde(default)]
    pub reported_gm: Option<f64>,
    #[serde(default)]
    pub gm_delta: Option<f64>,
}

impl ReportRow {
    pub fn gm_matches(&self) -> bool {
        self.gm_delta.is_none_or(|d| d <= GM_TOLERANCE)
    }
}

/// Recompute every row's report and its distance to the published aggregate.
pub fn replay_rows(rows: &[ReplayRow]) -> Result<Vec<ReportRow>, CliError> {
    rows.iter()
        .map(|row| {
            let report = row.report().map_err(|e| CliError::Config(format!("replay row {}: {e}", row.model)))?;
            let gm_delta = match (report.gm, row.reported_gm) {
                (Some(g), Some(r)) => Some((g - r).abs()),
                _ => None,
            };
            Ok(ReportRow { model: row.model.clone(), report, reported_gm: row.reported_gm, gm_delta })
        })
        .collect()
}

/// Generation files present in `dir`, keyed by task. Absent files leave the
/// task out, which makes the report partial.
pub fn load_generations(dir: &Path) -> Result<BTreeMap<TaskKind, Vec<Generation>>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Config(format!("generations directory {} does not exist", dir.display())));
    }
    let mut out = BTreeMap::new();
    for task in TaskKind::ALL {
        let path = dir.join(format!("{}.jsonl", task.as_str()));
        if path.exists() {
            out.insert(task, load_jsonl(&path).map_err(|e| CliError::stage("evaluate", e))?);
        }
    }
    Ok(out)
}

fn write_reports(rec: &mut RunRecorder, rows: &[ReportRow]) -> Result<String, CliError> {
    let table = render_table(&rows.iter().map(|r| (r.model.clone(), r.report.clone())).collect::<Vec<_>>());
    rec.write_json(REPORT_FILE, &rows)?;
    rec.write(TABLE_FILE, table.as_bytes())?;
    Ok(table)
}

pub fn cmd_evaluate(ctx: &Context, args: &EvaluateArgs) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let out = &cfg.paths.out_dir;
    match (&args.generations, &args.replay) {
        (Some(_), Some(_)) | (None, None) => {
            return Err(CliError::Config("evaluate needs exactly one of --generations or --replay".into()))
        }
        _ => {}
    }
    let _lock = RunLock::acquire(out)?;
    let mut rec = RunRecorder::new("evaluate", ctx.backend.as_str(), &ctx.config_sha256, out);

    if let Some(path) = &args.replay {
        let rows: Vec<ReplayRow> = load_jsonl(path).map_err(|e| CliError::stage("evaluate", e))?;
        let rows = rec.time("replay", || replay_rows(&rows))?;
        print!("{}", write_reports(&mut rec, &rows)?);
        let mut bad = Vec::new();
        for r in &rows {
            if let (Some(g), Some(p), Some(d)) = (r.report.gm, r.reported_gm, r.gm_delta) {
                let verdict = if r.gm_matches() { "ok" } else { "MISMATCH" };
                println!("{:<12} GM {g:.4} reported {p:.2} |delta| {d:.4} {verdict}", r.model);
                if !r.gm_matches() {
                    bad.push(r.model.clone());
                }
            }
        }
        rec.finish(if bad.is_empty() { Outcome::Clean } else { Outcome::Partial })?;
        if !bad.is_empty() {
            return Err(CliError::Verification(format!("GM outside ±{GM_TOLERANCE} for {}", bad.join(", "))));
        }
        return Ok(Outcome::Clean);
    }

    let dir = args.generations.as_ref().expect("checked above");
    let samples: Vec<EvalSample> = load_jsonl(&out.join(EVAL_REFERENCES_FILE)).map_err(|e| CliError::stage("evaluate", e))?;
    let generations = load_generations(dir)?;
    let conn = Connection::open(ctx.backend, &cfg.backend)?;
    let scorers = Scorers {
        logprobs: conn.client.with_model(&cfg.backend.scorer_model),
        embeddings: conn.client.with_model(&cfg.backend.embedding_model),
    };
    let settings = MetricSettings { bleu_epsilon: cfg.metrics.bleu_epsilon, rouge_beta: cfg.metrics.rouge_beta };
    let result = rec.time("score", || evaluate_run(&samples, &generations, &scorers, settings));
    conn.close()?;
    let report = result.map_err(|e| CliError::stage("evaluate", e))?;
    let model = args.model_name.clone().unwrap_or_else(|| {
        dir.file_name().and_then(|n| n.to_str()).unwrap_or("model").to_string()
    });
    let partial = report.is_partial();
    if partial {
        let missing: Vec<&str> = report.missing_tasks.iter().map(|t| t.as_str()).collect();
        eprintln!("evaluate: no generations for {}; report is partial and has no GM", missing.join(", "));
    }
    print!("{}", write_reports(&mut rec, &[ReportRow { model, report, reported_gm: None, gm_delta: None }])?);
    let outcome = if partial { Outcome::Partial } else { Outcome::Clean };
    rec.finish(outcome)?;
    Ok(outcome)
}

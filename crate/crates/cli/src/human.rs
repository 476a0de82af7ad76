//! `human-eval`: A/B/C/D rate distributions from an annotation file.

use std::fmt::Write as _;
use std::path::PathBuf;

use forge_core::curate::load_jsonl;
use forge_core::eval::{human_eval_report, HumanEvalReport, HumanRating, Rate};

use crate::error::{CliError, Outcome};
use crate::lock::RunLock;
use crate::manifest::RunRecorder;
use crate::Context;

pub const HUMAN_REPORT_FILE: &str = "human_eval.json";

/// One line per rated task: count and the share of each rate in percent.
pub fn render_rates(report: &HumanEvalReport) -> String {
    let mut out = format!("{:<16} {:>5} {:>7} {:>7} {:>7} {:>7}\n", "task", "n", "A", "B", "C", "D");
    for (task, dist) in &report.per_task {
        let _ = write!(out, "{:<16} {:>5}", task.as_str(), dist.count);
        for rate in Rate::ALL {
            let f = dist.fractions.get(&rate).copied().unwrap_or(0.0);
            let _ = write!(out, " {:>6.1}%", 100.0 * f);
        }
        out.push('\n');
    }
    out
}

pub fn cmd_human_eval(ctx: &Context, ratings: Option<PathBuf>) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let path = ratings
        .or_else(|| cfg.paths.ratings_in.clone())
        .ok_or_else(|| CliError::Config("human-eval needs --ratings or paths.ratings_in".into()))?;
    let out = &cfg.paths.out_dir;
    let _lock = RunLock::acquire(out)?;
    let mut rec = RunRecorder::new("human-eval", ctx.backend.as_str(), &ctx.config_sha256, out);
    let rows: Vec<HumanRating> = load_jsonl(&path).map_err(|e| CliError::stage("human-eval", e))?;
    let report = human_eval_report(&rows).map_err(|e| CliError::stage("human-eval", e))?;
    print!("{}", render_rates(&report));
    rec.write_json(HUMAN_REPORT_FILE, &report)?;
    rec.finish(Outcome::Clean)?;
    Ok(Outcome::Clean)
}

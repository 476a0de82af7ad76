//! Evaluation: per-task text and label metrics, perplexity, the embedding
//! score, the geometric-mean aggregate and human-rating summaries.

pub mod aggregate;
pub mod human;
pub mod metrics;
pub mod run;

pub use aggregate::{geometric_mean, render_table, MetricReport, ReplayRow, METRIC_NAMES, N_METRICS, PPL_INDEX};
pub use human::{human_eval_report, HumanEvalReport, HumanRating, Rate};
pub use metrics::{bert_style_score, bleu, macro_prf, perplexity, ppl_transform, rouge_l, MetricError, Prf};
pub use run::{evaluate_run, EvalError, EvalSample, Generation, MetricSettings, Reference, Scorers};

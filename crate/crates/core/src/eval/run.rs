//! Scoring a model's generations for all five tasks into one report.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::aggregate::{metric_task, MetricReport, N_METRICS};
use super::metrics::{
    bert_style_score, bleu_with_epsilon, macro_prf, perplexity, rouge_l_with_beta, MetricError, DEFAULT_BLEU_EPSILON,
    DEFAULT_ROUGE_BETA,
};
use crate::modelio::{map_bounded, BackendError, Client};
use crate::taxonomy::{normalize_label, TaxonomyLabel};
use crate::text::{clean_text, tokenize};
use crate::types::TaskKind;

/// What a sample's generation is compared against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Reference {
    /// Ads are scored against the title and the description separately.
    AdsGeneration { title: String, description: String },
    /// Rewritten titles are scored against the raw title and the query.
    TitleRewriting { title: String, query: String },
    ProductClassification { gold: TaxonomyLabel },
    IntentSpeculation { gold: TaxonomyLabel },
    GeneralQa { answer: String },
}

impl Reference {
    pub fn task(&self) -> TaskKind {
        match self {
            Reference::AdsGeneration { .. } => TaskKind::AdsGeneration,
            Reference::TitleRewriting { .. } => TaskKind::TitleRewriting,
            Reference::ProductClassification { .. } => TaskKind::ProductClassification,
            Reference::IntentSpeculation { .. } => TaskKind::IntentSpeculation,
            Reference::GeneralQa { .. } => TaskKind::GeneralQa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSample {
    pub id: String,
    #[serde(flatten)]
    pub reference: Reference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub id: String,
    pub generation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSettings {
    pub bleu_epsilon: f64,
    pub rouge_beta: f64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings { bleu_epsilon: DEFAULT_BLEU_EPSILON, rouge_beta: DEFAULT_ROUGE_BETA }
    }
}

/// Backends for the model-based metrics: token logprobs for perplexity and
/// token vectors for the embedding score.
#[derive(Debug, Clone)]
pub struct Scorers {
    pub logprobs: Client,
    pub embeddings: Client,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{task}: no generation for sample {id}")]
    MissingSample { task: TaskKind, id: String },
    #[error("{task}: generation {id} has no reference sample")]
    UnknownSample { task: TaskKind, id: String },
    #[error("{task}: sample {id} appears more than once")]
    DuplicateSample { task: TaskKind, id: String },
    #[error("sample {id}: {source}")]
    Metric { id: String, source: MetricError },
    #[error("sample {id}: {source}")]
    Backend { id: String, source: BackendError },
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

struct TextScorer {
    settings: MetricSettings,
}

impl TextScorer {
    /// BLEU and ROUGE-L of `generation` against `reference`; an empty
    /// generation scores zero on both.
    fn score(&self, id: &str, generation: &[String], reference: &str) -> Result<(f64, f64), EvalError> {
        let r = tokenize(&clean_text(reference));
        if r.is_empty() {
            return Err(EvalError::Metric { id: id.into(), source: MetricError::EmptyReference });
        }
        if generation.is_empty() {
            return Ok((0.0, 0.0));
        }
        let wrap = |source| EvalError::Metric { id: id.into(), source };
        Ok((
            bleu_with_epsilon(generation, &r, self.settings.bleu_epsilon).map_err(wrap)?,
            rouge_l_with_beta(generation, &r, self.settings.rouge_beta).map_err(wrap)?,
        ))
    }
}

/// Pair each reference sample of `task` with its generation, in reference
/// order. The first reference without a generation is an error.
fn align<'a>(
    task: TaskKind,
    samples: &'a [EvalSample],
    generations: &'a [Generation],
) -> Result<Vec<(&'a EvalSample, &'a str)>, EvalError> {
    let mut by_id: HashMap<&str, &str> = HashMap::new();
    for g in generations {
        if by_id.insert(g.id.as_str(), g.generation.as_str()).is_some() {
            return Err(EvalError::DuplicateSample { task, id: g.id.clone() });
        }
    }
    let refs: Vec<&EvalSample> = samples.iter().filter(|s| s.reference.task() == task).collect();
    let mut out = Vec::with_capacity(refs.len());
    for s in refs {
        match by_id.remove(s.id.as_str()) {
            Some(g) => out.push((s, g)),
            None => return Err(EvalError::MissingSample { task, id: s.id.clone() }),
        }
    }
    if let Some(g) = generations.iter().find(|g| by_id.contains_key(g.id.as_str())) {
        return Err(EvalError::UnknownSample { task, id: g.id.clone() });
    }
    Ok(out)
}

/// Score every task and assemble the report.
///
/// Sentence metrics are computed per sample and averaged. A task with no
/// reference samples or no generations is listed in `missing_tasks`, its
/// columns stay empty and no aggregate is produced.
pub fn evaluate_run(
    samples: &[EvalSample],
    generations: &BTreeMap<TaskKind, Vec<Generation>>,
    scorers: &Scorers,
    settings: MetricSettings,
) -> Result<MetricReport, EvalError> {
    let text = TextScorer { settings };
    let mut report = MetricReport::default();
    for task in TaskKind::ALL {
        let gens = generations.get(&task).map(Vec::as_slice).unwrap_or(&[]);
        let has_refs = samples.iter().any(|s| s.reference.task() == task);
        if gens.is_empty() || !has_refs {
            report.missing_tasks.push(task);
            continue;
        }
        let aligned = align(task, samples, gens)?;
        let tokens: Vec<Vec<String>> = aligned.iter().map(|(_, g)| tokenize(&clean_text(g))).collect();
        let cols: Vec<usize> = (0..N_METRICS).filter(|&i| metric_task(i) == task).collect();
        let values: Vec<Option<f64>> = match task {
            TaskKind::AdsGeneration | TaskKind::TitleRewriting => {
                let mut acc = [Vec::new(), Vec::new(), Vec::new(), Vec::new()];
                for ((s, _), toks) in aligned.iter().zip(&tokens) {
                    let (first, second) = match &s.reference {
                        Reference::AdsGeneration { title, description } => (title, description),
                        Reference::TitleRewriting { title, query } => (title, query),
                        _ => unreachable!("aligned by task"),
                    };
                    let (b1, r1) = text.score(&s.id, toks, first)?;
                    let (b2, r2) = text.score(&s.id, toks, second)?;
                    for (slot, v) in acc.iter_mut().zip([b1, r1, b2, r2]) {
                        slot.push(v);
                    }
                }
                let mut v: Vec<Option<f64>> = acc.iter().map(|a| mean(a)).collect();
                if task == TaskKind::TitleRewriting {
                    v.push(mean_perplexity(&aligned, &scorers.logprobs)?);
                }
                v
            }
            TaskKind::ProductClassification | TaskKind::IntentSpeculation => {
                let gold: Vec<TaxonomyLabel> = aligned
                    .iter()
                    .map(|(s, _)| match s.reference {
                        Reference::ProductClassification { gold } | Reference::IntentSpeculation { gold } => gold,
                        _ => unreachable!("aligned by task"),
                    })
                    .collect();
                let pred: Vec<_> = aligned.iter().map(|(_, g)| normalize_label(g)).collect();
                let prf = macro_prf(&pred, &gold)
                    .map_err(|source| EvalError::Metric { id: aligned[0].0.id.clone(), source })?;
                vec![Some(prf.precision), Some(prf.recall), Some(prf.f1)]
            }
            TaskKind::GeneralQa => {
                let (mut bl, mut rl) = (Vec::new(), Vec::new());
                for ((s, _), toks) in aligned.iter().zip(&tokens) {
                    let Reference::GeneralQa { answer } = &s.reference else { unreachable!("aligned by task") };
                    let (b, r) = text.score(&s.id, toks, answer)?;
                    bl.push(b);
                    rl.push(r);
                }
                vec![mean(&bl), mean(&rl), mean_embedding_score(&aligned, &scorers.embeddings)?]
            }
        };
        for (c, v) in cols.into_iter().zip(values) {
            report.values[c] = v;
        }
    }
    report.assemble();
    Ok(report)
}

fn mean_perplexity(aligned: &[(&EvalSample, &str)], client: &Client) -> Result<Option<f64>, EvalError> {
    let results = map_bounded(aligned, client.concurrency, |_, (s, g)| {
        let g = clean_text(g);
        if g.is_empty() {
            return Ok(None);
        }
        let lp = client.score_logprobs(&g).map_err(|source| EvalError::Backend { id: s.id.clone(), source })?;
        perplexity(&lp).map(Some).map_err(|source| EvalError::Metric { id: s.id.clone(), source })
    });
    let ppl: Vec<f64> = results.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().flatten().collect();
    Ok(mean(&ppl))
}

fn mean_embedding_score(aligned: &[(&EvalSample, &str)], client: &Client) -> Result<Option<f64>, EvalError> {
    let results = map_bounded(aligned, client.concurrency, |_, (s, g)| {
        let Reference::GeneralQa { answer } = &s.reference else { unreachable!("aligned by task") };
        let g = clean_text(g);
        if g.is_empty() {
            return Ok(0.0);
        }
        let wrap = |source| EvalError::Backend { id: s.id.clone(), source };
        let cand = client.embed_tokens(&g).map_err(wrap)?;
        let refs = client.embed_tokens(&clean_text(answer)).map_err(wrap)?;
        bert_style_score(&cand, &refs)
            .map(|prf| prf.f1)
            .map_err(|source| EvalError::Metric { id: s.id.clone(), source })
    });
    Ok(mean(&results.into_iter().collect::<Result<Vec<_>, _>>()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::aggregate::METRIC_NAMES;
    use crate::modelio::{LogprobMode, MockBackend};
    use forge_oracles::oracle_geometric_mean;
    use std::sync::Arc;

    fn scorers() -> Scorers {
        let c = Client::new(Arc::new(MockBackend::synthetic().with_logprobs(LogprobMode::Fixed(-1.0))), "scorer");
        Scorers { logprobs: c.clone(), embeddings: c }
    }

    const TEXT: &str = "Himalayan pink salt lamp with wooden base";

    fn smoke() -> (Vec<EvalSample>, BTreeMap<TaskKind, Vec<Generation>>) {
        let samples = vec![
            EvalSample { id: "a".into(), reference: Reference::AdsGeneration { title: TEXT.into(), description: TEXT.into() } },
            EvalSample { id: "t".into(), reference: Reference::TitleRewriting { title: TEXT.into(), query: TEXT.into() } },
            EvalSample { id: "c".into(), reference: Reference::ProductClassification { gold: TaxonomyLabel::HomeAndLiving } },
            EvalSample { id: "i".into(), reference: Reference::IntentSpeculation { gold: TaxonomyLabel::HomeAndLiving } },
            EvalSample { id: "q".into(), reference: Reference::GeneralQa { answer: TEXT.into() } },
        ];
        let gen = |id: &str, g: &str| vec![Generation { id: id.into(), generation: g.into() }];
        let gens = BTreeMap::from([
            (TaskKind::AdsGeneration, gen("a", TEXT)),
            (TaskKind::TitleRewriting, gen("t", TEXT)),
            (TaskKind::ProductClassification, gen("c", "Home & Living")),
            (TaskKind::IntentSpeculation, gen("i", "The customer wants home and living items.")),
            (TaskKind::GeneralQa, gen("q", TEXT)),
        ]);
        (samples, gens)
    }

    #[test]
    fn smoke_set_scores_perfectly() {
        let (samples, gens) = smoke();
        let r = evaluate_run(&samples, &gens, &scorers(), MetricSettings::default()).unwrap();
        for (name, v) in METRIC_NAMES.iter().zip(&r.values) {
            let v = v.unwrap();
            if *name == "PPL" {
                assert!((v - std::f64::consts::E).abs() < 1e-12);
            } else {
                assert!((v - 100.0).abs() < 1e-9, "{name} = {v}");
            }
        }
        let mut inputs = [100.0; 18];
        inputs[8] = 1.0;
        assert!((r.gm.unwrap() - oracle_geometric_mean(&inputs)).abs() < 1e-9);
        assert!(!r.is_partial());
    }

    #[test]
    fn empty_task_gives_partial_report() {
        let (samples, mut gens) = smoke();
        gens.insert(TaskKind::GeneralQa, vec![]);
        let r = evaluate_run(&samples, &gens, &scorers(), MetricSettings::default()).unwrap();
        assert_eq!(r.missing_tasks, vec![TaskKind::GeneralQa]);
        assert_eq!(r.gm, None);
        assert!(r.get("BE_qa").is_none() && r.get("BL_At").is_some());
    }

    #[test]
    fn misaligned_ids_name_first_missing() {
        let (mut samples, mut gens) = smoke();
        samples.push(EvalSample { id: "a2".into(), reference: Reference::AdsGeneration { title: "x".into(), description: "y".into() } });
        samples.push(EvalSample { id: "a3".into(), reference: Reference::AdsGeneration { title: "x".into(), description: "y".into() } });
        assert_eq!(
            evaluate_run(&samples, &gens, &scorers(), MetricSettings::default()),
            Err(EvalError::MissingSample { task: TaskKind::AdsGeneration, id: "a2".into() })
        );
        samples.truncate(5);
        gens.get_mut(&TaskKind::GeneralQa).unwrap().push(Generation { id: "zz".into(), generation: "x".into() });
        assert!(matches!(
            evaluate_run(&samples, &gens, &scorers(), MetricSettings::default()),
            Err(EvalError::UnknownSample { id, .. }) if id == "zz"
        ));
    }

    #[test]
    fn empty_generation_scores_zero() {
        let (samples, mut gens) = smoke();
        gens.insert(TaskKind::AdsGeneration, vec![Generation { id: "a".into(), generation: "🔥".into() }]);
        let r = evaluate_run(&samples, &gens, &scorers(), MetricSettings::default()).unwrap();
        assert_eq!(r.get("BL_At"), Some(0.0));
        assert_eq!(r.gm, None);
    }

    #[test]
    fn sample_json_shape() {
        let (samples, _) = smoke();
        let j = serde_json::to_string(&samples[0]).unwrap();
        assert_eq!(j, format!(r#"{{"id":"a","task":"ads_generation","title":"{TEXT}","description":"{TEXT}"}}"#));
        assert_eq!(serde_json::from_str::<EvalSample>(&j).unwrap(), samples[0]);
    }
}

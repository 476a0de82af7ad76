//! Sentence-level text metrics, perplexity, label P/R/F1 and the
//! embedding-matching score. Percent-scale results lie on 0–100.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::modelio::TokenVector;
use crate::taxonomy::{Label, TaxonomyLabel};

pub const DEFAULT_BLEU_EPSILON: f64 = 1e-9;
pub const DEFAULT_ROUGE_BETA: f64 = 1.2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("candidate is empty")]
    EmptyCandidate,
    #[error("reference is empty")]
    EmptyReference,
    #[error("logprob sequence is empty")]
    EmptySequence,
    #[error("logprob at position {0} is positive or NaN")]
    PositiveLogprob(usize),
    #[error("perplexity {0} is not above 1")]
    PplAtOrBelowOne(f64),
    #[error("{predictions} predictions for {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("no samples")]
    EmptyInput,
    #[error("one side of the embedding match has no tokens")]
    EmptySide,
    #[error("vector width {found} differs from {expected}")]
    DimensionMismatch { expected: usize, found: usize },
}

/// Precision, recall and F1 on a 0–100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for g in tokens.windows(n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

pub fn bleu(candidate: &[String], reference: &[String]) -> Result<f64, MetricError> {
    bleu_with_epsilon(candidate, reference, DEFAULT_BLEU_EPSILON)
}

/// Sentence BLEU-4 with uniform weights and brevity penalty, ×100.
///
/// Each order's modified precision is `clipped / max(1, candidate n-grams)`;
/// a zero clipped count is replaced by `epsilon`.
pub fn bleu_with_epsilon(candidate: &[String], reference: &[String], epsilon: f64) -> Result<f64, MetricError> {
    if candidate.is_empty() {
        return Err(MetricError::EmptyCandidate);
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let mut log_p = 0.0;
    for n in 1..=4 {
        let cand = ngram_counts(candidate, n);
        let refc = ngram_counts(reference, n);
        let clipped: usize = cand.iter().map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0))).sum();
        let total = candidate.len().saturating_sub(n - 1).max(1);
        let numerator = if clipped == 0 { epsilon } else { clipped as f64 };
        log_p += 0.25 * (numerator / total as f64).ln();
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok(100.0 * bp * log_p.exp())
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn rouge_l(candidate: &[String], reference: &[String]) -> Result<f64, MetricError> {
    rouge_l_with_beta(candidate, reference, DEFAULT_ROUGE_BETA)
}

/// LCS F-measure `(1+β²)PR / (R + β²P)`, ×100.
pub fn rouge_l_with_beta(candidate: &[String], reference: &[String], beta: f64) -> Result<f64, MetricError> {
    if candidate.is_empty() {
        return Err(MetricError::EmptyCandidate);
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let lcs = lcs_len(candidate, reference) as f64;
    if lcs == 0.0 {
        return Ok(0.0);
    }
    let p = lcs / candidate.len() as f64;
    let r = lcs / reference.len() as f64;
    let b2 = beta * beta;
    Ok(100.0 * (1.0 + b2) * p * r / (r + b2 * p))
}

/// `exp(−mean logprob)` over natural-log token probabilities.
pub fn perplexity(token_logprobs: &[f64]) -> Result<f64, MetricError> {
    if token_logprobs.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    if let Some(i) = token_logprobs.iter().position(|&v| !(v <= 0.0)) {
        return Err(MetricError::PositiveLogprob(i));
    }
    let mean = token_logprobs.iter().sum::<f64>() / token_logprobs.len() as f64;
    Ok((-mean).exp())
}

/// `1 / ln(ppl)`: turns lower-is-better perplexity into a higher-is-better
/// positive value.
pub fn ppl_transform(ppl: f64) -> Result<f64, MetricError> {
    if !(ppl > 1.0) {
        return Err(MetricError::PplAtOrBelowOne(ppl));
    }
    Ok(1.0 / ppl.ln())
}

/// Macro-averaged precision, recall and F1 over the labels that occur in
/// `gold`. A label never predicted has precision 0; `Unmapped` never matches.
pub fn macro_prf(predictions: &[Label], gold: &[TaxonomyLabel]) -> Result<Prf, MetricError> {
    if predictions.len() != gold.len() {
        return Err(MetricError::LengthMismatch { predictions: predictions.len(), gold: gold.len() });
    }
    if gold.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let labels: BTreeSet<TaxonomyLabel> = gold.iter().copied().collect();
    let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
    for &l in &labels {
        let mut tp = 0usize;
        let mut predicted = 0usize;
        let mut actual = 0usize;
        for (p, &g) in predictions.iter().zip(gold) {
            let hit = *p == Label::Known(l);
            predicted += hit as usize;
            actual += (g == l) as usize;
            tp += (hit && g == l) as usize;
        }
        let p = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let r = tp as f64 / actual as f64;
        ps += p;
        rs += r;
        fs += harmonic(p, r);
    }
    let k = labels.len() as f64;
    Ok(Prf { precision: 100.0 * ps / k, recall: 100.0 * rs / k, f1: 100.0 * fs / k })
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Greedy cosine matching between token vectors: recall averages, over
/// reference tokens, the best similarity to any candidate token; precision
/// is the mirror image. No baseline rescaling; ×100.
pub fn bert_style_score(candidate: &[TokenVector], reference: &[TokenVector]) -> Result<Prf, MetricError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(MetricError::EmptySide);
    }
    let width = candidate[0].vector.len();
    if let Some(t) = candidate.iter().chain(reference).find(|t| t.vector.len() != width) {
        return Err(MetricError::DimensionMismatch { expected: width, found: t.vector.len() });
    }
    let sim: Vec<Vec<f64>> =
        candidate.iter().map(|c| reference.iter().map(|r| cosine(&c.vector, &r.vector)).collect()).collect();
    let p = sim.iter().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).sum::<f64>()
        / candidate.len() as f64;
    let r = (0..reference.len())
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / reference.len() as f64;
    Ok(Prf { precision: 100.0 * p, recall: 100.0 * r, f1: 100.0 * harmonic(p, r) })
}

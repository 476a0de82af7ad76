//! Straight-from-definition reference computations for tests.
//!
//! Nothing here shares code with `forge-core`; every function is written in
//! the most literal form of its definition, accepting O(n²) or worse cost.
//! Inputs are size-guarded so the oracles are never mistaken for production
//! code paths.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unic_ucd_category::GeneralCategory;

pub const MAX_TOKENS: usize = 100;
pub const MAX_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    InputTooLarge { what: &'static str, size: usize, limit: usize },
}

fn guard(what: &'static str, size: usize, limit: usize) -> Result<(), OracleError> {
    if size > limit {
        Err(OracleError::InputTooLarge { what, size, limit })
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------- text

/// Character-by-character category filter; removed code points become spaces.
pub fn oracle_clean_text(raw: &str) -> Result<String, OracleError> {
    guard("characters", raw.chars().count(), 100_000)?;
    let mut kept = String::new();
    for c in raw.chars() {
        let cp = c as u32;
        let selector = (0xFE00..=0xFE0F).contains(&cp) || (0xE0100..=0xE01EF).contains(&cp);
        let cat = GeneralCategory::of(c);
        let drop = selector
            || cat == GeneralCategory::OtherSymbol
            || cat == GeneralCategory::ModifierSymbol
            || cat == GeneralCategory::Control
            || cat == GeneralCategory::Format
            || cat == GeneralCategory::PrivateUse
            || cat == GeneralCategory::Surrogate;
        kept.push(if drop { ' ' } else { c });
    }
    let mut out = String::new();
    let mut pending_space = false;
    for c in kept.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    Ok(out)
}

fn is_punct(c: char) -> bool {
    GeneralCategory::of(c).is_punctuation()
}

/// Character-class splitter: words are maximal non-space runs; punctuation
/// at either end of a word is emitted one character at a time.
pub fn oracle_tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut words: Vec<Vec<char>> = vec![Vec::new()];
    for c in lower.chars() {
        if c.is_whitespace() {
            words.push(Vec::new());
        } else {
            words.last_mut().unwrap().push(c);
        }
    }
    let mut out = Vec::new();
    for mut w in words.into_iter().filter(|w| !w.is_empty()) {
        let mut head = Vec::new();
        while !w.is_empty() && is_punct(w[0]) {
            head.push(w.remove(0).to_string());
        }
        let mut tail = Vec::new();
        while !w.is_empty() && is_punct(w[w.len() - 1]) {
            tail.insert(0, w.pop().unwrap().to_string());
        }
        out.extend(head);
        if !w.is_empty() {
            out.push(w.into_iter().collect());
        }
        out.extend(tail);
    }
    out
}

const LABELS: [&str; 15] = [
    "clothing",
    "accessories",
    "home and living",
    "weddings",
    "art and collectibles",
    "craft supplies and tools",
    "jewelry",
    "paper and party supplies",
    "toys and games",
    "electronics and accessories",
    "books movies and music",
    "bath and beauty",
    "bags and purses",
    "shoes",
    "pet supplies",
];

/// Scan all fifteen phrases for a contiguous word hit; the longest hit (in
/// words) wins, earlier list position breaking ties.
pub fn oracle_label_scan(free_text: &str) -> Option<&'static str> {
    let mut norm = String::new();
    for c in free_text.to_lowercase().chars() {
        if c == '&' {
            norm.push_str(" and ");
        } else if is_punct(c) {
            norm.push(' ');
        } else {
            norm.push(c);
        }
    }
    let words: Vec<&str> = norm.split_whitespace().collect();
    let mut best: Option<(usize, &'static str)> = None;
    for label in LABELS {
        let lw: Vec<&str> = label.split(' ').collect();
        let mut hit = false;
        for start in 0..words.len() {
            if start + lw.len() <= words.len() && (0..lw.len()).all(|i| words[start + i] == lw[i]) {
                hit = true;
            }
        }
        if hit && best.is_none_or(|(n, _)| lw.len() > n) {
            best = Some((lw.len(), label));
        }
    }
    best.map(|(_, l)| l)
}

// ---------------------------------------------------------------- sampling

/// Fisher–Yates from the last index down, drawing `next_u64() % (i + 1)`.
pub fn oracle_shuffle(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<usize> = (0..n).collect();
    let mut i = n;
    while i > 1 {
        i -= 1;
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        v.swap(i, j);
    }
    v
}

/// Count occurrences of each key.
pub fn oracle_group_counts<K: Ord + Clone>(keys: &[K]) -> BTreeMap<K, usize> {
    let mut m = BTreeMap::new();
    for k in keys {
        *m.entry(k.clone()).or_insert(0) += 1;
    }
    m
}

// ---------------------------------------------------------------- n-gram metrics

fn count_ngram(seq: &[String], gram: &[String]) -> usize {
    if gram.len() > seq.len() {
        return 0;
    }
    (0..=seq.len() - gram.len()).filter(|&i| seq[i..i + gram.len()] == *gram).count()
}

/// Sentence BLEU-4: clipped n-gram precision per order, `epsilon` in place of
/// a zero numerator, denominator floored at one, brevity penalty, ×100.
pub fn oracle_bleu(candidate: &[String], reference: &[String], epsilon: f64) -> Result<f64, OracleError> {
    guard("candidate tokens", candidate.len(), MAX_TOKENS)?;
    guard("reference tokens", reference.len(), MAX_TOKENS)?;
    let mut log_sum = 0.0;
    for n in 1..=4usize {
        let mut seen: Vec<&[String]> = Vec::new();
        let mut clipped = 0usize;
        let mut total = 0usize;
        if candidate.len() >= n {
            for i in 0..=candidate.len() - n {
                let g = &candidate[i..i + n];
                total += 1;
                if seen.contains(&g) {
                    continue;
                }
                seen.push(g);
                clipped += count_ngram(candidate, g).min(count_ngram(reference, g));
            }
        }
        let num = if clipped == 0 { epsilon } else { clipped as f64 };
        let p = num / (total.max(1) as f64);
        log_sum += 0.25 * p.ln();
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok(100.0 * bp * log_sum.exp())
}

/// LCS length by memoized recursion over suffix pairs.
pub fn oracle_rouge_lcs(a: &[String], b: &[String]) -> Result<usize, OracleError> {
    guard("tokens", a.len().max(b.len()), MAX_TOKENS)?;
    fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    Ok(go(a, b, 0, 0, &mut HashMap::new()))
}

/// ROUGE-L F-measure with recall weight `beta`, ×100.
pub fn oracle_rouge_l(candidate: &[String], reference: &[String], beta: f64) -> Result<f64, OracleError> {
    let lcs = oracle_rouge_lcs(candidate, reference)? as f64;
    if lcs == 0.0 {
        return Ok(0.0);
    }
    let p = lcs / candidate.len() as f64;
    let r = lcs / reference.len() as f64;
    Ok(100.0 * (1.0 + beta * beta) * p * r / (r + beta * beta * p))
}

fn trigram_set(tokens: &[String]) -> HashSet<Vec<String>> {
    if tokens.len() < 3 {
        return std::iter::once(tokens.to_vec()).collect();
    }
    tokens.windows(3).map(|w| w.to_vec()).collect()
}

/// Token-trigram set Jaccard; sequences shorter than three tokens form a
/// single gram.
pub fn oracle_jaccard(a: &[String], b: &[String]) -> f64 {
    let sa = trigram_set(a);
    let sb = trigram_set(b);
    let inter = sa.iter().filter(|g| sb.contains(*g)).count();
    let union = sa.len() + sb.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Indices surviving greedy dedup: an item is kept unless it equals, or (for
/// `threshold < 1`) has Jaccard ≥ `threshold` with, some already-kept item.
pub fn oracle_dedup_survivors(texts: &[Vec<String>], threshold: f64) -> Result<Vec<usize>, OracleError> {
    guard("items", texts.len(), 2_000)?;
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..texts.len() {
        let dup = kept.iter().any(|&j| {
            texts[i] == texts[j] || (threshold < 1.0 && oracle_jaccard(&texts[i], &texts[j]) >= threshold)
        });
        if !dup {
            kept.push(i);
        }
    }
    Ok(kept)
}

/// Largest pairwise Jaccard among `texts`, plus whether any exact pair exists.
pub fn oracle_max_pairwise_jaccard(texts: &[Vec<String>]) -> Result<(f64, bool), OracleError> {
    guard("items", texts.len(), 2_000)?;
    let sets: Vec<HashSet<Vec<String>>> = texts.iter().map(|t| trigram_set(t)).collect();
    let mut max = 0.0f64;
    let mut exact = false;
    for i in 0..texts.len() {
        for j in i + 1..texts.len() {
            exact |= texts[i] == texts[j];
            let inter = sets[i].intersection(&sets[j]).count();
            let union = sets[i].len() + sets[j].len() - inter;
            max = max.max(inter as f64 / union as f64);
        }
    }
    Ok((max, exact))
}

// ---------------------------------------------------------------- scalar metrics

/// Perplexity as a product of per-token inverse probabilities to the 1/N.
pub fn oracle_perplexity(logprobs: &[f64]) -> Result<f64, OracleError> {
    guard("tokens", logprobs.len(), MAX_TOKENS)?;
    let n = logprobs.len() as f64;
    Ok(logprobs.iter().map(|lp| (-lp / n).exp()).product())
}

/// Geometric mean as an N-th root of the product.
pub fn oracle_geometric_mean(values: &[f64]) -> f64 {
    values.iter().product::<f64>().powf(1.0 / values.len() as f64)
}

/// Macro precision/recall/F1 from an explicit confusion matrix.
///
/// Labels are `0..n_labels`; `None` predictions land in an extra column that
/// never counts as correct. Averages run over labels that occur in gold.
pub fn oracle_confusion_prf(
    predictions: &[Option<usize>],
    gold: &[usize],
    n_labels: usize,
) -> Result<(f64, f64, f64), OracleError> {
    guard("samples", gold.len(), 1_000)?;
    let mut m = vec![vec![0usize; n_labels + 1]; n_labels];
    for (p, &g) in predictions.iter().zip(gold) {
        m[g][p.unwrap_or(n_labels)] += 1;
    }
    let (mut ps, mut rs, mut fs, mut k) = (0.0, 0.0, 0.0, 0.0);
    for l in 0..n_labels {
        let actual: usize = m[l].iter().sum();
        if actual == 0 {
            continue;
        }
        let predicted: usize = (0..n_labels).map(|g| m[g][l]).sum();
        let tp = m[l][l] as f64;
        let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let r = tp / actual as f64;
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        ps += p;
        rs += r;
        fs += f;
        k += 1.0;
    }
    Ok((100.0 * ps / k, 100.0 * rs / k, 100.0 * fs / k))
}

/// Cosine similarity; a zero vector is similar to nothing (0).
fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Greedy cosine matching from the full similarity matrix: precision takes
/// the row maxima, recall the column maxima. Returns (P, R, F1) ×100.
pub fn oracle_bert(candidate: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<(f64, f64, f64), OracleError> {
    guard("candidate tokens", candidate.len(), MAX_TOKENS)?;
    guard("reference tokens", reference.len(), MAX_TOKENS)?;
    let sim: Vec<Vec<f64>> = candidate.iter().map(|c| reference.iter().map(|r| cosine(c, r)).collect()).collect();
    let mut p = 0.0;
    for row in &sim {
        let mut best = f64::NEG_INFINITY;
        for &s in row {
            if s > best {
                best = s;
            }
        }
        p += best;
    }
    p /= candidate.len() as f64;
    let mut r = 0.0;
    for j in 0..reference.len() {
        let mut best = f64::NEG_INFINITY;
        for row in &sim {
            if row[j] > best {
                best = row[j];
            }
        }
        r += best;
    }
    r /= reference.len() as f64;
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Ok((100.0 * p, 100.0 * r, 100.0 * f))
}

// ---------------------------------------------------------------- linear algebra

pub type Dense = Vec<Vec<f64>>;

fn dims(m: &Dense) -> (usize, usize) {
    (m.len(), m.first().map_or(0, Vec::len))
}

fn guard_matrix(m: &Dense) -> Result<(), OracleError> {
    let (r, c) = dims(m);
    guard("matrix rows", r, MAX_DIM)?;
    guard("matrix cols", c, MAX_DIM)
}

pub fn oracle_matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k) = dims(a);
    let m = dims(b).1;
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for t in 0..k {
                out[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    out
}

/// Materialize `W0 + B·A` and multiply by `x`.
pub fn oracle_dense_lora(w0: &Dense, a: &Dense, b: &Dense, x: &[f64]) -> Result<Vec<f64>, OracleError> {
    for m in [w0, a, b] {
        guard_matrix(m)?;
    }
    let ba = oracle_matmul(b, a);
    let w: Dense = w0
        .iter()
        .zip(&ba)
        .map(|(r0, r1)| r0.iter().zip(r1).map(|(p, q)| p + q).collect())
        .collect();
    Ok(w.iter().map(|row| row.iter().zip(x).map(|(w, x)| w * x).sum()).collect())
}

/// Central finite differences of `f` at `params`.
pub fn oracle_fd_gradient(f: impl Fn(&[f64]) -> f64, params: &[f64], eps: f64) -> Result<Vec<f64>, OracleError> {
    guard("parameters", params.len(), MAX_DIM * MAX_DIM)?;
    let mut p = params.to_vec();
    let mut g = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = p[i];
        p[i] = orig + eps;
        let up = f(&p);
        p[i] = orig - eps;
        let down = f(&p);
        p[i] = orig;
        g.push((up - down) / (2.0 * eps));
    }
    Ok(g)
}

/// Smallest achievable ½‖M − L‖²_F over rank-`r` matrices L: half the sum of
/// the discarded eigenvalues of MᵀM, found by power iteration with deflation.
pub fn oracle_rank_r_residual(m: &Dense, r: usize) -> Result<f64, OracleError> {
    guard_matrix(m)?;
    let (rows, cols) = dims(m);
    let mut g = vec![vec![0.0; cols]; cols];
    for i in 0..cols {
        for j in 0..cols {
            g[i][j] = (0..rows).map(|t| m[t][i] * m[t][j]).sum();
        }
    }
    let total: f64 = (0..cols).map(|i| g[i][i]).sum();
    let mut captured = 0.0;
    for k in 0..r.min(cols) {
        let mut v: Vec<f64> = (0..cols).map(|i| 1.0 + ((i * 7 + k * 13) % 11) as f64 / 10.0).collect();
        let mut lambda = 0.0;
        for _ in 0..5_000 {
            let w: Vec<f64> = (0..cols).map(|i| (0..cols).map(|j| g[i][j] * v[j]).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                lambda = 0.0;
                break;
            }
            v = w.iter().map(|x| x / norm).collect();
            lambda = norm;
        }
        captured += lambda;
        for i in 0..cols {
            for j in 0..cols {
                g[i][j] -= lambda * v[i] * v[j];
            }
        }
    }
    Ok(0.5 * (total - captured).max(0.0))
}

/// Sample mean and unbiased variance.
pub fn oracle_moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

// ---------------------------------------------------------------- human ratings

/// Per-task fraction of each rate letter, by direct counting.
pub fn oracle_rate_fractions(ratings: &[(String, char)]) -> BTreeMap<String, [f64; 4]> {
    let mut counts: BTreeMap<String, [usize; 4]> = BTreeMap::new();
    for (task, rate) in ratings {
        let slot = match rate {
            'A' => 0,
            'B' => 1,
            'C' => 2,
            _ => 3,
        };
        counts.entry(task.clone()).or_default()[slot] += 1;
    }
    counts
        .into_iter()
        .map(|(t, c)| {
            let n: usize = c.iter().sum();
            (t, c.map(|x| x as f64 / n as f64))
        })
        .collect()
}

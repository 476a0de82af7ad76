//! Four-level human ratings of generated ads and rewritten titles.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::types::TaskKind;

/// A: persuasive and covers the essential product or query features.
/// B: covers the features but reads flat. C: fluent but drops features.
/// D: not understandable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rate {
    A,
    B,
    C,
    D,
}

impl Rate {
    pub const ALL: [Rate; 4] = [Rate::A, Rate::B, Rate::C, Rate::D];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HumanRating {
    pub annotator: String,
    pub sample_id: String,
    pub task: TaskKind,
    pub rate: Rate,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HumanEvalError {
    #[error("annotator {annotator} rated sample {sample_id} more than once")]
    DuplicateRating { annotator: String, sample_id: String },
    #[error("{0} is not a human-rated task")]
    UnratedTask(TaskKind),
    #[error("no ratings")]
    Empty,
}

/// Share of each rate among one task's ratings; the four fractions sum to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateDistribution {
    pub count: usize,
    pub fractions: BTreeMap<Rate, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanEvalReport {
    pub per_task: BTreeMap<TaskKind, RateDistribution>,
    /// Ratings per annotator and rate, for auditing.
    pub per_annotator: BTreeMap<String, BTreeMap<Rate, usize>>,
}

pub fn human_eval_report(ratings: &[HumanRating]) -> Result<HumanEvalReport, HumanEvalError> {
    if ratings.is_empty() {
        return Err(HumanEvalError::Empty);
    }
    let mut seen = HashSet::new();
    let mut counts: BTreeMap<TaskKind, BTreeMap<Rate, usize>> = BTreeMap::new();
    let mut per_annotator: BTreeMap<String, BTreeMap<Rate, usize>> = BTreeMap::new();
    for r in ratings {
        if !matches!(r.task, TaskKind::AdsGeneration | TaskKind::TitleRewriting) {
            return Err(HumanEvalError::UnratedTask(r.task));
        }
        if !seen.insert((r.annotator.as_str(), r.sample_id.as_str())) {
            return Err(HumanEvalError::DuplicateRating { annotator: r.annotator.clone(), sample_id: r.sample_id.clone() });
        }
        *counts.entry(r.task).or_default().entry(r.rate).or_default() += 1;
        let a = per_annotator.entry(r.annotator.clone()).or_insert_with(|| Rate::ALL.iter().map(|&x| (x, 0)).collect());
        *a.entry(r.rate).or_default() += 1;
    }
    let per_task = counts
        .into_iter()
        .map(|(task, c)| {
            let count: usize = c.values().sum();
            let fractions = Rate::ALL
                .iter()
                .map(|&rate| (rate, c.get(&rate).copied().unwrap_or(0) as f64 / count as f64))
                .collect();
            (task, RateDistribution { count, fractions })
        })
        .collect();
    Ok(HumanEvalReport { per_task, per_annotator })
}

#[cfg(test)]
mod tests {
    use super::*;
    use forge_oracles::oracle_rate_fractions;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rating(annotator: &str, sample: usize, task: TaskKind, rate: Rate) -> HumanRating {
        HumanRating { annotator: annotator.into(), sample_id: format!("s{sample}"), task, rate }
    }

    #[test]
    fn all_a() {
        let rs: Vec<HumanRating> = (0..10).map(|i| rating("x", i, TaskKind::AdsGeneration, Rate::A)).collect();
        let rep = human_eval_report(&rs).unwrap();
        let d = &rep.per_task[&TaskKind::AdsGeneration];
        assert_eq!(d.fractions.values().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn duplicates_and_task_guard() {
        let rs = [rating("x", 1, TaskKind::AdsGeneration, Rate::A), rating("x", 1, TaskKind::AdsGeneration, Rate::B)];
        assert_eq!(
            human_eval_report(&rs),
            Err(HumanEvalError::DuplicateRating { annotator: "x".into(), sample_id: "s1".into() })
        );
        assert!(human_eval_report(&[rating("y", 1, TaskKind::GeneralQa, Rate::A)]).is_err());
        assert_eq!(human_eval_report(&[]), Err(HumanEvalError::Empty));
    }

    #[test]
    fn hundred_ratings_match_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rs: Vec<HumanRating> = (0..100)
            .map(|i| {
                let task = if i % 3 == 0 { TaskKind::TitleRewriting } else { TaskKind::AdsGeneration };
                rating(&format!("ann{}", i % 4), i, task, Rate::ALL[rng.random_range(0..4)])
            })
            .collect();
        let rep = human_eval_report(&rs).unwrap();
        let letters = |r: Rate| match r { Rate::A => 'A', Rate::B => 'B', Rate::C => 'C', Rate::D => 'D' };
        let want = oracle_rate_fractions(&rs.iter().map(|r| (r.task.as_str().to_string(), letters(r.rate))).collect::<Vec<_>>());
        for (task, dist) in &rep.per_task {
            assert_eq!(dist.fractions.values().copied().collect::<Vec<_>>(), want[task.as_str()].to_vec());
            assert!((dist.fractions.values().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(rep.per_annotator.values().flat_map(|m| m.values()).sum::<usize>(), 100);
    }
}
